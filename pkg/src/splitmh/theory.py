"""Closed-form predictions for acceptance rates, jump sizes and tuning.

For a symmetric splitting that is a function of the target precision, the
log Metropolis-Hastings ratio decomposes over eigenmodes into quadratic
polynomials of two independent standard normals (the equilibrium fluctuation
and the proposal noise).  The six polynomial coefficients per mode determine
everything computed here: the mean and variance of the log ratio, the
expected acceptance rate through the Gaussian limit formula, per-direction
expected squared jump sizes with a computable error bound, scaling-limit
acceptance curves per proposal family, and the optimal tuning constants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import log_ndtr, ndtr

from splitmh.model import GaussianTarget
from splitmh.splitting import Ar1Proposal, MatrixSplitting, ar1_to_splitting

logger = logging.getLogger(__name__)


class TheoryUnavailable(ValueError):
    """Closed-form predictions need per-mode (spectral) data."""


@dataclass(frozen=True)
class ModeTerms:
    """Per-mode ingredients of the log acceptance ratio.

    With the chain in equilibrium, mode i of the log MH ratio equals

        const_term
        + chain_noise_lin * xi + prop_noise_lin * nu
        + chain_noise_quad * xi^2 + prop_noise_quad * nu^2
        + cross_term * xi * nu

    for independent standard normals xi (equilibrium fluctuation) and nu
    (proposal noise).  All fields are vectors over modes.
    """

    inv_std: np.ndarray          # sqrt of target precision eigenvalues
    limit_inv_std: np.ndarray    # sqrt of proposal-limit precision eigenvalues
    gain: np.ndarray             # per-mode AR(1) multiplier
    target_mean: np.ndarray      # target mean, eigenbasis coordinates
    limit_mean: np.ndarray       # proposal-limit mean, eigenbasis coordinates
    one_minus_gain: np.ndarray
    one_minus_gain_sq: np.ndarray  # 1 - gain^2
    precision_gap: np.ndarray      # (target - limit precision) / target precision
    precision_ratio: np.ndarray    # target precision / limit precision
    mean_gap: np.ndarray           # target mean - limit mean
    const_term: np.ndarray
    chain_noise_lin: np.ndarray
    prop_noise_lin: np.ndarray
    chain_noise_quad: np.ndarray
    prop_noise_quad: np.ndarray
    cross_term: np.ndarray

    @property
    def dim(self) -> int:
        return self.inv_std.size

    @property
    def mode_mean(self) -> np.ndarray:
        """Expected per-mode contribution to the log ratio."""
        return self.const_term + self.chain_noise_quad + self.prop_noise_quad

    @property
    def mode_var(self) -> np.ndarray:
        """Per-mode variance of the log-ratio contribution."""
        return (
            self.chain_noise_lin**2
            + self.prop_noise_lin**2
            + 2.0 * self.chain_noise_quad**2
            + 2.0 * self.prop_noise_quad**2
            + self.cross_term**2
        )

    def noise_coefficients(self) -> np.ndarray:
        """The five noise-coefficient vectors stacked as shape (5, dim).

        Order: linear chain, linear proposal, quadratic chain, quadratic
        proposal, cross.  The constant term carries no randomness and is
        excluded (it plays no role in the normality condition).
        """
        return np.stack(
            [
                self.chain_noise_lin,
                self.prop_noise_lin,
                self.chain_noise_quad,
                self.prop_noise_quad,
                self.cross_term,
            ]
        )


def mode_terms(target: GaussianTarget, proposal) -> ModeTerms:
    """Per-mode log-ratio coefficients for a proposal on a Gaussian target.

    ``proposal`` may be an :class:`Ar1Proposal` with a spectral form (its
    splitting is derived as needed) or a :class:`MatrixSplitting` with a
    spectral form.  Raises :class:`TheoryUnavailable` otherwise, e.g. for
    dense non-commuting proposals.
    """
    if isinstance(proposal, Ar1Proposal):
        if proposal.spectral_form is None:
            raise TheoryUnavailable("proposal has no spectral form")
        gain = proposal.spectral_form.gain
        splitting = ar1_to_splitting(proposal)
    elif isinstance(proposal, MatrixSplitting):
        splitting = proposal
        if splitting.spectral_form is None:
            raise TheoryUnavailable("splitting has no spectral form")
        sf = splitting.spectral_form
        with np.errstate(invalid="ignore"):
            gain = np.where(
                np.isfinite(sf.m_diag), sf.n_diag / sf.m_diag, 1.0
            )
    else:
        raise TypeError(f"unsupported proposal type {type(proposal)!r}")
    sf = splitting.spectral_form
    if sf is None:
        raise TheoryUnavailable("splitting has no spectral form")
    lam_sq = target.spectrum.eigenvalues
    if sf.dim != lam_sq.size:
        raise ValueError("proposal and target dimensions differ")
    limit_prec = sf.limit_precision
    lam = np.sqrt(lam_sq)
    limit_lam = np.sqrt(limit_prec)
    target_mean = target.eigen_mean
    limit_mean = sf.offset / limit_prec
    one_minus_gain = 1.0 - gain
    one_minus_gain_sq = 1.0 - gain**2
    precision_gap = (lam_sq - limit_prec) / lam_sq
    precision_ratio = lam_sq / limit_prec
    mean_gap = target_mean - limit_mean
    # Shorthand mirrors the algebra; the coefficients below are exact.
    r, rt, rh = precision_gap, precision_ratio, mean_gap
    gt, g = one_minus_gain, one_minus_gain_sq
    root = np.sqrt(rt * g)
    return ModeTerms(
        inv_std=lam,
        limit_inv_std=limit_lam,
        gain=gain,
        target_mean=target_mean,
        limit_mean=limit_mean,
        one_minus_gain=gt,
        one_minus_gain_sq=g,
        precision_gap=r,
        precision_ratio=rt,
        mean_gap=rh,
        const_term=rh**2 * lam_sq * (0.5 * r * g - gt),
        chain_noise_lin=rh * lam * (r * g - gt),
        prop_noise_lin=rh * lam * root * (1.0 - r * gain),
        chain_noise_quad=0.5 * r * g,
        prop_noise_quad=-0.5 * r * rt * g,
        cross_term=-r * gain * root,
    )


def expected_acceptance(mu, sigma):
    """Expected value of ``min(1, exp(X))`` for ``X ~ N(mu, sigma^2)``.

    Equals ``Phi(mu/sigma) + exp(mu + sigma^2/2) Phi(-sigma - mu/sigma)``.
    The second term is evaluated in the log domain (scaled complementary
    error function under the hood), which keeps it finite for any mu and
    sigma even though the naive product overflows.  ``sigma = 0`` returns
    ``min(1, exp(mu))``.  Scalar or array arguments.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sigma > 0, mu / np.where(sigma > 0, sigma, 1.0), 0.0)
        log_second = mu + 0.5 * sigma**2 + log_ndtr(-sigma - ratio)
        smooth = ndtr(ratio) + np.exp(log_second)
        degenerate = np.minimum(1.0, np.exp(np.minimum(mu, 0.0)))
    value = np.where(sigma > 0, smooth, degenerate)
    value = np.clip(value, 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class TheorySummary:
    """Aggregate predictions for one proposal/target pair."""

    mu: float
    sigma_sq: float
    expected_acceptance: float
    jump_u1: np.ndarray
    jump_u2: np.ndarray
    jump_u3: np.ndarray
    lyapunov_ratios: np.ndarray

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def jump_prediction(self) -> np.ndarray:
        """Predicted per-direction expected squared jump, U1 * U2."""
        return self.jump_u1 * self.jump_u2


def jump_size_prediction(terms: ModeTerms) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-direction squared-jump prediction factors (U1, U2, U3).

    U1 is the expected squared proposal displacement in the direction, U2 the
    expected acceptance with that mode excluded (computed by exact exclusion
    of the mode from the mean/variance sums, not by approximation), and U3
    bounds the coupling error: the prediction is U1*U2 with error at most U3
    plus terms of smaller order than U1.
    """
    mode_mean = terms.mode_mean
    mode_var = terms.mode_var
    mu_minus = mode_mean.sum() - mode_mean
    var_minus = np.maximum(mode_var.sum() - mode_var, 0.0)
    gt_sq = terms.one_minus_gain**2
    u1 = (
        gt_sq * terms.mean_gap**2
        + gt_sq / terms.inv_std**2
        + terms.one_minus_gain_sq / terms.limit_inv_std**2
    )
    u2 = expected_acceptance(mu_minus, np.sqrt(var_minus))
    inner = (
        gt_sq**2 * terms.mean_gap**4
        + 3.0 / terms.inv_std**4 * (gt_sq + terms.precision_ratio * terms.one_minus_gain_sq) ** 2
        + 6.0
        / terms.inv_std**2
        * terms.mean_gap**2
        * gt_sq
        * (gt_sq + terms.precision_ratio * terms.one_minus_gain_sq)
    )
    u3 = np.sqrt(mode_var + mode_mean**2) * np.sqrt(inner)
    return u1, np.atleast_1d(u2), u3


def lyapunov_diagnostic(terms: ModeTerms, delta: float = 1.0) -> np.ndarray:
    """Normality-condition ratios for the five noise coefficient vectors.

    Each ratio is ``sum |T|^(2+delta) / (sum T^2)^(1+delta/2)``; the Gaussian
    limit of the log ratio requires them to vanish as dimension grows, so
    experiments check they shrink along a dimension sweep.  All-zero
    coefficient vectors report 0.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    coeffs = np.abs(terms.noise_coefficients())
    sum_sq = np.sum(coeffs**2, axis=1)
    sum_pd = np.sum(coeffs ** (2.0 + delta), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = sum_pd / sum_sq ** (1.0 + 0.5 * delta)
    return np.where(sum_sq > 0, ratios, 0.0)


def summarize(terms: ModeTerms, delta: float = 1.0) -> TheorySummary:
    """Bundle all closed-form predictions for one proposal/target pair."""
    mu = float(terms.mode_mean.sum())
    sigma_sq = float(terms.mode_var.sum())
    u1, u2, u3 = jump_size_prediction(terms)
    return TheorySummary(
        mu=mu,
        sigma_sq=sigma_sq,
        expected_acceptance=expected_acceptance(mu, math.sqrt(sigma_sq)),
        jump_u1=u1,
        jump_u2=u2,
        jump_u3=u3,
        lyapunov_ratios=lyapunov_diagnostic(terms, delta),
    )


# ---------------------------------------------------------------------------
# Scaling limits (dimension -> infinity with the step size tied to dimension)
# ---------------------------------------------------------------------------


def sla_limit(l: float, tau: float) -> tuple[float, float]:
    """Limiting acceptance and jump-per-step-size for the explicit scheme.

    With step size ``l^2 d^(-1/3 - 2 kappa)`` the acceptance converges to
    ``2 Phi(-l^3 sqrt(tau) / 8)`` and the squared jump per direction is the
    step size times the same factor (returned per unit step size).
    """
    if l <= 0 or tau <= 0:
        raise ValueError("l and tau must be > 0")
    acceptance = 2.0 * ndtr(-(l**3) * math.sqrt(tau) / 8.0)
    return float(acceptance), float(acceptance)


def genlang_limit(l: float, tau: float, theta: float) -> float:
    """Limiting acceptance of the semi-implicit family.

    ``2 Phi(-l^3 |theta - 1/2| sqrt(tau) / 4)``; equal to the explicit-scheme
    limit at theta in {0, 1} and identically 1 at theta = 1/2.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    if l <= 0 or tau <= 0:
        raise ValueError("l and tau must be > 0")
    return float(2.0 * ndtr(-(l**3) * abs(theta - 0.5) * math.sqrt(tau) / 4.0))


def lstep_limit(l: float, tau: float, n_compositions: int) -> tuple[float, float]:
    """Limiting acceptance and jump-per-step-size of the L-step composition.

    Acceptance ``2 Phi(-l^3 sqrt(L tau) / 8)`` — a function of l^6 L tau
    only — and squared jump ``2 L h Phi(...)`` per direction (returned per
    unit step size h).
    """
    L = int(n_compositions)
    if L < 1:
        raise ValueError(f"need n_compositions >= 1, got {L}")
    if l <= 0 or tau <= 0:
        raise ValueError("l and tau must be > 0")
    phi_term = float(ndtr(-(l**3) * math.sqrt(L * tau) / 8.0))
    return 2.0 * phi_term, 2.0 * L * phi_term


def hmc_limit(
    l: float, tau_weighted: float, inv_std: np.ndarray, total_time: float
) -> tuple[float, np.ndarray]:
    """Limiting acceptance and per-direction jump for the Hamiltonian family.

    With step size ``l d^(-1/4 - kappa)`` and integration time ``total_time``
    the acceptance converges to ``a = 2 Phi(-l^2 sqrt(tau_weighted) / 8)``
    where ``tau_weighted`` carries the ``sin^2(lambda_i T')`` weight, and the
    squared jump in eigendirection i converges to
    ``2 (1 - cos(lambda_i T')) / lambda_i^2 * a``: zero exactly when the
    integrator returns to its start (``lambda_i T'`` a multiple of 2 pi).
    """
    if l <= 0 or tau_weighted <= 0:
        raise ValueError("l and tau_weighted must be > 0")
    lam = np.asarray(inv_std, dtype=float)
    acceptance = float(2.0 * ndtr(-(l**2) * math.sqrt(tau_weighted) / 8.0))
    jump = 2.0 * (1.0 - np.cos(lam * total_time)) / lam**2 * acceptance
    return acceptance, jump


@dataclass(frozen=True)
class TuningConstants:
    """Derived and conventionally quoted optimal-tuning constants.

    ``s0`` maximizes the family's efficiency objective (found numerically);
    ``acceptance`` is the acceptance rate at the derived maximizer.  The
    ``quoted_*`` values are the constants commonly cited for the same
    objective; they are reported for cross-reference and are not asserted to
    coincide with the derived values.
    """

    family: str
    s0: float
    acceptance: float
    quoted_s0: float
    quoted_acceptance: float
    objective_value: float


def optimal_tuning(family: str) -> TuningConstants:
    """Maximize the scaling-limit efficiency objective by golden section.

    ``langevin`` maximizes ``s^2 Phi(-s^3)`` (squared jump per unit cost);
    ``hmc`` maximizes ``sqrt(s) Phi(-s)``.  The acceptance rate at the
    maximizer is ``2 Phi(-s0^3)`` respectively ``2 Phi(-s0)``.
    """
    if family == "langevin":

        def objective(s: float) -> float:
            return s**2 * ndtr(-(s**3))

        bracket = (0.4, 0.8, 1.4)
        quoted_s0, quoted_acceptance = 0.8252, 0.574
        acceptance_of = lambda s: 2.0 * float(ndtr(-(s**3)))
    elif family == "hmc":

        def objective(s: float) -> float:
            return math.sqrt(s) * ndtr(-s)

        bracket = (0.2, 0.45, 1.2)
        quoted_s0, quoted_acceptance = 0.4250, 0.651
        acceptance_of = lambda s: 2.0 * float(ndtr(-s))
    else:
        raise ValueError(f"unknown family {family!r}")
    result = minimize_scalar(
        lambda s: -objective(s), bracket=bracket, method="golden", options={"xtol": 1e-10}
    )
    s0 = float(result.x)
    return TuningConstants(
        family=family,
        s0=s0,
        acceptance=acceptance_of(s0),
        quoted_s0=quoted_s0,
        quoted_acceptance=quoted_acceptance,
        objective_value=float(objective(s0)),
    )


def lstep_efficiency(n_compositions: int, t_phi_cost: float) -> float:
    """Efficiency of an optimally tuned L-step composition.

    ``L^(2/3) / (1.426 + 0.426 t + L)`` where t is the cost of one
    change-of-measure evaluation in units of one matrix-vector product.  The
    numerator is the jump-size gain of L compositions at matched tuning; the
    denominator is the per-proposal cost with the constants as conventionally
    quoted for the 0.574 acceptance point.
    """
    L = int(n_compositions)
    if L < 1:
        raise ValueError(f"need n_compositions >= 1, got {L}")
    if t_phi_cost < 0:
        raise ValueError(f"t_phi_cost must be >= 0, got {t_phi_cost}")
    return L ** (2.0 / 3.0) / (1.426 + 0.426 * t_phi_cost + L)


def optimal_lstep_count(t_phi_cost: float, max_count: int = 64) -> tuple[float, int]:
    """Continuous and integer maximizers of the L-step efficiency.

    The continuous optimum is ``2 (1.426 + 0.426 t)``; the integer optimum is
    the argmax of :func:`lstep_efficiency` over ``1..max_count``.
    """
    continuous = 2.0 * (1.426 + 0.426 * t_phi_cost)
    counts = np.arange(1, max_count + 1)
    values = [lstep_efficiency(int(c), t_phi_cost) for c in counts]
    return continuous, int(counts[int(np.argmax(values))])


def nongaussian_moments(
    terms: ModeTerms, kappa: np.ndarray, gamma: np.ndarray
) -> tuple[float, float]:
    """Log-ratio mean and variance under a bounded change of measure.

    ``kappa`` and ``gamma`` are the first and second moments of the
    normalized eigenbasis fluctuation under the tilted target.  With
    kappa = 0, gamma = 1 this reduces to the Gaussian-case moments.
    """
    kappa = np.asarray(kappa, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    coupling = kappa * terms.chain_noise_lin + terms.chain_noise_quad * (gamma - 1.0)
    mu_ng = float(terms.mode_mean.sum() + coupling.sum())
    sigma_sq_ng = float(terms.mode_var.sum() + np.sum(coupling**2))
    return mu_ng, sigma_sq_ng


def nongaussian_jump_bracket(
    terms: ModeTerms, gamma: np.ndarray, acceptance: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-direction interval containing the expected squared jump.

    The bracket is
    ``(one_minus_gain^2 mean_gap^2 + one_minus_gain_sq / limit_prec) * acceptance
    + 2 (mean_gap one_minus_gain^2 sqrt(gamma) / inv_std) u
    + (one_minus_gain^2 gamma / inv_std^2) v``
    over u in [-1, 1] and v in [0, 1]; only the interval is computable, the
    coupling coefficients u, v are existential.
    """
    gamma = np.asarray(gamma, dtype=float)
    gt_sq = terms.one_minus_gain**2
    core = (
        gt_sq * terms.mean_gap**2 + terms.one_minus_gain_sq / terms.limit_inv_std**2
    ) * acceptance
    u_span = 2.0 * np.abs(terms.mean_gap) * gt_sq * np.sqrt(gamma) / terms.inv_std
    v_span = gt_sq * gamma / terms.inv_std**2
    return core - u_span, core + u_span + v_span
