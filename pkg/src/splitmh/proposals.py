"""Concrete AR(1) proposal families.

All families here are functions of the target precision matrix, so they are
built directly in the target eigenbasis as per-mode scalars together with
their exact matrix splitting.  Supported families:

* semi-implicit Langevin (``theta_langevin_proposal``) covering the explicit
  Euler-Maruyama scheme (``sla_proposal``), the implicit scheme (theta = 1),
  and the Crank-Nicolson / preconditioned Crank-Nicolson schemes (theta = 1/2)
  whose proposal limit equals the target exactly;
* compositions of L identical AR(1) steps (``l_step_proposal``), which keep
  the proposal limit of the base kernel;
* Hamiltonian Monte Carlo with a leapfrog integrator (``hmc_proposal``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_chebyu

from splitmh.model import GaussianTarget, validate_spd
from splitmh.splitting import (
    FLAG_DEGENERATE,
    FLAG_NEAR_NONCONVERGENT,
    FLAG_NO_THEORY,
    NEAR_CONVERGENCE_TOL,
    Ar1Proposal,
    MatrixSplitting,
    SpectralForm,
    SplittingSpectralForm,
)

logger = logging.getLogger(__name__)


class ProposalError(ValueError):
    """Invalid proposal-family parameters."""


class StepTooLarge(ProposalError):
    """Time step exceeds the definiteness limit of the proposal family."""

    def __init__(self, h: float, critical: float):
        self.critical = critical
        super().__init__(
            f"step size {h:.6g} reaches the critical value {critical:.6g}; "
            "the proposal-limit precision would lose definiteness"
        )


class UnstableIntegrator(ProposalError):
    """Leapfrog step too large for some mode: |1 - h^2 w^2 / 2| > 1."""


class TheoryUnavailable(ProposalError):
    """Requested closed-form predictions for a non-commuting proposal."""


@dataclass(frozen=True)
class ThetaLangevinSpec:
    """Semi-implicit Langevin discretization parameters.

    ``theta`` blends explicit (0) and implicit (1) treatment of the drift;
    ``theta = 1/2`` makes the proposal limit coincide with the target.
    ``preconditioner`` shapes the diffusion: the preset names "identity" and
    "inverse_precision" (the latter gives Crank-Nicolson schemes a
    mesh-robust spectrum), a polynomial-coefficient sequence applied to the
    target precision (highest power first), or an explicit SPD matrix, in
    which case only simulation is supported, not closed-form predictions.
    """

    theta: float
    h: float
    preconditioner: object = "identity"

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ProposalError(f"theta must be in [0, 1], got {self.theta}")
        if self.h <= 0:
            raise ProposalError(f"h must be > 0, got {self.h}")


@dataclass(frozen=True)
class HmcSpec:
    """Hamiltonian proposal parameters.

    Either the leapfrog step count ``steps`` or the total integration time
    ``total_time`` must be given; in the latter case ``steps`` is
    ``floor(total_time / h)`` (at least 1).  ``preconditioner`` is the
    inverse mass matrix and admits the same presets as
    :class:`ThetaLangevinSpec`.
    """

    h: float
    steps: int | None = None
    total_time: float | None = None
    preconditioner: object = "identity"

    def __post_init__(self):
        if self.h <= 0:
            raise ProposalError(f"h must be > 0, got {self.h}")
        if self.steps is None and self.total_time is None:
            raise ProposalError("need steps or total_time")
        if self.steps is not None and self.total_time is not None:
            raise ProposalError("give either steps or total_time, not both")
        if self.steps is not None and self.steps < 1:
            raise ProposalError(f"steps must be >= 1, got {self.steps}")

    def leapfrog_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        return max(1, int(math.floor(self.total_time / self.h)))


@dataclass(frozen=True)
class ScalingLaw:
    """Dimension-dependent step-size rule for the scaling-limit regime.

    ``langevin`` uses ``h = l^2 d^(-1/3 - 2 kappa)`` and ``hmc`` uses
    ``h = l d^(-1/4 - kappa)``.  A custom ``exponent`` replaces the standard
    one, but off the standard exponents the acceptance rate degenerates to 0
    or 1 as d grows; such laws are supported for demonstration only.
    """

    l: float
    kappa: float = 0.0
    family: str = "langevin"
    exponent: float | None = None

    def __post_init__(self):
        if self.l <= 0:
            raise ProposalError(f"l must be > 0, got {self.l}")
        if self.family not in ("langevin", "hmc"):
            raise ProposalError(f"unknown scaling family {self.family!r}")

    @property
    def is_standard(self) -> bool:
        return self.exponent is None

    def step_size(self, dim: int) -> float:
        if self.family == "langevin":
            exponent = -1.0 / 3.0 - 2.0 * self.kappa if self.exponent is None else self.exponent
            return self.l**2 * dim**exponent
        exponent = -0.25 - self.kappa if self.exponent is None else self.exponent
        return self.l * dim**exponent


def _preconditioner_modes(target: GaussianTarget, preconditioner) -> np.ndarray | None:
    """Per-mode values of a preconditioner that is a function of the precision.

    Returns None when the preconditioner is an explicit matrix (dense-only
    path).
    """
    lam_sq = target.spectrum.eigenvalues
    if isinstance(preconditioner, str):
        if preconditioner == "identity":
            return np.ones_like(lam_sq)
        if preconditioner == "inverse_precision":
            return 1.0 / lam_sq
        raise ProposalError(f"unknown preconditioner preset {preconditioner!r}")
    if isinstance(preconditioner, (tuple, list)):
        values = np.polyval(np.asarray(preconditioner, dtype=float), lam_sq)
        if np.any(values <= 0):
            raise ProposalError("polynomial preconditioner is not positive on the spectrum")
        return values
    if isinstance(preconditioner, np.ndarray):
        return None
    raise ProposalError(f"unsupported preconditioner {preconditioner!r}")


def _near_nonconvergent(gain: np.ndarray) -> tuple[str, ...]:
    radius = float(np.abs(gain).max())
    if radius > 1.0 - NEAR_CONVERGENCE_TOL:
        logger.debug("proposal is near-nonconvergent: spectral radius %.12g", radius)
        return (FLAG_NEAR_NONCONVERGENT,)
    return ()


def sla_proposal(target: GaussianTarget, h: float) -> Ar1Proposal:
    """Explicit (Euler-Maruyama) Langevin proposal.

    ``y = (I - (h/2) A) x + (h/2) b + sqrt(h) xi``.  Requires
    ``h < 4 / max eigenvalue`` so the proposal-limit precision
    ``(I - (h/4) A) A`` stays positive definite; otherwise
    :class:`StepTooLarge` is raised with the critical step.
    """
    if h <= 0:
        raise ProposalError(f"h must be > 0, got {h}")
    lam_sq = target.spectrum.eigenvalues
    critical = 4.0 / lam_sq.max()
    if h >= critical * (1.0 - 1e-12):
        raise StepTooLarge(h, critical)
    gain = 1.0 - 0.5 * h * lam_sq
    limit_prec = (1.0 - 0.25 * h * lam_sq) * lam_sq
    m_diag = (2.0 / h) * (1.0 - 0.25 * h * lam_sq)
    splitting = MatrixSplitting(
        spectral_form=SplittingSpectralForm(
            m_diag=m_diag,
            n_diag=m_diag * gain,
            offset=(1.0 - 0.25 * h * lam_sq) * target.eigen_shift,
            limit_precision=limit_prec,
        ),
        basis=target.spectrum.basis,
    )
    return Ar1Proposal(
        spectral_form=SpectralForm(
            gain=gain,
            shift=0.5 * h * target.eigen_shift,
            noise_var=np.full_like(lam_sq, h),
        ),
        basis=target.spectrum.basis,
        splitting=splitting,
        flags=_near_nonconvergent(gain),
    )


def theta_langevin_proposal(target: GaussianTarget, spec: ThetaLangevinSpec) -> Ar1Proposal:
    """Semi-implicit Langevin proposal with preconditioner.

    ``y = (I + (theta h/2) VA)^{-1} [ (I - ((1-theta) h/2) VA) x + (h/2) V b
    + sqrt(h V) xi ]``.  The proposal-limit precision is
    ``(I + (theta - 1/2)(h/2) A V) A``; for theta = 1/2 it equals the target
    precision exactly (by construction, not just within round-off), which is
    what makes Crank-Nicolson-type chains accept every proposal.
    """
    v_modes = _preconditioner_modes(target, spec.preconditioner)
    if v_modes is None:
        return _theta_langevin_dense(target, spec)
    theta, h = spec.theta, spec.h
    lam_sq = target.spectrum.eigenvalues
    s = v_modes * lam_sq
    scale_w = 1.0 + (theta - 0.5) * 0.5 * h * s
    if np.any(scale_w <= 0):
        critical = 4.0 / ((1.0 - 2.0 * theta) * s.max())
        raise StepTooLarge(h, critical)
    denom = 1.0 + 0.5 * theta * h * s
    gain = (1.0 - 0.5 * (1.0 - theta) * h * s) / denom
    limit_prec = scale_w * lam_sq
    one_minus_gain = 0.5 * h * s / denom
    m_diag = limit_prec / one_minus_gain
    splitting = MatrixSplitting(
        spectral_form=SplittingSpectralForm(
            m_diag=m_diag,
            n_diag=m_diag * gain,
            offset=scale_w * target.eigen_shift,
            limit_precision=limit_prec,
        ),
        basis=target.spectrum.basis,
    )
    return Ar1Proposal(
        spectral_form=SpectralForm(
            gain=gain,
            shift=0.5 * h * v_modes * target.eigen_shift / denom,
            noise_var=h * v_modes / denom**2,
        ),
        basis=target.spectrum.basis,
        splitting=splitting,
        flags=_near_nonconvergent(gain),
    )


def _theta_langevin_dense(target: GaussianTarget, spec: ThetaLangevinSpec) -> Ar1Proposal:
    """Dense path for an explicit preconditioner matrix: simulation only."""
    v_mat = validate_spd(spec.preconditioner, "preconditioner")
    theta, h = spec.theta, spec.h
    a_mat = target.precision()
    d = a_mat.shape[0]
    va = v_mat @ a_mat
    implicit = np.eye(d) + 0.5 * theta * h * va
    gain = np.linalg.solve(implicit, np.eye(d) - 0.5 * (1.0 - theta) * h * va)
    shift = np.linalg.solve(implicit, 0.5 * h * v_mat @ target.shift)
    inner = np.linalg.solve(implicit, h * v_mat)
    noise_cov = np.linalg.solve(implicit, inner.T).T
    noise_cov = 0.5 * (noise_cov + noise_cov.T)
    return Ar1Proposal(gain, shift, noise_cov, flags=(FLAG_NO_THEORY,))


def cn_proposal(target: GaussianTarget, h: float) -> Ar1Proposal:
    """Crank-Nicolson proposal: theta = 1/2, identity preconditioner."""
    return theta_langevin_proposal(target, ThetaLangevinSpec(theta=0.5, h=h))


def pcn_proposal(target: GaussianTarget, h: float) -> Ar1Proposal:
    """Preconditioned Crank-Nicolson: theta = 1/2, inverse-precision V.

    Every mode shares the gain ``(1 - h/4) / (1 + h/4)`` and the proposal
    limit is exactly the target.
    """
    return theta_langevin_proposal(
        target, ThetaLangevinSpec(theta=0.5, h=h, preconditioner="inverse_precision")
    )


def l_step_proposal(base: Ar1Proposal, n_compositions: int) -> Ar1Proposal:
    """Compose ``n_compositions`` identical AR(1) steps into one proposal.

    The composition is again AR(1) with gain ``G^L``, accumulated drift and
    accumulated noise covariance, and it shares the proposal limit of the
    base kernel, so one accept/reject decision covers all L sub-steps.
    """
    L = int(n_compositions)
    if L < 1:
        raise ProposalError(f"need at least one composition, got {L}")
    if L == 1:
        return base
    if base.spectral_form is not None:
        sf = base.spectral_form
        gain_l = sf.gain**L
        # Accumulate sum(G^l, l<L) and sum(G^{2l}, l<L) iteratively: exact
        # for any gain, including modes with |gain| at or near 1.
        geo = np.ones_like(sf.gain)
        geo_sq = np.ones_like(sf.gain)
        power = np.ones_like(sf.gain)
        for _ in range(L - 1):
            power = power * sf.gain
            geo += power
            geo_sq += power**2
        spectral = SpectralForm(
            gain=gain_l, shift=geo * sf.shift, noise_var=geo_sq * sf.noise_var
        )
        base_split = _splitting_of(base)
        m_diag = base_split.spectral_form.limit_precision / (1.0 - gain_l)
        splitting = MatrixSplitting(
            spectral_form=SplittingSpectralForm(
                m_diag=m_diag,
                n_diag=m_diag * gain_l,
                offset=base_split.spectral_form.offset,
                limit_precision=base_split.spectral_form.limit_precision,
            ),
            basis=base.basis,
            flags=base.flags,
        )
        return Ar1Proposal(
            spectral_form=spectral,
            basis=base.basis,
            splitting=splitting,
            cost_per_step=L * base.cost_per_step,
            flags=base.flags,
        )
    g_mat = base.gain
    d = g_mat.shape[0]
    gain_l = np.eye(d)
    geo = np.zeros((d, d))
    noise = np.zeros((d, d))
    for _ in range(L):
        geo += gain_l
        noise = g_mat @ noise @ g_mat.T + base.noise_cov
        gain_l = gain_l @ g_mat
    return Ar1Proposal(
        gain_l,
        geo @ base.shift,
        0.5 * (noise + noise.T),
        cost_per_step=L * base.cost_per_step,
        flags=base.flags,
    )


def _splitting_of(proposal: Ar1Proposal) -> MatrixSplitting:
    from splitmh.splitting import ar1_to_splitting

    return ar1_to_splitting(proposal)


def hmc_mode_eigenvalues(va_eigenvalues: np.ndarray, h: float, steps: int) -> np.ndarray:
    """Iteration-matrix eigenvalues of the leapfrog proposal, per mode.

    ``va_eigenvalues`` are the (positive) eigenvalues of the preconditioned
    precision VA.  Each mode rotates by ``theta_i = -arccos(1 - h^2 w_i / 2)``
    per leapfrog step, so after ``steps`` steps the gain is
    ``cos(steps * theta_i)``.  Raises :class:`UnstableIntegrator` when the
    arccos argument leaves [-1, 1].
    """
    w = np.asarray(va_eigenvalues, dtype=float)
    x = 1.0 - 0.5 * h**2 * w
    if np.any(np.abs(x) > 1.0 + 1e-12):
        worst = w.max()
        raise UnstableIntegrator(
            f"|1 - h^2 w / 2| > 1 for some mode (h = {h:.6g}, max eigenvalue "
            f"{worst:.6g}; need h <= {2.0 / math.sqrt(worst):.6g})"
        )
    theta = -np.arccos(np.clip(x, -1.0, 1.0))
    return np.cos(steps * theta)


def hmc_proposal(target: GaussianTarget, spec: HmcSpec) -> Ar1Proposal:
    """Leapfrog Hamiltonian proposal as an AR(1) kernel.

    Works mode-by-mode in the eigenbasis shared by the target and the
    preconditioner.  Per mode the 2x2 leapfrog transfer matrix is similar to
    a rotation, giving gain ``cos(L theta_i)`` and noise variance
    ``h^2 v_i U_{L-1}(cos theta_i)^2`` with U the Chebyshev polynomial of the
    second kind (evaluated directly, which stays finite at the stability
    boundary).  Modes where the noise variance vanishes (the integrator
    returns to the start or reflects exactly) are kept with a zero-variance
    component and the proposal is flagged degenerate.

    The splitting mean equals the target mean: the leapfrog map fixes
    ``(A^{-1} b, 0)`` in phase space.
    """
    v_modes = _preconditioner_modes(target, spec.preconditioner)
    if v_modes is None:
        raise TheoryUnavailable(
            "explicit preconditioner matrices are not supported for the "
            "Hamiltonian family; use a preset or polynomial preconditioner"
        )
    L = spec.leapfrog_steps()
    h = spec.h
    lam_sq = target.spectrum.eigenvalues
    s = v_modes * lam_sq
    gain = hmc_mode_eigenvalues(s, h, L)
    x = 1.0 - 0.5 * h**2 * s
    # sin(L theta) / sin(theta), finite and exact at |x| = 1.
    ratio = eval_chebyu(L - 1, x)
    # Exact reflections/returns give ratio = 0 up to roundoff in x; snap
    # them so the degenerate flag fires on the configurations it names.
    ratio = np.where(np.abs(ratio) <= 16.0 * L * np.finfo(float).eps, 0.0, ratio)
    noise_var = h**2 * v_modes * ratio**2
    limit_prec = lam_sq * (1.0 - 0.25 * h**2 * s)
    degenerate = bool(np.any(noise_var <= 0) or np.any(limit_prec <= 0))
    flags = (FLAG_DEGENERATE,) if degenerate else ()
    with np.errstate(divide="ignore"):
        m_diag = np.where(gain != 1.0, limit_prec / (1.0 - gain), np.inf)
    splitting = MatrixSplitting(
        spectral_form=SplittingSpectralForm(
            m_diag=m_diag,
            n_diag=m_diag * gain,
            offset=limit_prec * target.eigen_mean,
            limit_precision=limit_prec,
        ),
        basis=target.spectrum.basis,
        flags=flags,
    )
    return Ar1Proposal(
        spectral_form=SpectralForm(
            gain=gain,
            shift=(1.0 - gain) * target.eigen_mean,
            noise_var=noise_var,
        ),
        basis=target.spectrum.basis,
        splitting=splitting,
        cost_per_step=L,
        flags=flags,
    )


def hmc_transfer_matrices(
    precision: np.ndarray, preconditioner: np.ndarray, h: float
) -> tuple[np.ndarray, np.ndarray]:
    """Dense one-step phase-space transfer matrices (K, J) of the leapfrog map.

    ``[q'; p'] = K [q; p] + J [0; (h/2) b]``.  Provided for validation: K has
    unit determinant (a composition of shears) and its L-th power reproduces
    the mode-wise closed forms used by :func:`hmc_proposal`.  A ``None``
    preconditioner means the identity.
    """
    a = np.asarray(precision, dtype=float)
    d = a.shape[0]
    eye = np.eye(d)
    v = eye if preconditioner is None else np.asarray(preconditioner, dtype=float)
    va = v @ a
    k_mat = np.block(
        [
            [eye - 0.5 * h**2 * va, h * v],
            [-h * a + 0.25 * h**3 * a @ va, eye - 0.5 * h**2 * va.T],
        ]
    )
    j_mat = np.block([[2 * eye, h * v], [-0.5 * h * a, 2 * eye - 0.5 * h**2 * va.T]])
    return k_mat, j_mat


def leapfrog(
    precision: np.ndarray,
    preconditioner: np.ndarray,
    shift: np.ndarray,
    position: np.ndarray,
    momentum: np.ndarray,
    h: float,
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate Hamiltonian dynamics with the leapfrog scheme.

    Gradient of the potential is ``precision @ q - shift``; the kinetic term
    uses the preconditioner as inverse mass (``None`` for identity).
    Returns the final (position, momentum).
    """
    q = np.asarray(position, dtype=float).copy()
    p = np.asarray(momentum, dtype=float).copy()
    if preconditioner is None:
        preconditioner = np.eye(q.size)
    for _ in range(int(steps)):
        p -= 0.5 * h * (precision @ q - shift)
        q += h * (preconditioner @ p)
        p -= 0.5 * h * (precision @ q - shift)
    return q, p
