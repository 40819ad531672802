"""Conversions between AR(1) proposals and matrix splittings.

An AR(1) proposal ``y = G x + g + noise`` with ``noise ~ N(0, Sigma)`` and a
matrix splitting ``M y = N x + beta + noise`` with ``noise ~ N(0, M^T + N)``
describe the same Markov kernel when ``G = M^{-1} N`` and ``g = M^{-1} beta``.
The difference ``M - N`` is the precision of the limit distribution the
un-Metropolised proposal chain converges to, which is what every closed-form
prediction downstream is built on.

Proposals whose matrices are all functions of the target precision share its
eigenbasis; for those the per-mode scalar representation (``spectral_form``)
is authoritative and dense matrices are materialized only on demand.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from splitmh.model import validate_spd

logger = logging.getLogger(__name__)

# The theory breaks down exactly at spectral radius 1, so conversions refuse
# anything not clearly inside the unit disk.
CONVERGENCE_TOL = 1e-12
# Radius beyond which a proposal still converts but mixes uselessly slowly.
NEAR_CONVERGENCE_TOL = 1e-6
# Condition number beyond which M is treated as numerically singular.
SINGULAR_COND = 1e14

FLAG_DEGENERATE = "degenerate mode"
FLAG_NO_THEORY = "theory predictions unavailable"
FLAG_NEAR_NONCONVERGENT = "near-nonconvergent"


class SplittingError(ValueError):
    """Base class for conversion failures."""


class NonConvergent(SplittingError):
    """Spectral radius of the iteration matrix is not below 1."""

    def __init__(self, radius: float):
        self.spectral_radius = radius
        super().__init__(f"iteration matrix has spectral radius {radius:.12g} >= 1 - {CONVERGENCE_TOL:g}")


class SingularM(SplittingError):
    """The implicit matrix of a splitting is numerically singular."""


class NotSymmetrizable(SplittingError):
    """gain @ noise_cov is too asymmetric for the symmetric-splitting path."""


@dataclass(frozen=True)
class SpectralForm:
    """Per-mode AR(1) coefficients in the target eigenbasis.

    Valid when gain and noise covariance are simultaneously diagonalized by
    the target's eigenbasis: mode i evolves as an independent scalar AR(1)
    chain with multiplier ``gain[i]``, drift ``shift[i]`` and noise variance
    ``noise_var[i]``.
    """

    gain: np.ndarray
    shift: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        for name in ("gain", "shift", "noise_var"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = self.gain.size
        if self.shift.size != d or self.noise_var.size != d:
            raise SplittingError("spectral form arrays must have equal length")
        if np.any(self.noise_var < 0):
            raise SplittingError("noise variances must be >= 0")

    @property
    def dim(self) -> int:
        return self.gain.size


@dataclass(frozen=True)
class SplittingSpectralForm:
    """Per-mode scalars of a splitting: implicit/explicit parts and offset.

    ``limit_precision[i] = m_diag[i] - n_diag[i]`` is the eigenvalue of the
    proposal-limit precision for mode i.
    """

    m_diag: np.ndarray
    n_diag: np.ndarray
    offset: np.ndarray
    limit_precision: np.ndarray

    def __post_init__(self):
        for name in ("m_diag", "n_diag", "offset", "limit_precision"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def dim(self) -> int:
        return self.m_diag.size


def _materialize(diag: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    if basis is None:
        return np.diag(diag)
    return (basis * diag) @ basis.T


def _vector_from_eigen(vec: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    if basis is None:
        return np.asarray(vec, dtype=float)
    return basis @ vec


class Ar1Proposal:
    """AR(1) proposal kernel ``y = gain @ x + shift + N(0, noise_cov)``.

    Construct either from dense matrices or from a :class:`SpectralForm`
    (with the orthogonal ``basis`` the per-mode scalars refer to; ``None``
    means the identity).  Dense views are materialized lazily.
    """

    def __init__(
        self,
        gain: np.ndarray | None = None,
        shift: np.ndarray | None = None,
        noise_cov: np.ndarray | None = None,
        *,
        spectral_form: SpectralForm | None = None,
        basis: np.ndarray | None = None,
        splitting: "MatrixSplitting | None" = None,
        cost_per_step: int = 1,
        flags: tuple[str, ...] = (),
    ):
        if spectral_form is None and gain is None:
            raise SplittingError("need dense matrices or a spectral form")
        self.spectral_form = spectral_form
        self.basis = basis
        self._gain = None if gain is None else np.asarray(gain, dtype=float)
        self._shift = None if shift is None else np.asarray(shift, dtype=float)
        self._noise_cov = None if noise_cov is None else np.asarray(noise_cov, dtype=float)
        self._splitting = splitting
        self.cost_per_step = int(cost_per_step)
        self.flags = tuple(flags)
        if self._gain is not None:
            d = self._gain.shape[0]
            if self._gain.shape != (d, d):
                raise SplittingError(f"gain must be square, got {self._gain.shape}")
            if self._shift is None or self._shift.shape != (d,):
                raise SplittingError("shift must be a vector matching gain")
            self._noise_cov = validate_spd(self._noise_cov, "noise covariance")
            if self._noise_cov.shape != (d, d):
                raise SplittingError(
                    f"noise covariance shape {self._noise_cov.shape} does not match gain dim {d}"
                )

    @property
    def dim(self) -> int:
        if self.spectral_form is not None:
            return self.spectral_form.dim
        return self._gain.shape[0]

    @property
    def theory_available(self) -> bool:
        return self.spectral_form is not None

    @property
    def gain(self) -> np.ndarray:
        if self._gain is None:
            self._gain = _materialize(self.spectral_form.gain, self.basis)
        return self._gain

    @property
    def shift(self) -> np.ndarray:
        if self._shift is None:
            self._shift = _vector_from_eigen(self.spectral_form.shift, self.basis)
        return self._shift

    @property
    def noise_cov(self) -> np.ndarray:
        if self._noise_cov is None:
            self._noise_cov = _materialize(self.spectral_form.noise_var, self.basis)
        return self._noise_cov


class MatrixSplitting:
    """Splitting ``M y = N x + beta + N(0, M^T + N)`` with SPD ``M - N``."""

    def __init__(
        self,
        m_mat: np.ndarray | None = None,
        n_mat: np.ndarray | None = None,
        offset: np.ndarray | None = None,
        *,
        spectral_form: SplittingSpectralForm | None = None,
        basis: np.ndarray | None = None,
        flags: tuple[str, ...] = (),
    ):
        if spectral_form is None and m_mat is None:
            raise SplittingError("need dense matrices or a spectral form")
        self.spectral_form = spectral_form
        self.basis = basis
        self._m = None if m_mat is None else np.asarray(m_mat, dtype=float)
        self._n = None if n_mat is None else np.asarray(n_mat, dtype=float)
        self._offset = None if offset is None else np.asarray(offset, dtype=float)
        self.flags = tuple(flags)
        degenerate = FLAG_DEGENERATE in self.flags
        if spectral_form is not None:
            if np.any(spectral_form.limit_precision <= 0) and not degenerate:
                raise SplittingError("limit precision must be positive")
            noise = spectral_form.m_diag + spectral_form.n_diag
            if np.any(noise < 0) or (np.any(noise == 0) and not degenerate):
                raise SplittingError("M^T + N must be a valid covariance")
        elif not degenerate:
            d = self._m.shape[0]
            validate_spd(self._m - self._n, "M - N")
            validate_spd(self._m.T + self._n, "M^T + N")
            if self._offset is None or self._offset.shape != (d,):
                raise SplittingError("offset must be a vector matching M")

    @property
    def dim(self) -> int:
        if self.spectral_form is not None:
            return self.spectral_form.dim
        return self._m.shape[0]

    @property
    def m_mat(self) -> np.ndarray:
        if self._m is None:
            self._m = _materialize(self.spectral_form.m_diag, self.basis)
        return self._m

    @property
    def n_mat(self) -> np.ndarray:
        if self._n is None:
            self._n = _materialize(self.spectral_form.n_diag, self.basis)
        return self._n

    @property
    def offset(self) -> np.ndarray:
        if self._offset is None:
            self._offset = _vector_from_eigen(self.spectral_form.offset, self.basis)
        return self._offset

    def limit_precision(self) -> np.ndarray:
        """Dense precision of the proposal limit distribution (M - N)."""
        if self.spectral_form is not None:
            return _materialize(self.spectral_form.limit_precision, self.basis)
        return self.m_mat - self.n_mat


@dataclass(frozen=True)
class ProposalLimit:
    """The distribution the un-Metropolised proposal chain converges to."""

    mean: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray | None = None

    def precision(self) -> np.ndarray:
        return _materialize(self.eigenvalues, self.basis)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized log density, vectorized over leading axes."""
        x = np.asarray(x, dtype=float)
        x_eig = x @ self.basis if self.basis is not None else x
        mean_eig = self.mean @ self.basis if self.basis is not None else self.mean
        offset_eig = self.eigenvalues * mean_eig
        return -0.5 * np.sum(self.eigenvalues * x_eig**2, axis=-1) + x_eig @ offset_eig


def spectral_radius(obj) -> float:
    """Largest |eigenvalue| of an iteration matrix.

    Accepts an :class:`Ar1Proposal` (mode-wise when a spectral form is
    present), a :class:`MatrixSplitting`, or a raw square matrix.
    """
    if isinstance(obj, Ar1Proposal):
        if obj.spectral_form is not None:
            return float(np.abs(obj.spectral_form.gain).max())
        return float(np.abs(np.linalg.eigvals(obj.gain)).max())
    if isinstance(obj, MatrixSplitting):
        return spectral_radius(splitting_to_ar1(obj))
    return float(np.abs(np.linalg.eigvals(np.asarray(obj, dtype=float))).max())


def _check_convergent(proposal: Ar1Proposal) -> float:
    radius = spectral_radius(proposal)
    if radius >= 1.0 - CONVERGENCE_TOL:
        raise NonConvergent(radius)
    return radius


def ar1_to_splitting(proposal: Ar1Proposal) -> MatrixSplitting:
    """Convert an AR(1) proposal to its unique matrix splitting.

    The limit precision solves the discrete Lyapunov identity
    ``P^{-1} - G P^{-1} G^T = Sigma``; mode-wise that is
    ``P_i = (1 - gain_i^2) / noise_var_i``.  Requires spectral radius of the
    gain below 1 (otherwise the proposal chain has no limit distribution and
    :class:`NonConvergent` is raised).
    """
    if proposal._splitting is not None:
        return proposal._splitting
    _check_convergent(proposal)
    if proposal.spectral_form is not None:
        sf = proposal.spectral_form
        if np.any(sf.noise_var <= 0):
            raise SplittingError("noise variances must be positive to form a splitting")
        limit_prec = (1.0 - sf.gain**2) / sf.noise_var
        m_diag = limit_prec / (1.0 - sf.gain)
        result = MatrixSplitting(
            spectral_form=SplittingSpectralForm(
                m_diag=m_diag,
                n_diag=m_diag * sf.gain,
                offset=m_diag * sf.shift,
                limit_precision=limit_prec,
            ),
            basis=proposal.basis,
            flags=proposal.flags,
        )
    else:
        g_mat = proposal.gain
        d = g_mat.shape[0]
        limit_cov = scipy.linalg.solve_discrete_lyapunov(g_mat, proposal.noise_cov)
        limit_cov = 0.5 * (limit_cov + limit_cov.T)
        limit_prec = np.linalg.inv(limit_cov)
        limit_prec = 0.5 * (limit_prec + limit_prec.T)
        # M = P (I - G)^{-1}, solved rather than inverted explicitly.
        m_mat = np.linalg.solve((np.eye(d) - g_mat).T, limit_prec.T).T
        result = MatrixSplitting(
            m_mat=m_mat,
            n_mat=m_mat @ g_mat,
            offset=m_mat @ proposal.shift,
            flags=proposal.flags,
        )
    proposal._splitting = result
    return result


def splitting_to_ar1(splitting: MatrixSplitting) -> Ar1Proposal:
    """Recover the AR(1) kernel of a splitting.

    ``gain = M^{-1} N``, ``shift = M^{-1} beta``, and the noise covariance is
    ``M^{-1} (M^T + N) M^{-T}``.  Raises :class:`SingularM` when M cannot be
    inverted reliably.
    """
    if splitting.spectral_form is not None:
        sf = splitting.spectral_form
        if np.any(sf.m_diag == 0):
            raise SingularM("splitting has a zero implicit coefficient")
        return Ar1Proposal(
            spectral_form=SpectralForm(
                gain=sf.n_diag / sf.m_diag,
                shift=sf.offset / sf.m_diag,
                noise_var=(sf.m_diag + sf.n_diag) / sf.m_diag**2,
            ),
            basis=splitting.basis,
            flags=splitting.flags,
        )
    m_mat = splitting.m_mat
    cond = np.linalg.cond(m_mat)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularM(f"M has condition number {cond:.3e}")
    gain = np.linalg.solve(m_mat, splitting.n_mat)
    shift = np.linalg.solve(m_mat, splitting.offset)
    inner = np.linalg.solve(m_mat, splitting.m_mat.T + splitting.n_mat)
    noise_cov = np.linalg.solve(m_mat, inner.T).T
    noise_cov = 0.5 * (noise_cov + noise_cov.T)
    return Ar1Proposal(gain, shift, noise_cov, flags=splitting.flags)


def symmetric_splitting(proposal: Ar1Proposal, tol: float = 1e-10) -> MatrixSplitting:
    """Splitting of a proposal whose gain commutes with its noise covariance.

    When ``gain @ noise_cov`` is symmetric the splitting has the closed form
    ``M = Sigma^{-1}(I + G)`` with symmetric M and N, and no Lyapunov solve
    is needed.  Raises :class:`NotSymmetrizable` when the symmetry defect of
    ``gain @ noise_cov`` exceeds ``tol`` (relative).
    """
    _check_convergent(proposal)
    if proposal.spectral_form is not None:
        return ar1_to_splitting(proposal)
    g_mat, sigma = proposal.gain, proposal.noise_cov
    gs = g_mat @ sigma
    scale = max(np.abs(gs).max(), 1e-300)
    defect = np.abs(gs - gs.T).max() / scale
    if defect > tol:
        raise NotSymmetrizable(
            f"gain @ noise_cov has relative asymmetry {defect:.3e} > {tol:g}"
        )
    d = g_mat.shape[0]
    m_mat = np.linalg.solve(sigma, np.eye(d) + g_mat)
    m_mat = 0.5 * (m_mat + m_mat.T)
    n_mat = m_mat @ g_mat
    n_mat = 0.5 * (n_mat + n_mat.T)
    return MatrixSplitting(
        m_mat=m_mat,
        n_mat=n_mat,
        offset=m_mat @ proposal.shift,
        flags=proposal.flags,
    )


def proposal_limit(splitting: MatrixSplitting) -> ProposalLimit:
    """Mean and precision of the limit distribution N(P^{-1} beta, P^{-1})."""
    if splitting.spectral_form is not None:
        sf = splitting.spectral_form
        if np.any(sf.limit_precision <= 0):
            raise SplittingError("limit precision must be SPD")
        mean_eig = sf.offset / sf.limit_precision
        mean = _vector_from_eigen(mean_eig, splitting.basis)
        return ProposalLimit(mean=mean, eigenvalues=sf.limit_precision, basis=splitting.basis)
    prec = validate_spd(splitting.limit_precision(), "limit precision")
    eigenvalues, basis = np.linalg.eigh(prec)
    if eigenvalues.min() <= 0:
        raise SplittingError("limit precision must be SPD")
    mean = np.linalg.solve(prec, splitting.offset)
    return ProposalLimit(mean=mean, eigenvalues=eigenvalues, basis=basis)


def proposal_to_json(proposal: Ar1Proposal) -> str:
    """Serialize to the interchange schema (spectral form preferred)."""
    if proposal.spectral_form is not None:
        sf = proposal.spectral_form
        doc = {
            "kind": "ar1",
            "spectral_form": {
                "G_i": sf.gain.tolist(),
                "Sigma_i": sf.noise_var.tolist(),
                "g": sf.shift.tolist(),
            },
        }
    else:
        doc = {
            "kind": "ar1",
            "G": proposal.gain.tolist(),
            "Sigma": proposal.noise_cov.tolist(),
            "g": proposal.shift.tolist(),
        }
    return json.dumps(doc)


def splitting_to_json(splitting: MatrixSplitting) -> str:
    doc = {
        "kind": "splitting",
        "M": splitting.m_mat.tolist(),
        "N": splitting.n_mat.tolist(),
        "beta": splitting.offset.tolist(),
    }
    return json.dumps(doc)


def proposal_from_json(text: str) -> "Ar1Proposal | MatrixSplitting":
    """Parse either interchange document kind."""
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "ar1":
        if "spectral_form" in doc:
            sf = doc["spectral_form"]
            return Ar1Proposal(
                spectral_form=SpectralForm(
                    gain=np.asarray(sf["G_i"], dtype=float),
                    shift=np.asarray(sf["g"], dtype=float),
                    noise_var=np.asarray(sf["Sigma_i"], dtype=float),
                )
            )
        return Ar1Proposal(
            np.asarray(doc["G"], dtype=float),
            np.asarray(doc["g"], dtype=float),
            np.asarray(doc["Sigma"], dtype=float),
        )
    if kind == "splitting":
        return MatrixSplitting(
            np.asarray(doc["M"], dtype=float),
            np.asarray(doc["N"], dtype=float),
            np.asarray(doc["beta"], dtype=float),
        )
    raise SplittingError(f"unknown document kind {kind!r}")
