"""Targets, spectra and test-problem generators.

Everything downstream works with a Gaussian target whose density is
``exp(-0.5 x'Ax + b'x)`` for an SPD precision matrix ``A``, or with a bounded
change of measure ``exp(-phi)`` against such a Gaussian.  All proposal
matrices used by the rest of the package are functions of ``A``, so the
eigen-decomposition computed here once is the canonical representation: dense
matrices are materialized lazily and only at desk scale (d up to a few
thousand).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Relative tolerance for symmetry of user-supplied matrices.
SYMMETRY_RTOL = 1e-12


class ModelError(ValueError):
    """Raised for invalid model construction arguments."""


class PhiBoundExceeded(ModelError):
    """A change-of-measure evaluation broke its declared bound."""


def validate_spd(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Check symmetry and positive definiteness; return the symmetrized copy.

    Parameters
    ----------
    matrix : ndarray
        Square matrix expected to be SPD up to round-off.
    name : str
        Used in error messages.

    Returns
    -------
    ndarray
        ``(matrix + matrix.T) / 2``, guarding against I/O round-off.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"{name} must be square, got shape {a.shape}")
    scale = np.abs(a).max()
    if scale == 0.0:
        raise ModelError(f"{name} is identically zero")
    asym = np.abs(a - a.T).max()
    if asym > SYMMETRY_RTOL * scale:
        raise ModelError(
            f"{name} is not symmetric: max asymmetry {asym:.3e} "
            f"exceeds {SYMMETRY_RTOL:.0e} relative"
        )
    a = 0.5 * (a + a.T)
    eigvals = np.linalg.eigvalsh(a)
    if eigvals.min() <= 0.0:
        raise ModelError(f"{name} is not positive definite (min eig {eigvals.min():.3e})")
    return a


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded random orthogonal matrix: QR of a standard-normal matrix.

    The diagonal of R is sign-corrected so the distribution is Haar up to
    the generator's seeding and the result is reproducible.
    """
    z = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class SpectrumFamily:
    """Eigenvalue growth law ``lambda_i = scale * i**kappa``.

    ``lambda_i`` are the square roots of the precision eigenvalues, so the
    precision matrix built from this family has eigenvalues
    ``(scale * i**kappa)**2``.
    """

    kappa: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ModelError(f"kappa must be >= 0, got {self.kappa}")
        if self.scale <= 0:
            raise ModelError(f"scale must be > 0, got {self.scale}")

    def inv_std_values(self, dim: int) -> np.ndarray:
        """lambda_i for i = 1..dim (ascending)."""
        i = np.arange(1, dim + 1, dtype=float)
        return self.scale * i**self.kappa


class SpdSpectrum:
    """Eigen-decomposition ``A = Q diag(eigenvalues) Q^T`` of an SPD matrix.

    ``basis=None`` means the identity basis and is never materialized, which
    keeps theory-only computations cheap at large dimension.
    """

    def __init__(self, eigenvalues: np.ndarray, basis: np.ndarray | None = None):
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        if eigenvalues.ndim != 1 or eigenvalues.size == 0:
            raise ModelError("eigenvalues must be a non-empty vector")
        if np.any(eigenvalues <= 0):
            raise ModelError("eigenvalues must be strictly positive")
        if np.any(np.diff(eigenvalues) < 0):
            raise ModelError("eigenvalues must be ascending")
        self.eigenvalues = eigenvalues
        if basis is not None:
            basis = np.asarray(basis, dtype=float)
            d = eigenvalues.size
            if basis.shape != (d, d):
                raise ModelError(f"basis shape {basis.shape} does not match dim {d}")
            ortho_err = np.abs(basis.T @ basis - np.eye(d)).max()
            if ortho_err > 1e-10:
                raise ModelError(f"basis is not orthogonal (deviation {ortho_err:.3e})")
        self.basis = basis

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def inv_std(self) -> np.ndarray:
        """Square roots of the eigenvalues (inverse marginal std devs)."""
        return np.sqrt(self.eigenvalues)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "SpdSpectrum":
        a = validate_spd(matrix, "precision matrix")
        eigenvalues, basis = np.linalg.eigh(a)
        return cls(eigenvalues, basis)

    def matrix(self) -> np.ndarray:
        """Materialize the dense matrix Q diag(eigenvalues) Q^T."""
        if self.basis is None:
            return np.diag(self.eigenvalues)
        return (self.basis * self.eigenvalues) @ self.basis.T

    def to_eigenbasis(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of ``x`` in the eigenbasis (Q^T x)."""
        if self.basis is None:
            return np.asarray(x, dtype=float)
        return np.asarray(x, dtype=float) @ self.basis

    def from_eigenbasis(self, x_eig: np.ndarray) -> np.ndarray:
        """Map eigenbasis coordinates back to the original coordinates."""
        if self.basis is None:
            return np.asarray(x_eig, dtype=float)
        return np.asarray(x_eig, dtype=float) @ self.basis.T


class GaussianTarget:
    """Gaussian density ``exp(-0.5 x'Ax + b'x)`` with mean ``A^{-1} b``."""

    def __init__(self, spectrum: SpdSpectrum, shift: np.ndarray):
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (spectrum.dim,):
            raise ModelError(f"shift shape {shift.shape} does not match dim {spectrum.dim}")
        self.spectrum = spectrum
        self.shift = shift
        # Eigenbasis coordinates of the shift and the mean, used everywhere.
        self.eigen_shift = spectrum.to_eigenbasis(shift)
        self.eigen_mean = self.eigen_shift / spectrum.eigenvalues

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    @property
    def mean(self) -> np.ndarray:
        return self.spectrum.from_eigenbasis(self.eigen_mean)

    def precision(self) -> np.ndarray:
        """Dense precision matrix (materialized on demand)."""
        return self.spectrum.matrix()

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized log density, vectorized over the leading axes."""
        x_eig = self.spectrum.to_eigenbasis(x)
        quad = np.sum(self.spectrum.eigenvalues * x_eig**2, axis=-1)
        return -0.5 * quad + x_eig @ self.eigen_shift


class ChangeOfMeasureTarget:
    """Density ``exp(-phi(x))`` relative to a Gaussian reference.

    phi must accept arrays of shape (..., dim) and return shape (...).  When
    ``phi_bound`` is given, evaluations are checked against it: a bounded
    likelihood is what makes the acceptance-rate theory carry over.
    """

    def __init__(
        self,
        reference: GaussianTarget,
        phi: Callable[[np.ndarray], np.ndarray],
        phi_bound: float | None = None,
    ):
        self.reference = reference
        self._phi = phi
        self.phi_bound = phi_bound

    @property
    def dim(self) -> int:
        return self.reference.dim

    @property
    def spectrum(self) -> SpdSpectrum:
        return self.reference.spectrum

    def phi(self, x: np.ndarray) -> np.ndarray:
        value = np.asarray(self._phi(np.asarray(x, dtype=float)), dtype=float)
        if self.phi_bound is not None:
            worst = np.abs(value).max() if value.size else 0.0
            if worst > self.phi_bound + 1e-12:
                raise PhiBoundExceeded(
                    f"|phi| = {worst:.6g} exceeds declared bound {self.phi_bound:.6g}"
                )
        return value

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return self.reference.log_density(x) - self.phi(x)


def make_test_target(
    dim: int,
    family: SpectrumFamily = SpectrumFamily(),
    seed: int = 0,
    rotate: bool = False,
    shift_law: str = "zero",
) -> GaussianTarget:
    """Build a seeded Gaussian test target with a power-law spectrum.

    Parameters
    ----------
    dim : int
        Dimension, >= 1.
    family : SpectrumFamily
        Growth law for lambda_i; precision eigenvalues are lambda_i**2.
    seed : int
        Seeds both the random basis (if ``rotate``) and the random shift.
    rotate : bool
        If true the eigenbasis is a seeded random orthogonal matrix,
        otherwise the identity.
    shift_law : {"zero", "random"}
        b = 0 or a seeded standard-normal vector.
    """
    if dim < 1:
        raise ModelError(f"dim must be >= 1, got {dim}")
    if shift_law not in ("zero", "random"):
        raise ModelError(f"unknown shift_law {shift_law!r}")
    rng = np.random.default_rng(seed)
    basis = random_orthogonal(dim, rng) if rotate else None
    spectrum = SpdSpectrum(family.inv_std_values(dim) ** 2, basis)
    if shift_law == "random":
        shift = rng.standard_normal(dim)
    else:
        shift = np.zeros(dim)
    return GaussianTarget(spectrum, shift)


def exact_gaussian_sample(
    target: GaussianTarget, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Independent exact draws from the target (the equilibrium oracle).

    Returns a vector of shape (dim,) or, when ``size`` is given, a matrix of
    shape (size, dim).  Draws are mean + Q Lambda^{-1/2} xi with xi standard
    normal, so the sampling law is exactly N(A^{-1}b, A^{-1}).
    """
    shape = (target.dim,) if size is None else (size, target.dim)
    xi = rng.standard_normal(shape)
    x_eig = target.eigen_mean + xi / target.spectrum.inv_std
    return target.spectrum.from_eigenbasis(x_eig)


def tau_statistic(
    spectrum: SpdSpectrum | np.ndarray,
    power: int,
    kappa: float,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Finite-dimension surrogate for the scaling-limit spectral statistic.

    Computes ``(1/d**(1+power*kappa)) * sum_i weight(lambda_i) lambda_i**power``
    where lambda_i are the square roots of the precision eigenvalues.  This is
    deliberately the finite sum, never an analytic limit: it is what a finite
    experiment can check.

    ``power`` is 6 for Langevin-type scaling and 4 for Hamiltonian scaling
    (where ``weight`` carries the sin^2 factor).
    """
    if power not in (4, 6):
        raise ModelError(f"power must be 4 or 6, got {power}")
    if isinstance(spectrum, SpdSpectrum):
        lam = spectrum.inv_std
    else:
        lam = np.asarray(spectrum, dtype=float)
    d = lam.size
    w = np.ones_like(lam) if weight is None else np.asarray(weight(lam), dtype=float)
    return float(np.sum(w * lam**power) / d ** (1.0 + power * kappa))


def builtin_phi(name: str, amplitude: float = 1.0) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """Built-in bounded change-of-measure functions.

    Returns ``(phi, bound)``.  ``bounded_cosine`` is
    ``phi(x) = amplitude * mean(cos(x_i))``: bounded by ``amplitude``,
    Lipschitz, and factorizing over coordinates, which makes low-dimensional
    quadrature oracles cheap.  ``zero`` must make a change-of-measure target
    behave identically to its Gaussian reference.
    """
    if amplitude < 0:
        raise ModelError(f"amplitude must be >= 0, got {amplitude}")
    if name == "zero":
        return (lambda x: np.zeros(np.asarray(x).shape[:-1]), 0.0)
    if name == "bounded_cosine":

        def phi(x: np.ndarray) -> np.ndarray:
            return amplitude * np.mean(np.cos(x), axis=-1)

        return (phi, amplitude)
    raise ModelError(f"unknown phi name {name!r}")


def target_to_json(target: GaussianTarget, q_seed: int | None = None) -> str:
    """Serialize a target to the interchange JSON schema.

    When the basis came from :func:`random_orthogonal` with a known seed,
    pass ``q_seed`` to store the seed instead of the dense matrix.
    """
    doc: dict = {
        "dim": target.dim,
        "eigenvalues": target.spectrum.eigenvalues.tolist(),
        "b": target.shift.tolist(),
    }
    if q_seed is not None:
        doc["q_seed"] = q_seed
    elif target.spectrum.basis is not None:
        doc["Q"] = target.spectrum.basis.tolist()
    return json.dumps(doc)


def target_from_json(text: str) -> GaussianTarget:
    doc = json.loads(text)
    dim = int(doc["dim"])
    eigenvalues = np.asarray(doc["eigenvalues"], dtype=float)
    if eigenvalues.size != dim:
        raise ModelError("eigenvalue count does not match dim")
    if "q_seed" in doc:
        basis = random_orthogonal(dim, np.random.default_rng(int(doc["q_seed"])))
    elif "Q" in doc:
        basis = np.asarray(doc["Q"], dtype=float)
    else:
        basis = None
    order = np.argsort(eigenvalues)
    if basis is not None:
        basis = basis[:, order]
    spectrum = SpdSpectrum(eigenvalues[order], basis)
    return GaussianTarget(spectrum, np.asarray(doc["b"], dtype=float))
