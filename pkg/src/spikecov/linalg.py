"""Dense symmetric linear algebra used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceError, InputError, NotPSDError

__all__ = [
    "EIG_TOL",
    "SampleSpectrum",
    "as_data_matrix",
    "sample_covariance",
    "eigh_descending",
    "matrix_sqrt_psd",
    "sample_spectrum",
]

EIG_TOL = 1e-10


@dataclass(frozen=True)
class SampleSpectrum:
    """Eigenvalues in descending order with matching orthonormal eigenvectors.

    ``eigenvectors[:, k]`` belongs to ``eigenvalues[k]``; ``dim_ratio`` is p/n.
    """

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    n_obs: int

    @property
    def p(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def dim_ratio(self) -> float:
        return self.p / self.n_obs


def as_data_matrix(data: ArrayLike) -> NDArray[np.float64]:
    """Validate an n x p observation matrix (rows are observations)."""
    y = np.asarray(data, dtype=np.float64)
    if y.ndim != 2:
        raise InputError(f"data must be two-dimensional, got shape {y.shape}")
    if y.shape[0] < 1 or y.shape[1] < 1:
        raise InputError(f"data must have at least one row and one column, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("data contains non-finite entries")
    return y


def _as_symmetric(m: ArrayLike) -> NDArray[np.float64]:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix contains non-finite entries")
    if not np.array_equal(a, a.T):
        raise InputError("matrix is not symmetric")
    return a


def sample_covariance(data: ArrayLike, center: bool = False) -> NDArray[np.float64]:
    """Uncentered sample covariance ``(1/n) sum_i y_i y_i^T``.

    ``center=True`` subtracts the column means first. The estimators in this
    package assume mean-zero populations and are not validated with centering.
    """
    y = as_data_matrix(data)
    if center:
        y = y - y.mean(axis=0)
    s = (y.T @ y) / y.shape[0]
    # exact symmetry as stored
    return 0.5 * (s + s.T)


def eigh_descending(m: ArrayLike, n_obs: int) -> SampleSpectrum:
    a = _as_symmetric(m)
    if n_obs < 1:
        raise InputError("n_obs must be positive")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed on a {a.shape[0]}x{a.shape[0]} matrix: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    return SampleSpectrum(w[order], v[:, order], int(n_obs))


def sample_spectrum(data: ArrayLike) -> tuple[NDArray[np.float64], SampleSpectrum]:
    """Sample covariance of ``data`` and its descending spectrum."""
    y = as_data_matrix(data)
    s = sample_covariance(y)
    return s, eigh_descending(s, y.shape[0])


def matrix_sqrt_psd(m: ArrayLike, tol: float = EIG_TOL) -> NDArray[np.float64]:
    """Symmetric PSD square root.

    Eigenvalues in ``[-tol * ||M||, 0)`` are clamped to zero; anything more
    negative raises :class:`NotPSDError`.
    """
    a = _as_symmetric(m)
    w, v = np.linalg.eigh(a)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w[0] < -tol * scale:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} below -tol")
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (r + r.T)
