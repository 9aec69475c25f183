"""Single-sample estimators: secular roots, eigenvector weights, L4 norm, top spike, moments, kurtosis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from .errors import (
    DegenerateSpectrumError,
    InputError,
    NotDistantSpikeError,
    UnstableEstimateError,
)
from .linalg import SampleSpectrum, as_data_matrix, sample_spectrum

__all__ = [
    "NuRoots",
    "ThetaWeights",
    "SpikeEstimates",
    "MomentEstimates",
    "effective_eigenvalues",
    "nu_roots",
    "theta_weights",
    "l4_estimate",
    "alpha1_hat",
    "psi_prime_hat",
    "spectral_moments",
    "moment_estimators",
    "gamma4_hat",
    "estimate",
]

SEPARATION_TOL = 1e-8
PSI_PRIME_MAX = 1.5


@dataclass(frozen=True)
class NuRoots:
    values: NDArray[np.float64]
    solver_residuals: NDArray[np.float64]
    iterations: int = 0


@dataclass(frozen=True)
class ThetaWeights:
    spike_index: int
    weights: NDArray[np.float64]


@dataclass(frozen=True)
class SpikeEstimates:
    alpha_hat: float
    psi_prime_hat: float
    l4_hat: float
    vhat: NDArray[np.float64]
    nu: NuRoots
    weights: ThetaWeights

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha_hat": self.alpha_hat,
            "psi_prime_hat": self.psi_prime_hat,
            "l4_hat": self.l4_hat,
            "vhat": self.vhat.tolist(),
            "nu": self.nu.values.tolist(),
            "nu_max_residual": float(self.nu.solver_residuals.max(initial=0.0)),
            "theta": self.weights.weights.tolist(),
            "spike_index": self.weights.spike_index,
        }


@dataclass(frozen=True)
class MomentEstimates:
    s: NDArray[np.float64]
    a: NDArray[np.float64]
    gamma4_hat: float
    diag_sq_mean: float
    frak_m_hat: float

    def to_json(self) -> dict[str, Any]:
        return {
            "s": self.s.tolist(),
            "a": self.a.tolist(),
            "gamma4_hat": self.gamma4_hat,
            "diag_sq_mean": self.diag_sq_mean,
            "frak_m_hat": self.frak_m_hat,
        }


def effective_eigenvalues(eigenvalues: ArrayLike, n: int) -> NDArray[np.float64]:
    """Descending eigenvalues with the structural zeros (index >= n when p > n) set to exactly 0."""
    lam = np.array(eigenvalues, dtype=np.float64)
    if lam.shape[0] > n:
        lam[n:] = 0.0
    return lam


def nu_roots(eigenvalues: ArrayLike, p: int, n: int) -> NuRoots:
    """Solve ``(1/p) sum_i lam_i / (lam_i - x) = n/p`` for the p interlacing roots.

    One root is bracketed in each gap ``(lam_{k+1}, lam_k)`` and, when p < n,
    one in ``(0, lam_p)``. When p >= n the roots ``nu_n .. nu_p`` are zero.
    Coincident eigenvalues raise :class:`DegenerateSpectrumError`.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.shape[0] != p:
        raise InputError(f"expected {p} eigenvalues, got shape {lam.shape}")
    if n < 1:
        raise InputError("n must be positive")
    if np.any(np.diff(lam) > 0):
        raise InputError("eigenvalues must be sorted in descending order")
    nu, res, it = kernels.secular_roots(lam, n)
    return NuRoots(nu, res, it)


def theta_weights(i: int, eigenvalues: ArrayLike, nu: NuRoots | ArrayLike) -> ThetaWeights:
    """Weights turning squared sample-eigenvector coordinates into estimates for spike ``i`` (0-based)."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    values = nu.values if isinstance(nu, NuRoots) else np.asarray(nu, dtype=np.float64)
    if values.shape != lam.shape:
        raise InputError("eigenvalues and roots must have the same length")
    if not 0 <= i < lam.shape[0]:
        raise InputError(f"spike index {i} out of range")
    if values[i] == 0.0:
        # when p >= n only the top n-1 eigenvalues have a root in their gap
        raise InputError(f"spike index {i} has no secular root; at most n-1 spikes are estimable")
    return ThetaWeights(i, kernels.theta_weights(i, lam, values))


def l4_estimate(i: int, spectrum: SampleSpectrum) -> tuple[float, NDArray[np.float64], NuRoots, ThetaWeights]:
    """Estimate ``sum_j u_ij^4`` for the population eigenvector of spike ``i``.

    ``vhat[j] = sum_k theta_i(k) * uhat_k[j]^2`` estimates ``u_ij^2`` and the
    estimate is ``sum_j vhat[j]^2``. Returns ``(l4_hat, vhat, nu, weights)``.
    """
    lam = effective_eigenvalues(spectrum.eigenvalues, spectrum.n_obs)
    p = lam.shape[0]
    if i + 1 < p and lam[i] - lam[i + 1] <= SEPARATION_TOL:
        raise DegenerateSpectrumError(f"sample eigenvalue {i + 1} is not separated from its neighbour")
    nu = nu_roots(lam, p, spectrum.n_obs)
    w = theta_weights(i, lam, nu)
    vhat = (spectrum.eigenvectors**2) @ w.weights
    return float(vhat @ vhat), vhat, nu, w


def _gap_sums(eigenvalues: ArrayLike, c_n: float) -> tuple[float, float, float, float]:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    p = lam.shape[0]
    if c_n <= 0:
        raise InputError("c_n must be positive")
    l1 = float(lam[0])
    if l1 <= 0:
        raise DegenerateSpectrumError("largest eigenvalue must be positive")
    gaps = l1 - lam[1:]
    if gaps.size and gaps.min() <= 0.0:
        raise DegenerateSpectrumError("largest eigenvalue is not simple")
    inv_n = c_n / p
    return l1, inv_n, float(np.sum(1.0 / gaps)), float(np.sum(1.0 / gaps**2))


def alpha1_hat(eigenvalues: ArrayLike, c_n: float) -> float:
    """Estimate of the largest population spike from the sample spectrum.

    ``[(1 - c_n)/lam_1 + (1/n) sum_{j>=2} 1/(lam_1 - lam_j)]^{-1}``, with
    ``n = p / c_n``.
    """
    l1, inv_n, s1, _ = _gap_sums(eigenvalues, c_n)
    bracket = (1.0 - c_n) / l1 + inv_n * s1
    if bracket <= 0:
        raise UnstableEstimateError(f"alpha_1 estimate undefined: bracket {bracket:.3e} <= 0")
    return 1.0 / bracket


def psi_prime_hat(eigenvalues: ArrayLike, c_n: float) -> float:
    l1, inv_n, _, s2 = _gap_sums(eigenvalues, c_n)
    alpha = alpha1_hat(eigenvalues, c_n)
    dm = (1.0 - c_n) / l1**2 + inv_n * s2
    value = 1.0 / (alpha**2 * dm)
    if not 0.0 < value <= PSI_PRIME_MAX:
        raise NotDistantSpikeError(f"estimated psi' = {value:.4g} outside (0, {PSI_PRIME_MAX}]")
    return value


def spectral_moments(eigenvalues: ArrayLike, orders: int = 4) -> NDArray[np.float64]:
    """``s_m = tr(S^m) / p`` for ``m = 1..orders``."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    return np.array([np.mean(lam**m) for m in range(1, orders + 1)])


def moment_estimators(s: ArrayLike, c_n: float) -> NDArray[np.float64]:
    """Consistent estimators ``A_1..A_4`` of the population moments ``tr(Sigma^m)/p``."""
    s1, s2, s3, s4 = np.asarray(s, dtype=np.float64)
    c = c_n
    a1 = s1
    a2 = s2 - c * a1**2
    a3 = s3 - 3 * c * a1 * a2 - c**2 * a1**3
    a4 = s4 - 2 * c * a2**2 - 4 * c * a1 * a3 - 6 * c**2 * a1**2 * a2 - c**3 * a1**4
    return np.array([a1, a2, a3, a4])


def gamma4_hat(data: ArrayLike, cov: ArrayLike, spectrum: SampleSpectrum) -> MomentEstimates:
    y = as_data_matrix(data)
    s_mat = np.asarray(cov, dtype=np.float64)
    n, p = y.shape
    diag = np.diag(s_mat)
    denom = float(np.sum(diag**2))
    if denom <= 0:
        raise DegenerateSpectrumError("sample covariance has an all-zero diagonal")
    norms = np.einsum("ij,ij->i", y, y)
    tr_s = float(np.sum(diag))
    tr_s2 = float(np.sum(s_mat * s_mat))
    num = float(np.mean(norms**2)) - (1.0 - 2.0 / n) * tr_s**2 - 2.0 * tr_s2
    s = spectral_moments(spectrum.eigenvalues)
    return MomentEstimates(
        s=s,
        a=moment_estimators(s, p / n),
        gamma4_hat=num / denom + 3.0,
        diag_sq_mean=denom / p,
        frak_m_hat=float(np.sum((norms - tr_s) ** 2)) / (p * n),
    )


def spike_estimates(spectrum: SampleSpectrum, i: int = 0) -> SpikeEstimates:
    """All spike estimators for the largest spike (``alpha_hat``/``psi_prime_hat`` always use lam_1)."""
    c_n = spectrum.dim_ratio
    lam = effective_eigenvalues(spectrum.eigenvalues, spectrum.n_obs)
    l4, vhat, nu, w = l4_estimate(i, spectrum)
    return SpikeEstimates(
        alpha_hat=alpha1_hat(lam, c_n),
        psi_prime_hat=psi_prime_hat(lam, c_n),
        l4_hat=l4,
        vhat=vhat,
        nu=nu,
        weights=w,
    )


def estimate(data: ArrayLike, i: int = 0) -> tuple[SpikeEstimates, MomentEstimates]:
    """Full single-sample pipeline on an n x p data matrix."""
    y = as_data_matrix(data)
    cov, spec = sample_spectrum(y)
    return spike_estimates(spec, i), gamma4_hat(y, cov, spec)
