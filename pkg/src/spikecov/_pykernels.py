"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them loop for loop.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .errors import ConvergenceError, DegenerateSpectrumError

EPS = np.finfo(np.float64).eps
MAX_ITER = 200
GAP_TOL = 1e-12


def check_spectrum(lam: NDArray[np.float64], n: int) -> tuple[NDArray[np.float64], int]:
    """Return the positive part of ``lam`` used by the secular equation and the root count."""
    p = lam.shape[0]
    r = p if p < n else n
    act = np.ascontiguousarray(lam[:r], dtype=np.float64)
    scale = max(1.0, float(act[0])) if r else 1.0
    if r and act[r - 1] <= 0.0:
        raise DegenerateSpectrumError("secular equation needs strictly positive leading eigenvalues")
    gaps = act[:-1] - act[1:]
    if gaps.size and np.min(gaps) <= GAP_TOL * scale:
        k = int(np.argmin(gaps))
        raise DegenerateSpectrumError(
            f"eigenvalues {k + 1} and {k + 2} coincide within {GAP_TOL:g} (gap {gaps[k]:.3e})"
        )
    m = p if p < n else n - 1
    return act, m


def secular_roots(lam: NDArray[np.float64], n: int) -> tuple[NDArray[np.float64], NDArray[np.float64], int]:
    """Roots of ``sum_i lam_i / (lam_i - x) = n`` interlacing the descending ``lam``.

    Returns ``(nu, residual, iterations)`` with ``residual`` measured on the
    normalised form ``(1/p) sum_i lam_i / (lam_i - x) - n/p``. When ``p >= n``
    the trailing ``p - n + 1`` roots are exactly zero.
    """
    lam = np.asarray(lam, dtype=np.float64)
    p = lam.shape[0]
    act, m = check_spectrum(lam, n)
    nu = np.zeros(p)
    res = np.zeros(p)
    if m == 0:
        return nu, res, 0

    upper = act[:m]
    lower = np.append(act[1:], 0.0)[:m]
    mid = 0.5 * (upper + lower)
    h_mid = np.sum(act / (act[None, :] - mid[:, None]), axis=1) - n
    # work relative to the nearer pole so that lam_i - x keeps full precision
    use_lower = h_mid >= 0.0
    origin = np.where(use_lower, lower, upper)
    lo = np.where(use_lower, 0.0, mid - upper)
    hi = np.where(use_lower, mid - lower, 0.0)
    delta = act[None, :] - origin[:, None]
    tau = 0.5 * (lo + hi)
    done = np.zeros(m, dtype=bool)

    it = 0
    for it in range(1, MAX_ITER + 1):
        d = delta - tau[:, None]
        q = act / d
        h = q.sum(axis=1) - n
        dh = (q / d).sum(axis=1)
        pos = h > 0.0
        hi = np.where(pos & ~done, tau, hi)
        lo = np.where(~pos & ~done, tau, lo)
        step = tau - h / dh
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        conv = (h == 0.0) | (np.abs(new - tau) <= 2.0 * EPS * np.abs(new)) | (hi - lo <= 2.0 * EPS * np.maximum(np.abs(lo), np.abs(hi)))
        new = np.where(done | (h == 0.0), tau, new)
        tau = new
        done |= conv
        if done.all():
            break
    else:
        raise ConvergenceError("secular root iteration did not converge", MAX_ITER)

    d = delta - tau[:, None]
    res[:m] = np.abs((act / d).sum(axis=1) - n) / p
    nu[:m] = origin + tau
    return nu, res, it


def theta_weights(i: int, lam: NDArray[np.float64], nu: NDArray[np.float64]) -> NDArray[np.float64]:
    """Eigenvector weights for spike ``i`` (0-based); terms of the form 0/0 count as 0."""
    lam = np.asarray(lam, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    li, vi = lam[i], nu[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(lam == li, 0.0, li / (lam - li))
        b = np.where(lam == vi, 0.0, vi / (lam - vi))
        t = np.where(lam == lam[i], 0.0, lam / (li - lam))
        u = np.where(nu == li, 0.0, nu / (li - nu))
    if li != 0.0 and np.any((lam == li) & (np.arange(lam.size) != i)):
        raise DegenerateSpectrumError("spike eigenvalue is repeated")
    if (vi != 0.0 and np.any(lam == vi)) or (li != 0.0 and np.any(nu == li)):
        raise DegenerateSpectrumError("division by zero in theta weights")
    w = -(a - b)
    t[i] = 0.0
    u[i] = 0.0
    w[i] = 1.0 + float(np.sum(t - u))
    return w
