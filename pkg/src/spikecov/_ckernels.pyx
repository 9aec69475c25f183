# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the secular-equation root finder and the theta weights.

Same algorithms as ``_pykernels``; roots are solved one at a time with a
bracketed Newton iteration instead of the vectorised sweep.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite

from ._pykernels import check_spectrum
from .errors import ConvergenceError, DegenerateSpectrumError

cnp.import_array()

cdef double EPS = np.finfo(np.float64).eps
cdef int MAX_ITER = 200


cdef inline void _eval(const double[::1] act, double origin, double tau, int r,
                       double n, double* h, double* dh) noexcept nogil:
    cdef double s = 0.0, s2 = 0.0, d, q
    cdef int i
    for i in range(r):
        d = (act[i] - origin) - tau
        q = act[i] / d
        s += q
        s2 += q / d
    h[0] = s - n
    dh[0] = s2


def secular_roots(lam, long n):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lam_arr = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t p = lam_arr.shape[0]
    act_np, m_py = check_spectrum(lam_arr, n)
    cdef double[::1] act = act_np
    cdef int r = act.shape[0]
    cdef int m = m_py
    nu_np = np.zeros(p)
    res_np = np.zeros(p)
    cdef double[::1] nu = nu_np
    cdef double[::1] res = res_np
    cdef double nd = <double>n
    cdef double upper, lower, mid, origin, lo, hi, tau, step, h, dh
    cdef int k, it, max_it = 0, failed = -1
    with nogil:
        for k in range(m):
            upper = act[k]
            lower = act[k + 1] if k + 1 < r else 0.0
            mid = 0.5 * (upper + lower)
            _eval(act, 0.0, mid, r, nd, &h, &dh)
            if h >= 0.0:
                origin = lower
                lo = 0.0
                hi = mid - lower
            else:
                origin = upper
                lo = mid - upper
                hi = 0.0
            tau = 0.5 * (lo + hi)
            for it in range(1, MAX_ITER + 1):
                _eval(act, origin, tau, r, nd, &h, &dh)
                if h == 0.0:
                    break
                if h > 0.0:
                    hi = tau
                else:
                    lo = tau
                step = tau - h / dh
                if not isfinite(step) or step <= lo or step >= hi:
                    step = 0.5 * (lo + hi)
                if fabs(step - tau) <= 2.0 * EPS * fabs(step) or hi - lo <= 2.0 * EPS * max(fabs(lo), fabs(hi)):
                    tau = step
                    break
                tau = step
            else:
                failed = k
                break
            if it > max_it:
                max_it = it
            _eval(act, origin, tau, r, nd, &h, &dh)
            res[k] = fabs(h) / p
            nu[k] = origin + tau
    if failed >= 0:
        raise ConvergenceError(f"secular root {failed + 1} did not converge", MAX_ITER)
    return nu_np, res_np, max_it


def theta_weights(Py_ssize_t i, lam, nu):
    cdef double[::1] l = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] v = np.ascontiguousarray(nu, dtype=np.float64)
    cdef Py_ssize_t p = l.shape[0], k
    out = np.empty(p)
    cdef double[::1] w = out
    cdef double li = l[i], vi = v[i], a, b, acc = 0.0
    cdef int bad = 0
    with nogil:
        for k in range(p):
            if k == i:
                continue
            # 0/0 counts as 0; x/0 with x != 0 is degenerate
            if l[k] == li:
                if li != 0.0:
                    bad = 1
                a = 0.0
            else:
                a = li / (l[k] - li)
            if l[k] == vi:
                if vi != 0.0:
                    bad = 1
                b = 0.0
            else:
                b = vi / (l[k] - vi)
            w[k] = b - a
            if l[k] == li:
                a = 0.0
            else:
                a = l[k] / (li - l[k])
            if v[k] == li:
                if li != 0.0:
                    bad = 1
                b = 0.0
            else:
                b = v[k] / (li - v[k])
            acc += a - b
        w[i] = 1.0 + acc
    if bad:
        raise DegenerateSpectrumError("division by zero in theta weights")
    return out
