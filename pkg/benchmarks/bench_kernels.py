"""Compare the compiled and numpy secular-root / weight kernels.

Usage: python3 benchmarks/bench_kernels.py [--p 100 300 1000] [--ratio 0.5] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from spikecov import _pykernels
from spikecov.estimators import effective_eigenvalues
from spikecov.linalg import sample_spectrum
from spikecov.models import build_model, draw_sample

try:
    from spikecov import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _spectrum(p: int, n: int) -> np.ndarray:
    _, spec = sample_spectrum(draw_sample(build_model(1, p), n, "normal", 0))
    return effective_eigenvalues(spec.eigenvalues, n)


def _time(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--p", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--ratio", type=float, default=0.5, help="p/n")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'p':>6} {'n':>6} " + " ".join(f"{name + ' roots':>14} {name + ' theta':>14}" for name, _ in backends) + "  speedup")
    for p in args.p:
        n = max(2, int(round(p / args.ratio)))
        lam = _spectrum(p, n)
        row, roots_t = [], []
        for _, mod in backends:
            nu, _, _ = mod.secular_roots(lam, n)
            tr = _time(lambda: mod.secular_roots(lam, n), args.repeat)
            tt = _time(lambda: mod.theta_weights(0, lam, nu), args.repeat)
            roots_t.append(tr)
            row.append(f"{tr * 1e3:>12.3f}ms {tt * 1e3:>12.3f}ms")
        speed = f"{roots_t[0] / roots_t[1]:7.1f}x" if len(roots_t) == 2 else "      -"
        print(f"{p:>6} {n:>6} " + " ".join(row) + "  " + speed)


if __name__ == "__main__":
    main()
