"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``SPIKECOV_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SPIKECOV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

secular_roots = _impl.secular_roots
theta_weights = _impl.theta_weights

__all__ = ["BACKEND", "secular_roots", "theta_weights"]
