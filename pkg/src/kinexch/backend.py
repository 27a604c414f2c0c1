"""Kernel backend selection.

The hot numerical kernels (event loops, RK4 stepping) live in
``kinexch._kernel_src`` as plain Python functions operating on numpy
arrays.  They are written so that the same source can either be compiled
with numba's ``@njit`` or executed as-is (pure numpy fallback).

The active backend is chosen once at import time from the environment
variable ``KINEXCH_BACKEND``:

* ``numba``  - require numba, fail if it is missing
* ``numpy``  - pure-Python/numpy fallback, never import numba
* unset/auto - use numba when importable, else fall back to numpy

Both variants are importable side by side (``numba_kernels`` /
``numpy_kernels``) so they can be benchmarked and cross-checked; results
are bitwise identical because the fallback runs the identical source.
"""

from __future__ import annotations

import importlib.util
import os
from types import ModuleType

__all__ = [
    "active_kernels",
    "backend_name",
    "numba_available",
    "numba_kernels",
    "numpy_kernels",
]

# Functions compiled in dependency order (callees before callers).
_KERNEL_NAMES = [
    "rng_mix",
    "rng_next",
    "rng_uniform",
    "fenwick_build",
    "fenwick_add",
    "fenwick_prefix",
    "fenwick_total",
    "fenwick_search",
    "exchange_weight",
    "weights_from_state",
    "abm_run",
    "q_apply",
    "rk4_run",
    "coupled_unbiased_kernel",
]


def _fresh_source_module() -> ModuleType:
    spec = importlib.util.find_spec("kinexch._kernel_src")
    if spec is None or spec.loader is None:
        raise ImportError("kinexch._kernel_src not found")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def _requested() -> str:
    req = os.environ.get("KINEXCH_BACKEND", "auto").strip().lower()
    if req in ("", "auto"):
        return "auto"
    if req in ("numba", "jit"):
        return "numba"
    if req in ("numpy", "python", "nojit"):
        return "numpy"
    raise ValueError(f"unrecognised KINEXCH_BACKEND={req!r} (use 'numba' or 'numpy')")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


_numpy_mod = _fresh_source_module()
_numba_mod: ModuleType | None = None


def _build_numba_module() -> ModuleType:
    from numba import njit

    mod = _fresh_source_module()
    for name in _KERNEL_NAMES:
        fn = getattr(mod, name)
        # rebinding the module global makes callers pick up the jitted callee
        setattr(mod, name, njit(cache=True, nogil=True)(fn))
    return mod


_req = _requested()
if _req == "numba" or (_req == "auto" and numba_available()):
    _numba_mod = _build_numba_module()
    _active = _numba_mod
    _name = "numba"
else:
    _active = _numpy_mod
    _name = "numpy"


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _name


def active_kernels() -> ModuleType:
    return _active


def numpy_kernels() -> ModuleType:
    """The uncompiled kernel module (always available)."""
    return _numpy_mod


def numba_kernels() -> ModuleType:
    """The numba-compiled kernel module (compiles lazily on first call)."""
    global _numba_mod
    if _numba_mod is None:
        if not numba_available():
            raise ImportError("numba is not installed")
        _numba_mod = _build_numba_module()
    return _numba_mod
