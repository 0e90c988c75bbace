"""Numba switch.

Hot kernels are written twice: a loop version compiled with numba and a
vectorised numpy version. ``SIGDRAWDOWN_NUMBA=0`` selects the numpy path
for the whole process; individual calls can still ask for either backend.
"""
import os

_FLAG = os.environ.get("SIGDRAWDOWN_NUMBA", "1").strip().lower()

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn

USE_NUMBA = HAS_NUMBA and _FLAG not in ("0", "false", "no", "off")

BACKENDS = ("numba", "numpy")


def resolve_backend(backend=None):
    """Return ``"numba"`` or ``"numpy"`` for an optional user choice."""
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend
