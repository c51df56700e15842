"""Backend selection for the hot kernels.

``JUMPFLOW_BACKEND=numpy`` forces the vectorised numpy kernels even when numba
is importable; ``JUMPFLOW_BACKEND=numba`` (the default) uses the compiled
kernels when numba is available and silently falls back otherwise.
"""

import os
import warnings

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    requested = os.environ.get("JUMPFLOW_BACKEND", "numba").strip().lower()
    if requested not in BACKENDS:
        raise ValueError(f"JUMPFLOW_BACKEND must be one of {BACKENDS}, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        warnings.warn("numba is not importable; using the numpy kernels", RuntimeWarning)
        return "numpy"
    return requested


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return backend
