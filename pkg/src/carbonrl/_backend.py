"""Kernel backend selection: numba fast paths with pure-numpy fallbacks.

Hot numeric kernels are registered in pairs (numpy implementation + numba
implementation). The active backend is chosen once at import from the
``CARBONRL_BACKEND`` environment variable ("numba", "numpy", or "auto") and can
be switched at runtime with :func:`use`, which keeps both paths exercisable
from tests and from ``benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import os
from typing import Callable

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

ENV_VAR = "CARBONRL_BACKEND"
_VALID = ("numba", "numpy")


class BackendError(RuntimeError):
    """Requested kernel backend is unknown or unavailable."""


def _resolve(name: str) -> str:
    name = name.strip().lower()
    if name == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in _VALID:
        raise BackendError(f"unknown backend {name!r}; expected one of {_VALID} or 'auto'")
    if name == "numba" and not HAVE_NUMBA:
        raise BackendError("numba backend requested but numba is not importable")
    return name


_active = _resolve(os.environ.get(ENV_VAR, "auto"))


def active() -> str:
    """Name of the backend kernels currently dispatch to."""
    return _active


def use(name: str) -> None:
    """Switch the active backend ("numba", "numpy", or "auto")."""
    global _active
    _active = _resolve(name)


def njit(fn: Callable) -> Callable:
    """Compile ``fn`` with numba when available, else return it unchanged.

    Used for single-source scalar kernels that other njit kernels call; the
    returned object is what numba code must reference.
    """
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


class Kernel:
    """Callable that routes to the numpy or numba implementation at call time."""

    __slots__ = ("name", "_numpy", "_numba")

    def __init__(self, name: str, numpy_impl: Callable, numba_impl: Callable | None):
        self.name = name
        self._numpy = numpy_impl
        self._numba = numba_impl

    def __call__(self, *args):
        if _active == "numba" and self._numba is not None:
            return self._numba(*args)
        return self._numpy(*args)

    def impl(self, backend: str) -> Callable:
        if backend == "numba":
            if self._numba is None:
                raise BackendError(f"kernel {self.name!r} has no numba implementation")
            return self._numba
        return self._numpy


_REGISTRY: dict[str, Kernel] = {}


def kernel(name: str, numpy_impl: Callable, numba_src: Callable | None = None) -> Kernel:
    """Register a dual-implementation kernel.

    ``numba_src`` is the loop-style source compiled with ``@njit``; when omitted
    the numpy implementation itself is compiled (single-source scalar kernels).
    """
    numba_impl = None
    if HAVE_NUMBA:
        numba_impl = numba.njit(cache=True)(numba_src if numba_src is not None else numpy_impl)
    k = Kernel(name, numpy_impl, numba_impl)
    _REGISTRY[name] = k
    return k


def registry() -> dict[str, Kernel]:
    return dict(_REGISTRY)
