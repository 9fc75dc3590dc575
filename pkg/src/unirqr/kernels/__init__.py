"""Numeric kernel dispatch: compiled extension when available, numpy otherwise.

The backend is selected at import time; set UNIRQR_PURE_PYTHON=1 to force
the numpy reference implementation. `use_backend` switches at runtime,
which the benchmark and the cross-backend equivalence tests rely on.
"""

from __future__ import annotations

import os

from . import reference

_KERNEL_NAMES = (
    "softmax_rows",
    "softmax_backward_rows",
    "layernorm_forward",
    "layernorm_backward",
    "gelu_forward",
    "gelu_backward",
    "cross_entropy_forward",
    "cross_entropy_backward",
)

_BACKENDS: dict[str, object] = {"reference": reference}

try:  # pragma: no cover - exercised only when the extension is built
    if os.environ.get("UNIRQR_PURE_PYTHON") != "1":
        from unirqr import _kernels as _compiled

        _BACKENDS["compiled"] = _compiled
except ImportError:
    pass

BACKEND = "compiled" if "compiled" in _BACKENDS else "reference"
_active = _BACKENDS[BACKEND]


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def use_backend(name: str) -> None:
    """Switch the active kernel backend ("reference" or "compiled")."""
    global BACKEND, _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    BACKEND = name
    _active = _BACKENDS[name]


def _dispatch(name):
    def call(*args, **kwargs):
        return getattr(_active, name)(*args, **kwargs)

    call.__name__ = name
    call.__doc__ = getattr(reference, name).__doc__
    return call


softmax_rows = _dispatch("softmax_rows")
softmax_backward_rows = _dispatch("softmax_backward_rows")
layernorm_forward = _dispatch("layernorm_forward")
layernorm_backward = _dispatch("layernorm_backward")
gelu_forward = _dispatch("gelu_forward")
gelu_backward = _dispatch("gelu_backward")
cross_entropy_forward = _dispatch("cross_entropy_forward")
cross_entropy_backward = _dispatch("cross_entropy_backward")
