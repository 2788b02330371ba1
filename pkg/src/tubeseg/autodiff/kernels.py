"""Backend selection for the 3x3 convolution kernels.

The compiled extension is preferred when importable; the numpy fallback is
always available. ``TUBESEG_CONV_BACKEND=numpy|compiled`` forces a choice at
import time, and ``use_backend`` switches at runtime (used by the benchmark
and the cross-backend agreement tests).
"""

import os

from . import _convnp
from ..errors import ConfigError

try:
    from . import _convext
except ImportError:
    _convext = None

_BACKENDS = {"numpy": _convnp}
if _convext is not None:
    _BACKENDS["compiled"] = _convext

_active_name = None
_active = None


def available_backends() -> tuple:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active_name


def use_backend(name: str) -> None:
    global _active_name, _active
    if name not in _BACKENDS:
        raise ConfigError(
            f"conv backend {name!r} not available (have {available_backends()})"
        )
    _active_name = name
    _active = _BACKENDS[name]


def conv3x3_forward(x, k):
    return _active.conv3x3_forward(x, k)


def conv3x3_grad_input(k, dout):
    return _active.conv3x3_grad_input(k, dout)


def conv3x3_grad_kernel(x, dout):
    return _active.conv3x3_grad_kernel(x, dout)


_requested = os.environ.get("TUBESEG_CONV_BACKEND", "").strip().lower()
if _requested:
    use_backend(_requested)
else:
    use_backend("compiled" if _convext is not None else "numpy")
