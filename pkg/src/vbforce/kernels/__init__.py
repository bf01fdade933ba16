"""Convolution/pooling kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imported cleanly and the
environment variable ``VBFORCE_PURE_PYTHON`` is unset/0; otherwise the
numpy reference implementation serves.  ``BACKEND`` records the choice.
"""

import os

from . import reference

try:
    from . import _native
except ImportError:  # extension not built
    _native = None

if _native is not None and os.environ.get("VBFORCE_PURE_PYTHON", "0") != "1":
    BACKEND = "native"
    im2col = _native.im2col
    col2im = _native.col2im
    maxpool2x2 = _native.maxpool2x2
    maxpool2x2_backward = _native.maxpool2x2_backward
else:
    BACKEND = "numpy"
    im2col = reference.im2col
    col2im = reference.col2im
    maxpool2x2 = reference.maxpool2x2
    maxpool2x2_backward = reference.maxpool2x2_backward

conv_out_size = reference.conv_out_size

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "maxpool2x2",
    "maxpool2x2_backward",
    "conv_out_size",
    "reference",
]
