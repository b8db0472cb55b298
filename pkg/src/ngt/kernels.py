"""Backend selection for the row kernels.

The compiled extension is used when it imports; set ``NGT_KERNELS=python``
to force the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("NGT_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels



def _dispatch(name):
    fast, slow = getattr(_impl, name), getattr(_pykernels, name)
    if fast is slow:
        return fast

    def kernel(x, *args):
        # compiled kernels are float64-only; extended precision stays in numpy
        return slow(x, *args) if x.dtype == np.longdouble else fast(x, *args)

    kernel.__name__ = name
    return kernel


softmax_rows = _dispatch("softmax_rows")
softmax_rows_backward = _dispatch("softmax_rows_backward")
layer_norm_rows = _dispatch("layer_norm_rows")
layer_norm_rows_backward = _dispatch("layer_norm_rows_backward")
gelu = _dispatch("gelu")
gelu_backward = _dispatch("gelu_backward")

__all__ = [
    "BACKEND",
    "softmax_rows",
    "softmax_rows_backward",
    "layer_norm_rows",
    "layer_norm_rows_backward",
    "gelu",
    "gelu_backward",
]
