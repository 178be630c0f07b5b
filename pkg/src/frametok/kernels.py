"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection is an environment flag, read once at import:

    FRAMETOK_BACKEND=numba   require the jit kernels (error if numba missing)
    FRAMETOK_BACKEND=numpy   force the pure-numpy fallback
    unset / auto             numba when importable, numpy otherwise

`benchmarks/bench_backends.py` compares the two.
"""

import os

from .errors import ValidationError
from . import _kernels_np

_requested = os.environ.get("FRAMETOK_BACKEND", "auto").strip().lower() or "auto"

if _requested in ("auto", "numba"):
    try:
        from . import _kernels_nb as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise ValidationError("FRAMETOK_BACKEND=numba but numba is not importable")
        _impl = _kernels_np
        BACKEND = "numpy"
elif _requested == "numpy":
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    raise ValidationError(f"unknown FRAMETOK_BACKEND value: {_requested!r}")

matmul = _impl.matmul
pairwise_mean_sqdist = _impl.pairwise_mean_sqdist
topk_rows = _impl.topk_rows
indicator_mean = _impl.indicator_mean
topk_backward = _impl.topk_backward
