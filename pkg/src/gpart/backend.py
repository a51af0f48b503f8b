"""Kernel backend selection.

The compiled extension is preferred when importable; set
GPART_PURE_PYTHON=1 to force the pure fallback. The two implementations
return bit-identical arrays, so the choice only affects speed.
"""

import os

from . import _kernels_py

if os.environ.get("GPART_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
splitmix64_stream = _impl.splitmix64_stream
shuffled_indices = _impl.shuffled_indices
gather = _impl.gather
group_sums = _impl.group_sums
