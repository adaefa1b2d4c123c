"""Hot-kernel dispatch: compiled core when built, numpy fallback otherwise.

Set SHEARBC_KERNELS=pure to force the fallback, =cython to require the
extension. The two backends agree to float round-off (see tests) but are
not bit-identical to each other; each is deterministic on its own.
"""

import os

from . import pure

BACKEND = "pure"
_impl = pure

_requested = os.environ.get("SHEARBC_KERNELS", "").lower()
if _requested in ("", "cython"):
    try:
        from . import _ck

        _impl = _ck
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
elif _requested not in ("pure", "numpy"):
    raise ValueError(f"unknown SHEARBC_KERNELS value: {_requested!r}")

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward
block_match = _impl.block_match
