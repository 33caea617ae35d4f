"""Hot-kernel dispatch: compiled Cython fast path with a numpy fallback.

Importers use ``l1_cross`` and ``segment_sum`` without caring which backend
is active; ``BACKEND`` names the one in use. Set KGALIGN_FORCE_FALLBACK=1
to pin the numpy path (useful for benchmarking and debugging).
"""
import os

from . import fallback

if os.environ.get("KGALIGN_FORCE_FALLBACK") == "1":
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"

l1_cross = _impl.l1_cross
segment_sum = _impl.segment_sum

__all__ = ["l1_cross", "segment_sum", "BACKEND", "fallback"]
