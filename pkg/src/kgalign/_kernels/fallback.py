"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
KGALIGN_FORCE_FALLBACK=1). Must match kgalign._kernels._fast exactly.
"""
import numpy as np

# Broadcasting a full (nq, nc, d) block would blow memory at DBP15K scale,
# so queries are processed in row blocks.
_BLOCK_ROWS = 256


def l1_cross(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Pairwise L1 distances: out[i, j] = sum_k |queries[i,k] - candidates[j,k]|."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    candidates = np.ascontiguousarray(candidates, dtype=np.float64)
    if queries.shape[1] != candidates.shape[1]:
        raise ValueError("dimension mismatch")
    out = np.empty((queries.shape[0], candidates.shape[0]), dtype=np.float64)
    for start in range(0, queries.shape[0], _BLOCK_ROWS):
        block = queries[start:start + _BLOCK_ROWS]
        out[start:start + _BLOCK_ROWS] = np.abs(
            block[:, None, :] - candidates[None, :, :]
        ).sum(axis=2)
    return out


def segment_sum(values: np.ndarray, segments: np.ndarray, num_segments: int) -> np.ndarray:
    """Sum rows of ``values`` into ``num_segments`` buckets given by ``segments``."""
    values = np.asarray(values, dtype=np.float64)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape[0] != values.shape[0]:
        raise ValueError("segment ids must match value rows")
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise IndexError("segment id out of range")
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, segments, values)
    return out
