"""Pure NumPy implementations of the hot kernels.

These are the reference semantics; the compiled extension in ``_native``
must agree bitwise (same BLAS calls, same block boundaries, same
first-index tie-breaking).
"""

import numpy as np

DEFAULT_BLOCK_ROWS = 8192


def check_search_args(queries, bank, block_rows):
    """Normalize to C-contiguous float32 and reject malformed inputs."""
    q = np.ascontiguousarray(queries, dtype=np.float32)
    b = np.ascontiguousarray(bank, dtype=np.float32)
    if q.ndim != 2 or b.ndim != 2:
        raise ValueError(f"expected 2-d arrays, got {q.shape} and {b.shape}")
    if q.shape[1] != b.shape[1]:
        raise ValueError(f"dim mismatch: queries {q.shape[1]}, bank {b.shape[1]}")
    if b.shape[0] == 0:
        raise ValueError("bank is empty")
    if block_rows < 1:
        raise ValueError(f"block_rows must be >= 1, got {block_rows}")
    return q, b


def check_paint_args(boxes, scores, rows, cols):
    """Validate box geometry; the compiled painter skips bounds checks."""
    bx = np.ascontiguousarray(boxes, dtype=np.int64)
    sc = np.ascontiguousarray(scores, dtype=np.float64)
    if bx.ndim != 2 or bx.shape[1] != 4:
        raise ValueError(f"boxes must be (k, 4), got {bx.shape}")
    if sc.shape != (bx.shape[0],):
        raise ValueError(f"scores shape {sc.shape} does not match {bx.shape[0]} boxes")
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be positive, got {rows}x{cols}")
    if bx.shape[0]:
        r0, c0, h, w = bx[:, 0], bx[:, 1], bx[:, 2], bx[:, 3]
        if (r0 < 0).any() or (c0 < 0).any() or (h < 1).any() or (w < 1).any() \
                or (r0 + h > rows).any() or (c0 + w > cols).any():
            raise ValueError("box outside grid")
    return bx, sc


def bank_search(queries: np.ndarray, bank: np.ndarray,
                block_rows: int = DEFAULT_BLOCK_ROWS) -> tuple[np.ndarray, np.ndarray]:
    """Exact max-dot-product search of ``queries`` against ``bank`` rows.

    Both arguments are float32 matrices with unit-norm rows. Returns
    ``(best_dot, best_row)`` per query. The bank is scanned in blocks of
    ``block_rows`` so the similarity matrix is never fully materialized;
    ties resolve to the lowest row index.
    """
    queries, bank = check_search_args(queries, bank, block_rows)
    nq = queries.shape[0]
    n = bank.shape[0]
    best = np.full(nq, -2.0, dtype=np.float32)
    best_idx = np.zeros(nq, dtype=np.int64)
    qi = np.arange(nq)
    for start in range(0, n, block_rows):
        block = bank[start:start + block_rows]
        sims = queries @ block.T
        local_idx = sims.argmax(axis=1)
        local_best = sims[qi, local_idx]
        improved = local_best > best
        best[improved] = local_best[improved]
        best_idx[improved] = local_idx[improved] + start
    return best, best_idx


def paint_harmonic(boxes: np.ndarray, scores: np.ndarray,
                   rows: int, cols: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate reciprocal scores and coverage counts over window boxes.

    ``boxes`` is an int64 (k, 4) array of (row0, col0, height, width) in
    grid cells; ``scores`` is float64 (k,). Scores are clamped below at
    ``eps`` before inversion. Returns float64 ``(recip_sum, count)`` grids.
    """
    boxes, scores = check_paint_args(boxes, scores, rows, cols)
    recip = np.zeros((rows, cols), dtype=np.float64)
    count = np.zeros((rows, cols), dtype=np.float64)
    for (r0, c0, h, w), s in zip(boxes, scores):
        inv = 1.0 / max(float(s), eps)
        recip[r0:r0 + h, c0:c0 + w] += inv
        count[r0:r0 + h, c0:c0 + w] += 1.0
    return recip, count
