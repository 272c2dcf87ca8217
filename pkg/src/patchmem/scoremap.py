"""Score-map assembly: harmonic window accumulation and fixed-weight fusion.

A score map is a float64 (H, W) array of nonnegative pixel scores at the
canonical image resolution. Overlapping window scores combine by harmonic
averaging: a pixel covered by t windows scores t / sum(1/score_t). Fusion
is plain pixelwise weighted arithmetic; nothing here normalizes to [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .decompose import PatchGrid, WindowSpec
from .errors import ContractViolationError, InvalidInputError

EPS = 1e-6

ZERO_SHOT_WEIGHTS = (1.8, 0.2)
GLOBAL_WEIGHTS = (1.0, 1.0, 1.0)
INDIVIDUAL_WEIGHTS = (1.5, 0.5, 6.0)
FINAL_WEIGHTS = (0.55, 0.45)


@dataclass(frozen=True)
class WindowScore:
    window: WindowSpec
    score: float


def check_map(arr: np.ndarray, what: str = "score map") -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.size == 0:
        raise ContractViolationError(f"{what} must be a nonempty 2-d array, got {out.shape}")
    if not np.isfinite(out).all():
        raise ContractViolationError(f"{what} contains non-finite values")
    return out


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ContractViolationError(f"score map shapes differ: {a.shape} vs {b.shape}")


def accumulate_harmonic(scores: list[WindowScore], grid: PatchGrid) -> np.ndarray:
    """Harmonic-average window scores into a pixel map.

    A pixel covered by t windows scores t / sum(1/score); scores are
    clamped below at EPS before inversion, and pixels covered by no
    window score 0. Every pixel of a patch receives its patch's value.
    """
    if not scores:
        return np.zeros((grid.rows * grid.patch_size, grid.cols * grid.patch_size))
    boxes = np.empty((len(scores), 4), dtype=np.int64)
    vals = np.empty(len(scores), dtype=np.float64)
    for t, ws in enumerate(scores):
        w = ws.window
        if (w.row0 < 0 or w.col0 < 0 or w.row0 + w.rows > grid.rows
                or w.col0 + w.cols > grid.cols):
            raise InvalidInputError(f"window {w} outside grid {grid.rows}x{grid.cols}")
        if not np.isfinite(ws.score) or ws.score < 0:
            raise InvalidInputError(f"window score must be finite and >= 0, got {ws.score}")
        boxes[t] = (w.row0, w.col0, w.rows, w.cols)
        vals[t] = ws.score
    recip, count = kernels.paint_harmonic(boxes, vals, grid.rows, grid.cols, EPS)
    patch_map = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    covered = count > 0
    patch_map[covered] = count[covered] / recip[covered]
    return expand_patch_scores(patch_map, grid.patch_size)


def expand_patch_scores(values: np.ndarray, patch_size: int) -> np.ndarray:
    """Paint a per-patch grid of scores onto pixels (each patch is constant)."""
    vals = check_map(values, "patch scores")
    return np.repeat(np.repeat(vals, patch_size, axis=0), patch_size, axis=1)


def fuse_zero_shot(small: np.ndarray, mid: np.ndarray, a: float,
                   weights: tuple[float, float] = ZERO_SHOT_WEIGHTS) -> np.ndarray:
    """a * (w1*small + w2*mid), defaults (1.8, 0.2)."""
    s = check_map(small, "small map")
    m = check_map(mid, "mid map")
    _check_same_shape(s, m)
    return a * (weights[0] * s + weights[1] * m)


def fuse_three_scale(small: np.ndarray, mid: np.ndarray, image: np.ndarray,
                     weights: tuple[float, float, float]) -> np.ndarray:
    """Pixelwise w1*small + w2*mid + w3*image."""
    s = check_map(small, "small map")
    m = check_map(mid, "mid map")
    i = check_map(image, "image map")
    _check_same_shape(s, m)
    _check_same_shape(s, i)
    return weights[0] * s + weights[1] * m + weights[2] * i


def fuse_few_shot_final(global_map: np.ndarray, indiv_map: np.ndarray, a: float,
                        weights: tuple[float, float] = FINAL_WEIGHTS) -> np.ndarray:
    """a * (wg*global + wi*indiv), defaults (0.55, 0.45)."""
    g = check_map(global_map, "global map")
    i = check_map(indiv_map, "individual map")
    _check_same_shape(g, i)
    return a * (weights[0] * g + weights[1] * i)


def max_pixel(score_map: np.ndarray) -> float:
    m = check_map(score_map)
    return float(m.max())
