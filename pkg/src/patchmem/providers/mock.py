"""Deterministic offline provider used for tests and mock-mode runs.

The embedding is a fixed seeded gaussian projection of simple window
statistics: per-channel mean, per-channel variance, a 4x4 per-channel
average-pooled block, and a constant bias term. Every statistic is computed
from the window's own pixels only, so the mock is exactly local: pixels
outside a window can never influence its embedding. Text embeddings hash
the template string into a seed. Segmentation is plain thresholding plus
connected components.
"""

import hashlib

import numpy as np
from scipy import ndimage

from ..decompose import WindowSpec, validate_image
from ..errors import ContractViolationError
from .base import ImageEmbeddings, Provider, ProviderDescriptor, ensure_unit

POOL_SIDE = 4
FEATURE_DIM = 3 + 3 + POOL_SIDE * POOL_SIDE * 3 + 1  # mean, var, pooled, bias
MIN_COMPONENT_PX = 16
BLANK_CONTRAST = 0.05


def _pooled_block(region: np.ndarray) -> np.ndarray:
    """Per-channel 4x4 average pooling with integer cell boundaries."""
    h, w = region.shape[:2]
    rb = (np.arange(POOL_SIDE + 1) * h) // POOL_SIDE
    cb = (np.arange(POOL_SIDE + 1) * w) // POOL_SIDE
    out = np.empty((POOL_SIDE, POOL_SIDE, 3), dtype=np.float64)
    for i in range(POOL_SIDE):
        r0 = min(int(rb[i]), h - 1)
        r1 = max(int(rb[i + 1]), r0 + 1)
        for j in range(POOL_SIDE):
            c0 = min(int(cb[j]), w - 1)
            c1 = max(int(cb[j + 1]), c0 + 1)
            out[i, j] = region[r0:r1, c0:c1].mean(axis=(0, 1))
    return out


def region_features(region: np.ndarray) -> np.ndarray:
    """FEATURE_DIM summary statistics of one pixel region, float64."""
    px = region.reshape(-1, 3).astype(np.float64)
    return np.concatenate([
        px.mean(axis=0),
        px.var(axis=0),
        _pooled_block(region.astype(np.float64)).ravel(),
        [1.0],
    ])


class MockProvider(Provider):
    """Pure-function provider: everything derives from (seed, pixels)."""

    def __init__(self, seed: int = 0, dim: int = 64, patch_size: int = 16):
        self.seed = int(seed)
        self._descriptor = ProviderDescriptor(
            name=f"mock-{seed}", dim=dim, patch_size=patch_size, deterministic=True)
        rng = np.random.default_rng(self.seed)
        self._projection = rng.standard_normal((dim, FEATURE_DIM))

    def descriptor(self) -> ProviderDescriptor:
        return self._descriptor

    def _embed_region(self, region: np.ndarray) -> np.ndarray:
        raw = self._projection @ region_features(region)
        norm = np.linalg.norm(raw)
        if norm < 1e-12:
            raise ContractViolationError("degenerate mock projection")
        return ensure_unit((raw / norm).astype(np.float32))

    def embed_window(self, image: np.ndarray, window: WindowSpec) -> np.ndarray:
        arr, grid = self.check_canonical(image)
        self.check_window(grid, window)
        top, left, h, w = window.pixel_box(grid.patch_size)
        return self._embed_region(arr[top:top + h, left:left + w])

    def embed_image(self, image: np.ndarray) -> ImageEmbeddings:
        arr, grid = self.check_canonical(image)
        ps = grid.patch_size
        dim = self._descriptor.dim
        tokens = np.empty((grid.rows, grid.cols, dim), dtype=np.float32)
        for r in range(grid.rows):
            for c in range(grid.cols):
                tokens[r, c] = self._embed_region(
                    arr[r * ps:(r + 1) * ps, c * ps:(c + 1) * ps])
        return ImageEmbeddings(class_token=self._embed_region(arr),
                               patch_tokens=tokens)

    def embed_templates(self, templates: list[str]) -> np.ndarray:
        if not templates:
            raise ContractViolationError("template list is empty")
        dim = self._descriptor.dim
        out = np.empty((len(templates), dim), dtype=np.float32)
        for i, text in enumerate(templates):
            digest = hashlib.sha256(f"{self.seed}|{text}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(dim)
            out[i] = (vec / np.linalg.norm(vec)).astype(np.float32)
        return out

    def segment_objects(self, image: np.ndarray) -> list[np.ndarray]:
        # Runs on the original image before any canonical resize, so only
        # the basic image contract applies here.
        arr = validate_image(image)
        gray = arr.mean(axis=2, dtype=np.float64)
        lo, hi = float(gray.min()), float(gray.max())
        if hi - lo < BLANK_CONTRAST:
            return []
        fg = gray > (hi + lo) / 2.0
        labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
        masks = []
        for lab in range(1, n + 1):
            mask = labels == lab
            area = int(mask.sum())
            if area >= MIN_COMPONENT_PX:
                masks.append((area, lab, mask))
        masks.sort(key=lambda t: (-t[0], t[1]))
        return [m for _, _, m in masks]
