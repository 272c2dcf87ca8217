"""Image decomposition: canonical resize, sliding patch windows, object crops.

Images are float32 arrays of shape (H, W, 3) with values in [0, 1].
Windows live on the ViT patch grid; object crops are square, resized to the
canonical side, and carry an invertible mapping back to original pixels.
All functions are pure.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError


class Scale(str, Enum):
    SMALL = "small"
    MIDDLE = "middle"
    IMAGE = "image"

    @property
    def window_patches(self) -> int | None:
        """Window side in patches; None means the full grid."""
        return {Scale.SMALL: 2, Scale.MIDDLE: 3, Scale.IMAGE: None}[self]


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    rows: int
    cols: int

    @classmethod
    def for_image(cls, height: int, width: int, patch_size: int) -> "PatchGrid":
        if patch_size < 1:
            raise InvalidInputError(f"patch_size must be >= 1, got {patch_size}")
        if height % patch_size or width % patch_size:
            raise InvalidInputError(
                f"image {height}x{width} not divisible by patch size {patch_size}")
        return cls(patch_size, height // patch_size, width // patch_size)


@dataclass(frozen=True)
class WindowSpec:
    scale: Scale
    row0: int
    col0: int
    rows: int
    cols: int

    def pixel_box(self, patch_size: int) -> tuple[int, int, int, int]:
        """(top, left, height, width) of the window in pixels."""
        return (self.row0 * patch_size, self.col0 * patch_size,
                self.rows * patch_size, self.cols * patch_size)


@dataclass(frozen=True)
class ObjectCrop:
    """A square, canonically resized single-object image.

    ``bbox_original`` is (top, left, height, width) in original pixels
    (margin already applied, clipped to the image). ``pad`` is the
    (top, left, bottom, right) mean-color padding added to square the bbox
    before resizing by ``scale_factor = crop_side / padded_side``.
    """
    crop: np.ndarray
    mask: np.ndarray
    bbox_original: tuple[int, int, int, int]
    pad: tuple[int, int, int, int]
    scale_factor: float
    area: int

    @property
    def padded_side(self) -> int:
        top, left, h, w = self.bbox_original
        return h + self.pad[0] + self.pad[2]

    def original_to_crop(self, y: float, x: float) -> tuple[float, float]:
        top, left, _, _ = self.bbox_original
        py = y - top + self.pad[0]
        px = x - left + self.pad[1]
        s = self.scale_factor
        return (py + 0.5) * s - 0.5, (px + 0.5) * s - 0.5

    def crop_to_original(self, cy: float, cx: float) -> tuple[float, float]:
        top, left, _, _ = self.bbox_original
        s = self.scale_factor
        py = (cy + 0.5) / s - 0.5
        px = (cx + 0.5) / s - 0.5
        return py - self.pad[0] + top, px - self.pad[1] + left


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) float [0, 1] contract; returns float32 view/copy."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.size == 0:
        raise InvalidInputError("empty image")
    arr = arr.astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise InvalidInputError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError("image values outside [0, 1]")
    return arr


def _bilinear_axis(length_in: int, length_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center convention (align_corners=False), clamped to the edge.
    coords = (np.arange(length_out, dtype=np.float64) + 0.5) * (length_in / length_out) - 0.5
    coords = np.clip(coords, 0.0, length_in - 1.0)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, length_in - 1)
    return lo, hi, (coords - lo)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W[, C]) array; identity shapes short-circuit.

    Uses the lerp form a + t*(b - a), which preserves constant fields
    bit-exactly for any fractional weight.
    """
    if image.shape[0] == out_h and image.shape[1] == out_w:
        return image.copy()
    y0, y1, wy = _bilinear_axis(image.shape[0], out_h)
    x0, x1, wx = _bilinear_axis(image.shape[1], out_w)
    if image.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    dtype = image.dtype if image.dtype in (np.float32, np.float64) else np.float64
    img = image.astype(dtype, copy=False)
    top = img[y0][:, x0]
    top = top + wx * (img[y0][:, x1] - top)
    bot = img[y1][:, x0]
    bot = bot + wx * (img[y1][:, x1] - bot)
    return (top + wy * (bot - top)).astype(dtype, copy=False)


def nearest_resize(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize for binary masks (same center convention)."""
    if mask.shape[0] == out_h and mask.shape[1] == out_w:
        return mask.copy()
    ys = np.clip(np.rint((np.arange(out_h) + 0.5) * (mask.shape[0] / out_h) - 0.5),
                 0, mask.shape[0] - 1).astype(np.int64)
    xs = np.clip(np.rint((np.arange(out_w) + 0.5) * (mask.shape[1] / out_w) - 0.5),
                 0, mask.shape[1] - 1).astype(np.int64)
    return mask[ys][:, xs]


def resize_to_canonical(image: np.ndarray, target: int) -> np.ndarray:
    """Resize to target x target with bilinear interpolation, clipped to [0, 1]."""
    arr = validate_image(image)
    if target < 1:
        raise InvalidInputError(f"target must be >= 1, got {target}")
    if arr.shape[0] == target and arr.shape[1] == target:
        return arr.copy()
    out = bilinear_resize(arr, target, target)
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def _axis_positions(n: int, w: int, stride: int) -> list[int]:
    # Edge-flush rule: the final position is clamped so the window touches
    # the grid boundary even when (n - w) is not a stride multiple.
    last = n - w
    positions = list(range(0, last + 1, stride))
    if positions[-1] != last:
        positions.append(last)
    return positions


def enumerate_windows(grid: PatchGrid, scale: Scale, stride: int = 1) -> list[WindowSpec]:
    """Row-major sliding windows at one scale, edge-flush at the borders."""
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    side = scale.window_patches
    if side is None:
        return [WindowSpec(scale, 0, 0, grid.rows, grid.cols)]
    if side > grid.rows or side > grid.cols:
        raise InvalidInputError(
            f"{scale.value} window ({side}x{side}) larger than grid "
            f"{grid.rows}x{grid.cols}")
    rows = _axis_positions(grid.rows, side, stride)
    cols = _axis_positions(grid.cols, side, stride)
    return [WindowSpec(scale, r, c, side, side) for r in rows for c in cols]


def coverage_gaps(grid: PatchGrid, windows: list[WindowSpec]) -> list[tuple[int, int]]:
    """Patches not covered by any window, row-major. Empty means full coverage."""
    covered = np.zeros((grid.rows, grid.cols), dtype=bool)
    for w in windows:
        covered[w.row0:w.row0 + w.rows, w.col0:w.col0 + w.cols] = True
    gaps = np.argwhere(~covered)
    return [(int(r), int(c)) for r, c in gaps]


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def dedupe_masks(masks: list[np.ndarray], iou_threshold: float = 0.9) -> list[np.ndarray]:
    """Drop near-duplicate masks (IoU > threshold), keeping the larger one."""
    order = sorted(range(len(masks)), key=lambda i: int(masks[i].sum()), reverse=True)
    kept: list[int] = []
    for i in order:
        if all(mask_iou(masks[i], masks[j]) <= iou_threshold for j in kept):
            kept.append(i)
    kept.sort()
    return [masks[i] for i in kept]


def whole_image_crop(image: np.ndarray, target: int) -> ObjectCrop:
    """Fallback crop covering the full frame (used when segmentation is empty)."""
    arr = validate_image(image)
    h, w = arr.shape[:2]
    mask = np.ones((h, w), dtype=bool)
    return _crop_from_mask(arr, mask, target, margin=0.0,
                           mean_color=arr.reshape(-1, 3).mean(axis=0))


def _crop_from_mask(image: np.ndarray, mask: np.ndarray, target: int,
                    margin: float, mean_color: np.ndarray) -> ObjectCrop:
    h_img, w_img = image.shape[:2]
    ys, xs = np.nonzero(mask)
    top, bottom = int(ys.min()), int(ys.max()) + 1
    left, right = int(xs.min()), int(xs.max()) + 1
    m = int(round(margin * max(bottom - top, right - left)))
    top = max(0, top - m)
    left = max(0, left - m)
    bottom = min(h_img, bottom + m)
    right = min(w_img, right + m)
    h, w = bottom - top, right - left
    side = max(h, w)
    pad_top = (side - h) // 2
    pad_bottom = side - h - pad_top
    pad_left = (side - w) // 2
    pad_right = side - w - pad_left

    canvas = np.empty((side, side, 3), dtype=np.float32)
    canvas[:] = mean_color.astype(np.float32)
    canvas[pad_top:pad_top + h, pad_left:pad_left + w] = image[top:bottom, left:right]
    mask_canvas = np.zeros((side, side), dtype=bool)
    mask_canvas[pad_top:pad_top + h, pad_left:pad_left + w] = mask[top:bottom, left:right]

    crop = np.clip(bilinear_resize(canvas, target, target), 0.0, 1.0)
    crop_mask = nearest_resize(mask_canvas, target, target)
    return ObjectCrop(
        crop=crop.astype(np.float32, copy=False),
        mask=crop_mask,
        bbox_original=(top, left, h, w),
        pad=(pad_top, pad_left, pad_bottom, pad_right),
        scale_factor=target / side,
        area=int(mask.sum()),
    )


def crop_objects(image: np.ndarray, masks: list[np.ndarray], target: int,
                 min_area: float = 0.001, margin: float = 0.05,
                 dedupe_iou: float = 0.9) -> list[ObjectCrop]:
    """Turn segmentation masks into square canonical crops, largest first.

    Masks smaller than ``min_area`` of the image are dropped; near-duplicate
    masks are deduped first. An empty mask list yields an empty result.
    """
    arr = validate_image(image)
    if not 0.0 <= min_area < 1.0:
        raise InvalidInputError(f"min_area must be in [0, 1), got {min_area}")
    h_img, w_img = arr.shape[:2]
    for m in masks:
        if m.shape != (h_img, w_img):
            raise InvalidInputError(
                f"mask shape {m.shape} does not match image {(h_img, w_img)}")
    threshold = min_area * h_img * w_img
    candidates = [m.astype(bool) for m in masks if m.any()]
    candidates = dedupe_masks(candidates, dedupe_iou)
    candidates = [m for m in candidates if m.sum() >= threshold]
    mean_color = arr.reshape(-1, 3).mean(axis=0)
    crops = [_crop_from_mask(arr, m, target, margin, mean_color) for m in candidates]
    crops.sort(key=lambda c: c.area, reverse=True)
    return crops


def overlay_to_original(crop_map: np.ndarray, crop: ObjectCrop,
                        canvas: np.ndarray) -> tuple[np.ndarray, int]:
    """Transport a crop-space score map back onto the original-image canvas.

    Values outside the crop's object mask contribute nothing; overlapping
    contributions keep the pixelwise maximum. Returns the updated canvas and
    the number of masked pixels that fell outside it (clipped silently).
    """
    if crop_map.shape != crop.crop.shape[:2]:
        raise InvalidInputError(
            f"crop_map shape {crop_map.shape} does not match crop "
            f"{crop.crop.shape[:2]}")
    side = crop.padded_side
    back = bilinear_resize(crop_map.astype(np.float64, copy=False), side, side)
    mask_back = nearest_resize(crop.mask, side, side)
    top, left, h, w = crop.bbox_original
    pad_top, pad_left = crop.pad[0], crop.pad[1]
    vals = back[pad_top:pad_top + h, pad_left:pad_left + w]
    gate = mask_back[pad_top:pad_top + h, pad_left:pad_left + w]

    out = np.array(canvas, dtype=np.float64, copy=True)
    ch, cw = out.shape
    y0, y1 = max(0, top), min(ch, top + h)
    x0, x1 = max(0, left), min(cw, left + w)
    clipped = int(gate.sum())
    if y0 < y1 and x0 < x1:
        sub_vals = vals[y0 - top:y1 - top, x0 - left:x1 - left]
        sub_gate = gate[y0 - top:y1 - top, x0 - left:x1 - left]
        clipped -= int(sub_gate.sum())
        region = out[y0:y1, x0:x1]
        np.maximum(region, np.where(sub_gate, sub_vals, 0.0), out=region)
    return out, clipped
