"""Object proposals from classical image statistics.

Stands behind the /v1/segment endpoint: luminance is split with Otsu's
threshold, the side of the split that does not dominate the image border
is taken as foreground, connected components become candidate objects,
holes are filled, and masks come back largest first. Good enough to
carve multi-object frames into single-object crops; not a learned
segmenter.
"""

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

LUMA = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)


def propose_masks(image: np.ndarray, max_masks: int,
                  min_area_frac: float) -> list[np.ndarray]:
    lum = image.astype(np.float64) @ LUMA
    if lum.size == 0 or float(lum.max() - lum.min()) < 1e-6:
        return []
    fg = lum > threshold_otsu(lum)
    border = np.concatenate([fg[0], fg[-1], fg[:, 0], fg[:, -1]])
    if border.mean() > 0.5:
        fg = ~fg
    fg = ndimage.binary_fill_holes(fg)
    labels, count = ndimage.label(fg)
    if count == 0:
        return []
    areas = ndimage.sum_labels(np.ones(labels.shape), labels,
                               index=np.arange(1, count + 1))
    min_area = min_area_frac * lum.size
    order = np.argsort(areas)[::-1]
    masks = []
    for idx in order:
        if areas[idx] < min_area or len(masks) >= max_masks:
            break
        masks.append(labels == idx + 1)
    return masks
