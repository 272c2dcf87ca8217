"""Zero-shot branch: text-aligned window scoring and score assembly.

Each window embedding is converted to an anomaly probability by a
two-class softmax against the (normal, anomalous) prompt embeddings.
Per-object maps are built in crop space and overlaid back onto the
original image; the image score adds the multi-object term to the
strongest single-object term.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .config import EngineConfig
from .decompose import (
    ObjectCrop,
    PatchGrid,
    Scale,
    WindowSpec,
    bilinear_resize,
    crop_objects,
    enumerate_windows,
    overlay_to_original,
    resize_to_canonical,
    validate_image,
    whole_image_crop,
)
from .errors import InvalidInputError
from .providers.base import Provider, TextEmbeddingPair
from .scoremap import WindowScore, accumulate_harmonic, fuse_zero_shot


@dataclass(frozen=True)
class ObjectScore:
    crop: ObjectCrop
    small_map: np.ndarray  # crop space
    mid_map: np.ndarray
    score: float


@dataclass(frozen=True)
class ZeroShotResult:
    image_score: float
    a_multi: float
    map: np.ndarray  # original-image resolution
    small_map: np.ndarray
    mid_map: np.ndarray
    per_object: list
    clipped_pixels: int


def text_align_score(e: np.ndarray, pair: TextEmbeddingPair,
                     temperature: float = 0.01) -> float:
    """Two-class softmax anomaly probability of one embedding.

    exp(cos_a/t) / (exp(cos_n/t) + exp(cos_a/t)), computed in a form that
    cannot overflow for any cosine pair.
    """
    if temperature <= 0:
        raise InvalidInputError(f"temperature must be > 0, got {temperature}")
    v = np.asarray(e, dtype=np.float64)
    cos_n = float(v @ pair.normal.astype(np.float64))
    cos_a = float(v @ pair.anomal.astype(np.float64))
    return float(expit((cos_a - cos_n) / temperature))


def embed_windows(provider: Provider, image: np.ndarray,
                  windows: list[WindowSpec], workers: int = 1) -> list[np.ndarray]:
    """Embed windows preserving order; threads only help remote providers."""
    if workers <= 1 or len(windows) <= 1:
        return [provider.embed_window(image, w) for w in windows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda w: provider.embed_window(image, w), windows))


def image_text_score(provider: Provider, image: np.ndarray,
                     pair: TextEmbeddingPair, cfg: EngineConfig) -> float:
    """Mean of the image-scale window score and the class-token score."""
    grid = PatchGrid.for_image(image.shape[0], image.shape[1], cfg.patch_size)
    full = enumerate_windows(grid, Scale.IMAGE)[0]
    s_window = text_align_score(provider.embed_window(image, full), pair,
                                cfg.temperature)
    s_cls = text_align_score(provider.embed_image(image).class_token, pair,
                             cfg.temperature)
    return (s_window + s_cls) / 2.0


def window_score_maps(provider: Provider, image: np.ndarray,
                      pair: TextEmbeddingPair,
                      cfg: EngineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Text-aligned small and middle score maps of one canonical image."""
    grid = PatchGrid.for_image(image.shape[0], image.shape[1], cfg.patch_size)
    maps = []
    for scale, stride in ((Scale.SMALL, cfg.stride_small),
                          (Scale.MIDDLE, cfg.stride_middle)):
        windows = enumerate_windows(grid, scale, stride)
        embeddings = embed_windows(provider, image, windows, cfg.workers)
        scored = [WindowScore(w, text_align_score(e, pair, cfg.temperature))
                  for w, e in zip(windows, embeddings)]
        maps.append(accumulate_harmonic(scored, grid))
    return maps[0], maps[1]


def score_single_object(provider: Provider, crop: ObjectCrop,
                        pair: TextEmbeddingPair, cfg: EngineConfig) -> ObjectScore:
    small, mid = window_score_maps(provider, crop.crop, pair, cfg)
    score = image_text_score(provider, crop.crop, pair, cfg)
    return ObjectScore(crop=crop, small_map=small, mid_map=mid, score=score)


def segment_crops(provider: Provider, image: np.ndarray,
                  cfg: EngineConfig) -> list[ObjectCrop]:
    """Object crops of the original image; whole frame when none found."""
    masks = provider.segment_objects(image)
    crops = crop_objects(image, masks, cfg.canonical_side,
                         min_area=cfg.min_object_area, margin=cfg.crop_margin,
                         dedupe_iou=cfg.dedupe_iou)
    if not crops:
        crops = [whole_image_crop(image, cfg.canonical_side)]
    return crops


def overlay_object_maps(objects: list[ObjectScore],
                        shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, int]:
    """Merge per-object small/mid maps onto original-size canvases (max rule)."""
    small = np.zeros(shape, dtype=np.float64)
    mid = np.zeros(shape, dtype=np.float64)
    clipped = 0
    for obj in objects:
        small, c1 = overlay_to_original(obj.small_map, obj.crop, small)
        mid, c2 = overlay_to_original(obj.mid_map, obj.crop, mid)
        clipped += c1 + c2
    return small, mid, clipped


def run_zero_shot(provider: Provider, image: np.ndarray, class_name: str,
                  cfg: EngineConfig,
                  pair: TextEmbeddingPair | None = None) -> ZeroShotResult:
    original = validate_image(image)
    if pair is None:
        pair = provider.embed_text(class_name)
    canonical = resize_to_canonical(original, cfg.canonical_side)

    a_multi = image_text_score(provider, canonical, pair, cfg)
    objects = [score_single_object(provider, crop, pair, cfg)
               for crop in segment_crops(provider, original, cfg)]
    small, mid, clipped = overlay_object_maps(objects, original.shape[:2])

    if cfg.include_full_image_windows:
        full_small, full_mid = window_score_maps(provider, canonical, pair, cfg)
        small = np.maximum(small, bilinear_resize(full_small, *original.shape[:2]))
        mid = np.maximum(mid, bilinear_resize(full_mid, *original.shape[:2]))

    image_score = a_multi + max(obj.score for obj in objects)
    final = fuse_zero_shot(small, mid, image_score, cfg.zero_shot_weights)
    return ZeroShotResult(image_score=image_score, a_multi=a_multi, map=final,
                          small_map=small, mid_map=mid, per_object=objects,
                          clipped_pixels=clipped)
