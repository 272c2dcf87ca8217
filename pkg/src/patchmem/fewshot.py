"""Few-shot branch: nearest-reference distance maps from memory banks.

Every window and patch embedding of the test image is matched against
the corresponding bank; the (1 - cos)/2 distance to its nearest
reference becomes the window score. The global branch scores the full
canonical image, the individual branch scores each object crop and
overlays the crop maps back onto the original frame. The final map is
the image score times a weighted blend of the two branches.
"""

from dataclasses import dataclass

import numpy as np

from .config import EngineConfig
from .decompose import (
    PatchGrid,
    Scale,
    bilinear_resize,
    enumerate_windows,
    overlay_to_original,
    resize_to_canonical,
    validate_image,
)
from .errors import ContractViolationError
from .membank import BankKind, BankSet, MemoryBank
from .providers.base import Provider, TextEmbeddingPair
from .scoremap import (
    WindowScore,
    accumulate_harmonic,
    expand_patch_scores,
    fuse_few_shot_final,
    fuse_three_scale,
    max_pixel,
)
from .zeroshot import embed_windows, image_text_score, segment_crops


@dataclass(frozen=True)
class FewShotResult:
    image_score: float
    map: np.ndarray  # original-image resolution
    global_map: np.ndarray
    individual_map: np.ndarray
    components: dict
    per_object: list
    clipped_pixels: int


def check_bank_compatibility(provider: Provider, bank_set: BankSet) -> None:
    d_prov = provider.descriptor()
    d_bank = bank_set.descriptor
    if d_prov.dim != d_bank.dim or d_prov.patch_size != d_bank.patch_size:
        raise ContractViolationError(
            f"banks built for {d_bank} cannot serve provider {d_prov}")


def distance_maps(provider: Provider, image: np.ndarray,
                  banks: dict, cfg: EngineConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-reference distance maps of one canonical-space image.

    ``banks`` maps Scale to MemoryBank. Small and middle window distances
    are blended per pixel with the harmonic rule; patch-token distances
    fill their patch squares directly.
    """
    grid = PatchGrid.for_image(image.shape[0], image.shape[1], cfg.patch_size)
    maps = []
    for scale, stride in ((Scale.SMALL, cfg.stride_small),
                          (Scale.MIDDLE, cfg.stride_middle)):
        windows = enumerate_windows(grid, scale, stride)
        embeddings = embed_windows(provider, image, windows, cfg.workers)
        dists, _ = banks[scale].query_many(np.stack(embeddings))
        scored = [WindowScore(w, float(d)) for w, d in zip(windows, dists)]
        maps.append(accumulate_harmonic(scored, grid))

    tokens = provider.embed_image(image).patch_tokens
    flat = tokens.reshape(-1, tokens.shape[2])
    patch_dists, _ = banks[Scale.IMAGE].query_many(flat)
    patch_map = patch_dists.reshape(tokens.shape[0], tokens.shape[1])
    maps.append(expand_patch_scores(patch_map, cfg.patch_size))
    return maps[0], maps[1], maps[2]


def _scale_banks(bank_set: BankSet, kind: BankKind) -> dict:
    return {scale: bank_set.bank(kind, scale) for scale in Scale}


def run_few_shot(provider: Provider, image: np.ndarray, bank_set: BankSet,
                 cfg: EngineConfig, class_name: str = "object",
                 pair: TextEmbeddingPair | None = None) -> FewShotResult:
    check_bank_compatibility(provider, bank_set)
    original = validate_image(image)
    canonical = resize_to_canonical(original, cfg.canonical_side)
    oh, ow = original.shape[:2]

    g_small, g_mid, g_image = distance_maps(
        provider, canonical, _scale_banks(bank_set, BankKind.GLOBAL), cfg)
    global_canonical = fuse_three_scale(g_small, g_mid, g_image,
                                        cfg.global_weights)
    global_map = bilinear_resize(global_canonical, oh, ow)

    indiv_banks = _scale_banks(bank_set, BankKind.INDIVIDUAL)
    crops = segment_crops(provider, original, cfg)
    canvases = [np.zeros((oh, ow), dtype=np.float64) for _ in range(3)]
    clipped = 0
    for crop in crops:
        crop_maps = distance_maps(provider, crop.crop, indiv_banks, cfg)
        for i, crop_map in enumerate(crop_maps):
            canvases[i], c = overlay_to_original(crop_map, crop, canvases[i])
            clipped += c
    individual_map = fuse_three_scale(*canvases, cfg.individual_weights)

    max_global = max_pixel(global_map)
    max_indiv = max_pixel(individual_map)
    components = {"max_global": max_global, "max_indiv": max_indiv}
    if cfg.text_free:
        image_score = max_global + max_indiv
    else:
        if pair is None:
            pair = provider.embed_text(class_name)
        a_multi = image_text_score(provider, canonical, pair, cfg)
        a_single = max(image_text_score(provider, crop.crop, pair, cfg)
                       for crop in crops)
        components.update(a_multi=a_multi, a_single=a_single)
        image_score = (a_multi + max_global) + (a_single + max_indiv)

    final = fuse_few_shot_final(global_map, individual_map, image_score,
                                cfg.final_weights)
    return FewShotResult(image_score=image_score, map=final,
                         global_map=global_map, individual_map=individual_map,
                         components=components, per_object=crops,
                         clipped_pixels=clipped)
