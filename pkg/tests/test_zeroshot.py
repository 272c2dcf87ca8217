import math

import numpy as np
import pytest

from patchmem.config import AugmentationSpec, EngineConfig
from patchmem.decompose import PatchGrid, Scale, WindowSpec
from patchmem.errors import InvalidInputError
from patchmem.providers import MockProvider, ProviderDescriptor, TextEmbeddingPair
from patchmem.providers.base import ImageEmbeddings, Provider
from patchmem.zeroshot import (
    image_text_score,
    run_zero_shot,
    score_single_object,
    text_align_score,
    window_score_maps,
)

CFG = EngineConfig(canonical_side=64, patch_size=16,
                   augment=AugmentationSpec.default_for(64))


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return (v / np.linalg.norm(v)).astype(np.float32)


def symmetric_pair(dim=64, seed=0):
    v = unit(np.random.default_rng(seed).standard_normal(dim))
    return TextEmbeddingPair(normal=v, anomal=v)


class StubProvider(Provider):
    """Returns a fixed embedding per window position; text pair is injected.

    window_vecs maps (scale, row0, col0) to an embedding; everything else
    gets `default`. Lets tests dictate exact per-window text scores.
    """

    def __init__(self, dim=8, default=None, window_vecs=None, patch_size=16):
        self.dim = dim
        self.default = default if default is not None else unit(np.ones(dim))
        self.window_vecs = window_vecs or {}
        self._desc = ProviderDescriptor(name="stub", dim=dim,
                                        patch_size=patch_size, deterministic=True)

    def descriptor(self):
        return self._desc

    def embed_window(self, image, window):
        key = (window.scale, window.row0, window.col0)
        return self.window_vecs.get(key, self.default)

    def embed_image(self, image):
        g = image.shape[0] // self._desc.patch_size
        tokens = np.tile(self.default, (g, g, 1))
        return ImageEmbeddings(class_token=self.default, patch_tokens=tokens)

    def embed_templates(self, templates):
        return np.tile(self.default, (len(templates), 1))

    def segment_objects(self, image):
        return []


class TestTextAlign:
    def test_symmetric_is_half(self):
        pair = symmetric_pair()
        e = unit(np.random.default_rng(1).standard_normal(64))
        assert text_align_score(e, pair) == 0.5

    def test_anomal_aligned_saturates(self):
        a = unit([1.0] + [0.0] * 7)
        n = unit([0.0, 1.0] + [0.0] * 6)
        pair = TextEmbeddingPair(normal=n, anomal=a)
        val = text_align_score(a, pair, temperature=0.01)
        # exp(-100) underflows double resolution near 1, so this IS 1.0
        assert val == pytest.approx(1.0 / (1.0 + math.exp(-100.0)), abs=1e-12)
        assert val == 1.0

    def test_matches_scalar_reimplementation(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            e = unit(rng.standard_normal(16))
            pair = TextEmbeddingPair(normal=unit(rng.standard_normal(16)),
                                     anomal=unit(rng.standard_normal(16)))
            tau = float(rng.uniform(0.005, 1.0))
            ca = float(e.astype(np.float64) @ pair.anomal.astype(np.float64))
            cn = float(e.astype(np.float64) @ pair.normal.astype(np.float64))
            want = math.exp(ca / tau) / (math.exp(cn / tau) + math.exp(ca / tau))
            assert text_align_score(e, pair, tau) == pytest.approx(want, abs=1e-12)

    def test_range_and_monotonicity(self):
        rng = np.random.default_rng(3)
        pair = TextEmbeddingPair(normal=unit(rng.standard_normal(8)),
                                 anomal=unit(rng.standard_normal(8)))
        vals = [text_align_score(unit(rng.standard_normal(8)), pair, 0.5)
                for _ in range(100)]
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_bad_temperature(self):
        with pytest.raises(InvalidInputError):
            text_align_score(unit(np.ones(4)), symmetric_pair(4), 0.0)


class TestScoreSingleObject:
    def test_symmetric_pair_gives_half_everywhere(self):
        provider = MockProvider(seed=0, dim=32)
        img = np.random.default_rng(4).random((64, 64, 3)).astype(np.float32)
        pair = symmetric_pair(32)
        small, mid = window_score_maps(provider, img, pair, CFG)
        assert set(np.unique(small)) <= {0.0, 0.5}
        assert np.all(small == 0.5)  # stride 1 covers everything
        assert np.all(mid == 0.5)
        assert image_text_score(provider, img, pair, CFG) == 0.5

    def test_constant_stub_scores_everywhere_equal(self):
        stub = StubProvider(dim=8)
        pair = TextEmbeddingPair(normal=unit([1, 0, 0, 0, 0, 0, 0, 0]),
                                 anomal=unit([0, 1, 0, 0, 0, 0, 0, 0]))
        img = np.full((64, 64, 3), 0.5, dtype=np.float32)
        k = text_align_score(stub.default, pair, CFG.temperature)
        small, _ = window_score_maps(stub, img, pair, CFG)
        assert np.allclose(small, k, atol=1e-12)

    def test_hot_window_dominates_its_pixels(self):
        # one 2x2 window scores ~0.9, the rest ~0.1: the max pixel must sit
        # inside the hot window's pixel box
        dim = 8
        anomal = unit([1, 0, 0, 0, 0, 0, 0, 0])
        normal = unit([0, 1, 0, 0, 0, 0, 0, 0])
        pair = TextEmbeddingPair(normal=normal, anomal=anomal)
        tau = 1.0
        hot = anomal
        cold = normal
        stub = StubProvider(dim=dim, default=cold,
                            window_vecs={(Scale.SMALL, 1, 1): hot})
        img = np.full((64, 64, 3), 0.5, dtype=np.float32)
        cfg = EngineConfig(canonical_side=64, patch_size=16, temperature=tau,
                           augment=AugmentationSpec.default_for(64))
        small, _ = window_score_maps(stub, img, pair, cfg)
        hot_box = WindowSpec(Scale.SMALL, 1, 1, 2, 2).pixel_box(16)
        top, left, h, w = hot_box
        peak = np.unravel_index(np.argmax(small), small.shape)
        assert top <= peak[0] < top + h and left <= peak[1] < left + w

    def test_object_score_fields(self):
        provider = MockProvider(seed=1, dim=32)
        from patchmem.decompose import whole_image_crop
        img = np.random.default_rng(5).random((64, 64, 3)).astype(np.float32)
        crop = whole_image_crop(img, 64)
        obj = score_single_object(provider, crop, symmetric_pair(32), CFG)
        assert obj.score == 0.5
        assert obj.small_map.shape == (64, 64)


class TestRunZeroShot:
    def test_symmetric_pair_image_score_is_one(self):
        provider = MockProvider(seed=2, dim=32)
        img = np.full((64, 64, 3), 0.2, dtype=np.float32)
        img[10:40, 10:40] = 0.8
        res = run_zero_shot(provider, img, "widget", CFG, pair=symmetric_pair(32))
        assert res.image_score == pytest.approx(1.0, abs=1e-12)
        assert res.a_multi == 0.5

    def test_recomposition_identity(self):
        provider = MockProvider(seed=3, dim=32)
        rng = np.random.default_rng(6)
        img = rng.random((64, 64, 3)).astype(np.float32)
        res = run_zero_shot(provider, img, "widget", CFG)
        best = max(o.score for o in res.per_object)
        assert res.image_score == res.a_multi + best

    def test_no_objects_falls_back_to_whole_image(self):
        provider = MockProvider(seed=4, dim=32)
        img = np.full((64, 64, 3), 0.5, dtype=np.float32)  # blank -> no masks
        res = run_zero_shot(provider, img, "widget", CFG)
        assert len(res.per_object) == 1
        assert res.per_object[0].crop.bbox_original == (0, 0, 64, 64)

    def test_fallback_whole_image_doubles_a_multi(self):
        # blank canonical-size image: the fallback crop IS the image, so
        # A_single = A_multi and A(x) = 2 * A_multi
        provider = MockProvider(seed=5, dim=32)
        img = np.full((64, 64, 3), 0.5, dtype=np.float32)
        res = run_zero_shot(provider, img, "widget", CFG)
        assert res.image_score == pytest.approx(2.0 * res.a_multi, abs=1e-12)

    def test_map_is_gated_fusion(self):
        provider = MockProvider(seed=6, dim=32)
        img = np.full((64, 64, 3), 0.2, dtype=np.float32)
        img[8:24, 8:24] = 0.9
        res = run_zero_shot(provider, img, "widget", CFG)
        want = res.image_score * (1.8 * res.small_map + 0.2 * res.mid_map)
        assert np.array_equal(res.map, want)

    def test_hot_region_lands_in_anomalous_blob(self):
        # two blobs; stub text pair built so one blob's windows look anomalous
        provider = MockProvider(seed=7, dim=32)
        img = np.full((128, 128, 3), 0.1, dtype=np.float32)
        img[10:50, 10:50] = 0.85   # blob A
        img[70:110, 70:110] = 0.55  # blob B, different color
        cfg = EngineConfig(canonical_side=64, patch_size=16,
                           augment=AugmentationSpec.default_for(64))
        # build the pair from actual mock embeddings: anomalous text = blob A's
        # window embedding direction, normal text = blob B's
        crops = provider.segment_objects(img)
        assert len(crops) == 2
        from patchmem.decompose import crop_objects
        oc = crop_objects(img, crops, 64)
        full = WindowSpec(Scale.IMAGE, 0, 0, 4, 4)
        ea = provider.embed_window(oc[0].crop, full)
        eb = provider.embed_window(oc[1].crop, full)
        pair = TextEmbeddingPair(normal=eb, anomal=ea)
        res = run_zero_shot(provider, img, "widget", cfg, pair=pair)
        peak = np.unravel_index(np.argmax(res.map), res.map.shape)
        top, left, h, w = oc[0].bbox_original
        assert top <= peak[0] < top + h and left <= peak[1] < left + w

    def test_monotone_in_window_score(self):
        # raising one window's text score never lowers A(x) or any map pixel
        dim = 8
        anomal = unit([1, 0, 0, 0, 0, 0, 0, 0])
        normal = unit([0, 1, 0, 0, 0, 0, 0, 0])
        pair = TextEmbeddingPair(normal=normal, anomal=anomal)
        mixed = unit(0.3 * anomal.astype(np.float64) + 0.7 * normal.astype(np.float64))
        hotter = unit(0.6 * anomal.astype(np.float64) + 0.4 * normal.astype(np.float64))
        img = np.full((64, 64, 3), 0.5, dtype=np.float32)
        cfg = EngineConfig(canonical_side=64, patch_size=16, temperature=1.0,
                           augment=AugmentationSpec.default_for(64))
        base = run_zero_shot(
            StubProvider(dim=dim, default=mixed), img, "x", cfg, pair=pair)
        bumped = run_zero_shot(
            StubProvider(dim=dim, default=mixed,
                         window_vecs={(Scale.SMALL, 0, 0): hotter}),
            img, "x", cfg, pair=pair)
        assert bumped.image_score >= base.image_score
        assert np.all(bumped.map >= base.map - 1e-15)

    def test_deterministic(self):
        provider = MockProvider(seed=8, dim=32)
        img = np.random.default_rng(7).random((96, 96, 3)).astype(np.float32)
        a = run_zero_shot(provider, img, "widget", CFG)
        b = run_zero_shot(provider, img, "widget", CFG)
        assert np.array_equal(a.map, b.map)
        assert a.image_score == b.image_score
