import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchmem.decompose import PatchGrid, Scale, WindowSpec
from patchmem.errors import ContractViolationError, InvalidInputError
from patchmem.scoremap import (
    EPS,
    FINAL_WEIGHTS,
    GLOBAL_WEIGHTS,
    INDIVIDUAL_WEIGHTS,
    ZERO_SHOT_WEIGHTS,
    WindowScore,
    accumulate_harmonic,
    expand_patch_scores,
    fuse_few_shot_final,
    fuse_three_scale,
    fuse_zero_shot,
    max_pixel,
)


def naive_harmonic(scores, grid):
    """Per-pixel brute force: collect covering window scores, harmonic-mean them."""
    out = np.zeros((grid.rows * grid.patch_size, grid.cols * grid.patch_size))
    for pr in range(out.shape[0]):
        for pc in range(out.shape[1]):
            r, c = pr // grid.patch_size, pc // grid.patch_size
            covering = [max(ws.score, EPS) for ws in scores
                        if ws.window.row0 <= r < ws.window.row0 + ws.window.rows
                        and ws.window.col0 <= c < ws.window.col0 + ws.window.cols]
            if covering:
                out[pr, pc] = len(covering) / sum(1.0 / s for s in covering)
    return out


def random_window_set(rng, grid, k):
    out = []
    for _ in range(k):
        h = int(rng.integers(1, grid.rows + 1))
        w = int(rng.integers(1, grid.cols + 1))
        r0 = int(rng.integers(0, grid.rows - h + 1))
        c0 = int(rng.integers(0, grid.cols - w + 1))
        out.append(WindowScore(WindowSpec(Scale.SMALL, r0, c0, h, w),
                               float(rng.random() * 2)))
    return out


class TestAccumulateHarmonic:
    def test_single_window(self):
        grid = PatchGrid(2, 4, 4)
        ws = [WindowScore(WindowSpec(Scale.SMALL, 1, 1, 2, 2), 0.5)]
        out = accumulate_harmonic(ws, grid)
        assert out.shape == (8, 8)
        assert out[2, 2] == 0.5  # inside (patch 1,1 -> pixels 2:4)
        assert out[0, 0] == 0.0

    def test_two_window_closed_form(self):
        # harmonic mean of 0.2 and 0.6 is exactly 0.3
        grid = PatchGrid(1, 3, 3)
        full = WindowSpec(Scale.IMAGE, 0, 0, 3, 3)
        out = accumulate_harmonic([WindowScore(full, 0.2), WindowScore(full, 0.6)], grid)
        assert np.all(out == 2.0 / (1.0 / 0.2 + 1.0 / 0.6))
        assert out[0, 0] == pytest.approx(0.3, abs=1e-15)

    def test_empty_scores_all_zero(self):
        out = accumulate_harmonic([], PatchGrid(4, 3, 3))
        assert out.shape == (12, 12) and not out.any()

    def test_zero_score_clamped(self):
        grid = PatchGrid(1, 2, 2)
        ws = [WindowScore(WindowSpec(Scale.SMALL, 0, 0, 2, 2), 0.0)]
        out = accumulate_harmonic(ws, grid)
        assert np.all(out == EPS)

    def test_permutation_invariant(self):
        grid = PatchGrid(1, 8, 8)
        rng = np.random.default_rng(0)
        ws = random_window_set(rng, grid, 20)
        a = accumulate_harmonic(ws, grid)
        b = accumulate_harmonic(ws[::-1], grid)
        assert np.allclose(a, b, atol=1e-12)

    def test_oracle_500_random_fixtures(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(500):
            rows = int(rng.integers(1, 17))
            cols = int(rng.integers(1, 17))
            grid = PatchGrid(1, rows, cols)
            ws = random_window_set(rng, grid, int(rng.integers(0, 51)))
            got = accumulate_harmonic(ws, grid)
            want = naive_harmonic(ws, grid)
            worst = max(worst, float(np.abs(got - want).max()))
        assert worst <= 1e-9

    def test_window_outside_grid_rejected(self):
        grid = PatchGrid(1, 4, 4)
        with pytest.raises(InvalidInputError):
            accumulate_harmonic([WindowScore(WindowSpec(Scale.SMALL, 3, 3, 2, 2), 1.0)],
                                grid)

    def test_negative_score_rejected(self):
        grid = PatchGrid(1, 4, 4)
        with pytest.raises(InvalidInputError):
            accumulate_harmonic([WindowScore(WindowSpec(Scale.SMALL, 0, 0, 2, 2), -1.0)],
                                grid)

    @given(st.integers(0, 30), st.integers(2, 10))
    @settings(max_examples=40, deadline=None)
    def test_harmonic_le_arith_le_max(self, k, side):
        rng = np.random.default_rng(k * 131 + side)
        grid = PatchGrid(1, side, side)
        ws = random_window_set(rng, grid, k)
        out = accumulate_harmonic(ws, grid)
        for pr in range(side):
            for pc in range(side):
                covering = [max(w.score, EPS) for w in ws
                            if w.window.row0 <= pr < w.window.row0 + w.window.rows
                            and w.window.col0 <= pc < w.window.col0 + w.window.cols]
                if not covering:
                    assert out[pr, pc] == 0.0
                else:
                    assert out[pr, pc] <= np.mean(covering) + 1e-12
                    assert out[pr, pc] <= max(covering) + 1e-12


class TestExpand:
    def test_patch_constant_blocks(self):
        vals = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = expand_patch_scores(vals, 3)
        assert out.shape == (6, 6)
        assert np.all(out[:3, :3] == 1.0) and np.all(out[3:, 3:] == 4.0)

    def test_no_clamp_applied(self):
        out = expand_patch_scores(np.array([[0.0]]), 2)
        assert np.all(out == 0.0)


class TestFusion:
    def test_zero_shot_constants(self):
        one = np.ones((4, 4))
        assert np.all(fuse_zero_shot(one, one, 1.0) == 2.0)

    def test_zero_shot_weight_values(self):
        assert ZERO_SHOT_WEIGHTS == (1.8, 0.2)
        small = np.full((2, 2), 1.0)
        mid = np.zeros((2, 2))
        assert np.all(fuse_zero_shot(small, mid, 2.0) == 3.6)

    def test_zero_shot_zero_gate(self):
        m = np.random.default_rng(2).random((5, 5))
        assert not fuse_zero_shot(m, m, 0.0).any()

    def test_three_scale_unit_weights(self):
        c = np.full((3, 3), 0.7)
        assert np.allclose(fuse_three_scale(c, c, c, GLOBAL_WEIGHTS), 2.1)

    def test_three_scale_individual_weights(self):
        one = np.ones((2, 2))
        out = fuse_three_scale(one, one, one, INDIVIDUAL_WEIGHTS)
        assert np.all(out == 8.0)

    def test_three_scale_zero_weights(self):
        m = np.random.default_rng(3).random((4, 4))
        assert not fuse_three_scale(m, m, m, (0.0, 0.0, 0.0)).any()

    def test_final_constants(self):
        one = np.ones((4, 4))
        assert FINAL_WEIGHTS == (0.55, 0.45)
        assert np.all(fuse_few_shot_final(one, one, 1.0) == 1.0)

    def test_final_partial(self):
        g = np.full((2, 2), 2.0)
        i = np.zeros((2, 2))
        assert np.allclose(fuse_few_shot_final(g, i, 1.0), 1.1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            fuse_zero_shot(np.ones((2, 2)), np.ones((3, 3)), 1.0)
        with pytest.raises(ContractViolationError):
            fuse_three_scale(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 3)),
                             GLOBAL_WEIGHTS)
        with pytest.raises(ContractViolationError):
            fuse_few_shot_final(np.ones((2, 2)), np.ones((1, 2)), 1.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_inputs(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((3, 3))
        b = rng.random((3, 3))
        bumped = a.copy()
        bumped[1, 1] += 0.5
        gate = float(rng.random())
        assert np.all(fuse_zero_shot(bumped, b, gate) >= fuse_zero_shot(a, b, gate))
        assert np.all(fuse_few_shot_final(bumped, b, gate)
                      >= fuse_few_shot_final(a, b, gate))
        assert np.all(fuse_three_scale(bumped, b, a, INDIVIDUAL_WEIGHTS)
                      >= fuse_three_scale(a, b, a, INDIVIDUAL_WEIGHTS))


class TestMaxPixel:
    def test_constant(self):
        assert max_pixel(np.full((3, 3), 0.4)) == 0.4

    def test_hot_pixel(self):
        m = np.zeros((5, 5))
        m[2, 3] = 0.9
        assert max_pixel(m) == 0.9

    def test_matches_naive_scan(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = rng.random((rng.integers(1, 10), rng.integers(1, 10)))
            naive = max(m[r, c] for r in range(m.shape[0]) for c in range(m.shape[1]))
            assert max_pixel(m) == naive

    def test_rejects_empty(self):
        with pytest.raises(ContractViolationError):
            max_pixel(np.zeros((0, 3)))
