import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hv3d import frame as fc
from hv3d.geometry import ViewingGeometry, disparity_to_depth, match_blocks
from hv3d.metric import (JPEG_LUMA_TABLE, Hv3dParams, StereoFrame, block_variances, build_csf_mask,
                         calibrate_exponents, cyclopean_block_ssim, fuse_cyclopean_block, grid_axis,
                         hv3d_frame, hv3d_sequence, local_depth_variance, minkowski_pool, normalize_depth,
                         q_cyclopean, q_depth, variance_term)
from hv3d.synthetic import stereo_clip
from conftest import textured


class TestCsfMask:
    @pytest.mark.parametrize("m", [4, 8, 16, 32])
    def test_mean_one_and_positive(self, m):
        mask = build_csf_mask(m)
        assert mask.shape == (m, m)
        assert mask.mean() == pytest.approx(1.0, abs=1e-9)
        assert (mask > 0).all()

    def test_eight_peak_at_table_minimum(self):
        mask = build_csf_mask(8)
        assert np.unravel_index(np.argmax(mask), mask.shape) == (0, 2)
        assert JPEG_LUMA_TABLE[0, 2] == JPEG_LUMA_TABLE.min() == 10

    def test_low_frequencies_favoured(self):
        mask = build_csf_mask(16)
        assert mask[:4, :4].mean() > mask[-4:, -4:].mean()

    def test_read_only(self):
        with pytest.raises(ValueError):
            build_csf_mask(16)[0, 0] = 5.0


class TestFusion:
    def test_identical_views(self, rng):
        b = rng.uniform(0, 255, (8, 8))
        mask = build_csf_mask(8)
        np.testing.assert_allclose(fuse_cyclopean_block(b, b, mask), mask * math.sqrt(2) * fc.dct2(b), atol=1e-9)

    def test_unit_mask(self, rng):
        bl, br = rng.uniform(0, 255, (2, 16, 16))
        x = (fc.dct2(bl) + fc.dct2(br)) / math.sqrt(2)
        np.testing.assert_allclose(fuse_cyclopean_block(bl, br, np.ones((16, 16))), x, atol=1e-9)

    @settings(max_examples=30)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        l1, l2, r1, r2 = rng.uniform(0, 255, (4, 8, 8))
        mask = build_csf_mask(8)
        lhs = fuse_cyclopean_block(a * l1 + b * l2, a * r1 + b * r2, mask)
        rhs = a * fuse_cyclopean_block(l1, r1, mask) + b * fuse_cyclopean_block(l2, r2, mask)
        np.testing.assert_allclose(lhs, rhs, atol=1e-7)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            fuse_cyclopean_block(np.zeros((8, 8)), np.zeros((8, 8)), np.ones((16, 16)))


def _pair_matches(rng, shift=4, h=64, w=96, m=16):
    left = textured(rng, h, w)
    right = np.roll(left, shift, axis=1)
    dmap = np.full((h, w), float(shift))
    origins = fc.partition_blocks(left, m).origins()
    return left, right, match_blocks(left, right, dmap, origins, m, 64)


class TestQCyclopean:
    def test_identity(self, rng):
        left, right, matches = _pair_matches(rng)
        mask = build_csf_mask(16)
        assert q_cyclopean((left, right), (left, right), matches, mask, 0.4) == pytest.approx(1.0, abs=1e-6)

    def test_power_of_mean(self, rng):
        left, right, matches = _pair_matches(rng)
        mask = build_csf_mask(16)
        dl = left + rng.normal(0, 10, left.shape)
        dr = right + rng.normal(0, 10, right.shape)
        s = cyclopean_block_ssim(left, right, dl, dr, matches, mask)
        assert q_cyclopean((left, right), (dl, dr), matches, mask, 0.4) == pytest.approx(s.mean() ** 0.4)
        assert 0.9 ** 0.4 == pytest.approx(0.9587, abs=5e-5)

    def test_swap_reference_identical_content(self, rng):
        left, right, matches = _pair_matches(rng)
        mask = build_csf_mask(16)
        a = q_cyclopean((left, right), (left, right), matches, mask, 0.4)
        b = q_cyclopean((left.copy(), right.copy()), (left, right), matches, mask, 0.4)
        assert a == b

    def test_weighted_mean(self, rng):
        left, right, matches = _pair_matches(rng)
        mask = build_csf_mask(16)
        dl = left + rng.normal(0, 10, left.shape)
        s = cyclopean_block_ssim(left, right, dl, right, matches, mask)
        w = np.zeros(len(s))
        w[3] = 1.0
        assert q_cyclopean((left, right), (dl, right), matches, mask, 1.0, weights=w) == pytest.approx(s[3])


class TestDepthVariance:
    def test_constant(self):
        assert local_depth_variance(np.full((32, 32), 0.4), (8, 8), 8, 16) == pytest.approx(0.0, abs=1e-24)

    def test_two_by_two(self):
        nd = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert local_depth_variance(nd, (0, 0), 2, 2) == pytest.approx(1 / 3)

    def test_naive_oracle(self, rng):
        nd = rng.uniform(size=(80, 112))
        origins = fc.partition_blocks(nd, 16).origins()
        got = block_variances(nd, origins, 16, 48)
        for (y, x), v in zip(origins, got):
            y0 = min(max(y + 8 - 24, 0), 80 - 48)
            x0 = min(max(x + 8 - 24, 0), 112 - 48)
            win = nd[y0:y0 + 48, x0:x0 + 48].ravel()
            mean = sum(win) / len(win)
            naive = sum((v_ - mean) ** 2 for v_ in win) / (len(win) - 1)
            assert v == pytest.approx(naive, abs=1e-12)
            assert local_depth_variance(nd, (y, x), 16, 48) == pytest.approx(naive, abs=1e-12)

    def test_window_larger_than_plane(self, rng):
        nd = rng.uniform(size=(32, 40))
        assert local_depth_variance(nd, (16, 16), 16, 64) == pytest.approx(np.var(nd, ddof=1))

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=40))
    def test_variance_term_bounded(self, vals):
        t = variance_term(vals)
        assert 0.0 <= t <= 1.0 + 1e-12

    def test_flat_is_one(self):
        assert variance_term([0.0, 0.0]) == 1.0

    def test_normalize_depth(self):
        np.testing.assert_allclose(normalize_depth(np.array([[2.0, 4.0]])), [[0.5, 1.0]])
        assert not normalize_depth(np.zeros((2, 2))).any()


class TestQDepth:
    def test_identical_depth(self, rng):
        d = 1500 + 300 * textured(rng, 64, 96) / 255
        origins = fc.partition_blocks(d, 16).origins()
        var = variance_term(block_variances(normalize_depth(d), origins, 16, 64))
        assert q_depth(d, d) == pytest.approx(var ** 0.29, abs=1e-9)

    def test_flat_reference(self, rng):
        ref = np.full((64, 96), 1800.0)
        dist = ref + rng.normal(0, 5, ref.shape)
        assert q_depth(ref, dist) == pytest.approx(fc.vif(ref, dist) ** 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            q_depth(np.ones((64, 64)), np.ones((64, 80)))


class TestFrame:
    def test_identical_factorisation(self, small_clip):
        ref, _, _ = small_clip
        f = hv3d_frame(ref[0], ref[0], keep_blocks=True)
        assert f.mean_ssim == pytest.approx(1.0, abs=1e-12)
        assert f.vif == pytest.approx(1.0, abs=1e-9)
        assert f.hv3d == pytest.approx(variance_term(f.block_variance) ** 0.29, abs=1e-9)

    def test_noise_sweep_decreasing(self):
        ref, _, _ = stereo_clip(width=128, height=96, frames=1, seed=5)
        r = ref[0]
        rng = np.random.default_rng(0)
        scores = []
        for sigma in (2, 8, 32):
            noise = rng.standard_normal((2,) + r.left.shape)
            d = StereoFrame(r.left + sigma * noise[0], r.right + sigma * noise[1], r.disparity)
            scores.append(hv3d_frame(r, d).hv3d)
        assert scores[0] > scores[1] > scores[2]

    def test_zero_exponents(self, small_clip):
        ref, dist, _ = small_clip
        p = Hv3dParams(beta1=0.0, beta2=0.0, beta3=0.0)
        assert hv3d_frame(ref[1], dist[1], p).hv3d == 1.0

    def test_fast_agrees_with_full_on_pure_shift(self, rng):
        left = textured(rng, 64, 168)
        shift = 5
        right = np.roll(left, shift, axis=1)
        dmap = np.full(left.shape, float(shift))
        dmap[:, :8] += 0.3  # noise that median removes
        ref = StereoFrame(left, right, dmap)
        dist = StereoFrame(left + 3 * rng.standard_normal(left.shape), right, dmap)
        a = hv3d_frame(ref, dist, Hv3dParams(mode="full"))
        b = hv3d_frame(ref, dist, Hv3dParams(mode="fast"))
        assert a.hv3d == pytest.approx(b.hv3d, abs=1e-12)

    def test_missing_disparity(self, rng):
        p = rng.uniform(0, 255, (32, 32))
        with pytest.raises(ValueError, match="disparity"):
            hv3d_frame(StereoFrame(p, p), StereoFrame(p, p))

    def test_shape_checked(self, small_clip):
        ref, dist, _ = small_clip
        bad = StereoFrame(dist[0].left[:, :-1], dist[0].right, dist[0].disparity)
        with pytest.raises(ValueError, match="does not match"):
            hv3d_frame(ref[0], bad)

    def test_relabel_symmetry(self, small_clip):
        """Swapping views and negating disparity mirrors the base choice."""
        ref, dist, _ = small_clip
        geo = ViewingGeometry()

        def swapped(f):
            depth = disparity_to_depth(f.disparity, geo)
            return (StereoFrame(f.left, f.right, f.disparity, depth_left=depth, depth_right=depth),
                    StereoFrame(f.right, f.left, None, -f.disparity, depth_left=depth, depth_right=depth))

        (r0, r1), (d0, d1) = swapped(ref[0]), swapped(dist[0])
        a = hv3d_frame(r0, d0, base="left")
        b = hv3d_frame(r1, d1, base="right")
        assert a.hv3d == pytest.approx(b.hv3d, abs=1e-12)


class TestPooling:
    def test_single(self):
        assert minkowski_pool([0.5]) == pytest.approx(0.5, abs=1e-15)

    @given(st.floats(0.01, 1.0), st.integers(1, 50))
    def test_constant_large_tau(self, s, n):
        assert minkowski_pool([s] * n, 9, 1e9) == pytest.approx(s, abs=1e-6)

    def test_recency(self):
        base = [0.7] * 10
        last = base[:-1] + [0.4]
        first = [0.4] + base[1:]
        assert minkowski_pool(base) - minkowski_pool(last) > minkowski_pool(base) - minkowski_pool(first)

    def test_explicit_formula(self, rng):
        s = rng.uniform(0.2, 1.0, 7)
        w = np.exp((np.arange(1, 8) - 7) / 100)
        assert minkowski_pool(s) == pytest.approx((np.sum(w * s ** 9) / 7) ** (1 / 9))

    @pytest.mark.parametrize("bad", [[], [0.5, -0.1]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            minkowski_pool(bad)


class TestSequence:
    def test_identical_sequences(self, small_clip):
        ref, _, _ = small_clip
        seq = hv3d_sequence(ref, ref)
        assert seq.pooled == pytest.approx(minkowski_pool([f.var_term ** 0.29 for f in seq.frames]))
        assert [f.base for f in seq.frames] == ["left", "right", "left", "right"]

    def test_symmetric_content(self, rng):
        frames = []
        for _ in range(2):
            v = textured(rng, 64, 80)
            depth = 1500 + rng.uniform(0, 200, v.shape)
            frames.append((StereoFrame(v, v.copy(), np.zeros(v.shape), depth_left=depth, depth_right=depth),
                           StereoFrame(v + rng.normal(0, 4, v.shape), v + rng.normal(0, 4, v.shape),
                                       np.zeros(v.shape), depth_left=depth, depth_right=depth)))
        ref = [f[0] for f in frames]
        sym = [StereoFrame(f[1].left, f[1].left, f[1].disparity, depth_left=f[1].depth_left,
                           depth_right=f[1].depth_right) for f in frames]
        alt = hv3d_sequence(ref, sym, alternate=True)
        fixed = hv3d_sequence(ref, sym, alternate=False)
        for a, b in zip(alt.frames, fixed.frames):
            assert a.hv3d == pytest.approx(b.hv3d, abs=1e-12)

    def test_two_frame_hand_trace(self, small_clip):
        ref, dist, _ = small_clip
        ref, dist = ref[:2], dist[:2]
        geo, m = ViewingGeometry(), 16
        mask = build_csf_mask(m)
        scores = []
        for i, (r, d) in enumerate(zip(ref, dist)):
            if i == 0:
                rb, ro, db, do, dmap = r.left, r.right, d.left, d.right, r.disparity
                rdep, ddep = disparity_to_depth(r.disparity, geo), disparity_to_depth(d.disparity, geo)
            else:  # frame 2 swaps the views
                rb, ro, db, do, dmap = r.right, r.left, d.right, d.left, -r.disparity
                rdep, ddep = disparity_to_depth(r.disparity, geo), disparity_to_depth(d.disparity, geo)
            origins = fc.partition_blocks(rb, m).origins()
            matches = match_blocks(rb, ro, dmap, origins, m, 64)
            s = cyclopean_block_ssim(rb, ro, db, do, matches, mask).mean()
            var = variance_term(block_variances(normalize_depth(rdep), origins, m, 64))
            scores.append(s ** 0.4 * fc.vif(rdep, ddep) ** 0.1 * var ** 0.29)
        w = np.exp(np.array([-1.0, 0.0]) / 100)
        pooled = (np.sum(w * np.array(scores) ** 9) / 2) ** (1 / 9)
        seq = hv3d_sequence(ref, dist)
        assert [f.hv3d for f in seq.frames] == pytest.approx(scores, abs=1e-12)
        assert seq.pooled == pytest.approx(pooled, abs=1e-12)

    def test_length_mismatch(self, small_clip):
        ref, dist, _ = small_clip
        with pytest.raises(ValueError, match="length"):
            hv3d_sequence(ref, dist[:2])

    def test_saliency_too_short(self, small_clip):
        ref, dist, sal = small_clip
        with pytest.raises(ValueError, match="saliency"):
            hv3d_sequence(ref, dist, saliency=sal[:1])

    def test_components(self, small_clip):
        ref, dist, _ = small_clip
        seq = hv3d_sequence(ref, dist)
        np.testing.assert_allclose(seq.components(), np.mean([f.components for f in seq.frames], axis=0))


class TestParams:
    def test_defaults(self):
        p = Hv3dParams()
        assert p.betas == (0.4, 0.1, 0.29)
        assert (p.p, p.tau, p.block_size, p.search_size, p.outer_block) == (9, 100, 16, 64, 64)

    def test_from_dict(self):
        p = Hv3dParams.from_dict({"betas": [0.3, 0.2, 0.1], "mode": "fast",
                                  "geometry": {"viewer_distance": 2000}, "unknown": 1})
        assert p.betas == (0.3, 0.2, 0.1) and p.mode == "fast"
        assert p.geometry.viewer_distance == 2000

    @pytest.mark.parametrize("kw", [{"block_size": 2}, {"search_size": 8}, {"beta1": -0.1},
                                    {"p": 0.5}, {"tau": 0}, {"outer_block": 8}, {"mode": "x"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Hv3dParams(**kw)


class TestCalibration:
    def _data(self, betas, n=10, seed=0):
        rng = np.random.default_rng(seed)
        comp = np.column_stack([rng.uniform(0.3, 1.0, n), rng.uniform(0.2, 1.0, n), rng.uniform(0.3, 1.0, n)])
        mos = np.prod(comp ** np.array(betas), axis=1)
        return comp, mos

    def test_recovers_planted(self):
        comp, mos = self._data((0.4, 0.1, 0.29))
        cal = calibrate_exponents(comp, mos)
        assert np.allclose(cal.betas, (0.4, 0.1, 0.29), atol=0.01 + 1e-9)
        assert cal.pcc == pytest.approx(1.0, abs=1e-9)

    def test_affine_invariant(self):
        comp, mos = self._data((0.6, 0.3, 0.2), seed=3)
        grid = {k: (0.05, 1.0, 0.05) for k in ("beta1", "beta2", "beta3")}
        a = calibrate_exponents(comp, mos, grid)
        b = calibrate_exponents(comp, 3.5 * mos + 1.2, grid)
        assert a.betas == b.betas

    def test_constant_mos(self):
        comp, _ = self._data((0.4, 0.1, 0.29))
        with pytest.raises(ValueError, match="constant"):
            calibrate_exponents(comp, np.ones(len(comp)))

    def test_too_few(self):
        with pytest.raises(ValueError):
            calibrate_exponents([[0.9, 0.9, 0.9], [0.8, 0.8, 0.8]], [1, 2])

    def test_grid_axis(self):
        np.testing.assert_allclose(grid_axis(0.01, 1.0, 0.01), np.arange(1, 101) / 100)
        assert len(grid_axis(0.1, 0.35, 0.1)) == 3
