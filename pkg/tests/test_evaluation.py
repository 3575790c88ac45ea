import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hv3d import evaluation as ev
from hv3d.geometry import ViewingGeometry, fovea_kernel

KERNEL = fovea_kernel(ViewingGeometry(), radius=6)


def _log(rows):
    t, s, f, x, y = zip(*rows)
    return ev.GazeLog(t, s, f, x, y)


class TestGazeLog:
    def test_csv_round_trip(self, tmp_path):
        log = _log([(0.0, "a", 0, 1.5, 2.25), (5.0, "a", 1, 3.0, 4.0), (1.0, "b", 0, 7.0, 8.0)])
        p = tmp_path / "g.csv"
        log.write_csv(p)
        back = ev.GazeLog.read_csv(p)
        np.testing.assert_array_equal(back.x, log.x)
        np.testing.assert_array_equal(back.subject, log.subject)

    def test_clipping_counts_dropped(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("timestamp_ms,subject_id,frame_index,x,y\n0,a,0,5,5\n1,a,0,-3,5\n2,a,0,5,99\n")
        log = ev.GazeLog.read_csv(p, 20, 20)
        assert len(log) == 1 and log.dropped == 2

    def test_missing_column(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("timestamp_ms,subject_id,x,y\n0,a,1,1\n")
        with pytest.raises(ValueError, match="frame_index"):
            ev.GazeLog.read_csv(p)

    def test_bad_value_names_line(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("timestamp_ms,subject_id,frame_index,x,y\n0,a,0,1,1\n1,a,zero,1,1\n")
        with pytest.raises(ValueError, match=":3:"):
            ev.GazeLog.read_csv(p)

    def test_decreasing_timestamps(self):
        with pytest.raises(ValueError, match="decrease"):
            _log([(5.0, "a", 0, 1, 1), (4.0, "a", 0, 1, 1)])

    def test_points_rounded(self):
        log = _log([(0.0, "a", 2, 3.6, 1.2)])
        np.testing.assert_array_equal(log.points(2), [[1, 4]])
        assert len(log.points(0)) == 0


class TestFdm:
    def test_single_point_is_kernel(self):
        log = _log([(0.0, "a", 0, 20, 15)])
        fdm = ev.fdm_from_gaze(log, (40, 50), KERNEL, 0)
        expect = np.zeros((40, 50))
        expect[9:22, 14:27] = KERNEL
        np.testing.assert_allclose(fdm, expect)

    def test_two_subjects_same_point(self):
        one = ev.fdm_from_gaze(_log([(0.0, "a", 0, 20, 15)]), (40, 50), KERNEL, 0)
        two = ev.fdm_from_gaze(_log([(0.0, "a", 0, 20, 15), (0.0, "b", 0, 20, 15)]), (40, 50), KERNEL, 0)
        np.testing.assert_allclose(one, two)

    def test_splat_loop_oracle(self):
        pts = [(10, 12), (50, 97), (0, 3)]
        log = _log([(float(i), "a", 0, x, y) for i, (y, x) in enumerate(pts)])
        fdm = ev.fdm_from_gaze(log, (100, 100), KERNEL, 0)
        want = np.zeros((100, 100))
        r = KERNEL.shape[0] // 2
        for y, x in pts:
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if 0 <= y + dy < 100 and 0 <= x + dx < 100:
                        want[y + dy, x + dx] += KERNEL[dy + r, dx + r]
        np.testing.assert_allclose(fdm, want / want.max(), atol=1e-9)

    def test_no_gaze_is_zero(self):
        assert not ev.fdm_from_gaze(_log([(0.0, "a", 1, 5, 5)]), (10, 10), KERNEL, 0).any()


def _random_fix(rng, shape, n=40):
    return np.column_stack([rng.integers(0, shape[0], n), rng.integers(0, shape[1], n)])


class TestAuc:
    def test_indicator_is_one(self, rng):
        fix = _random_fix(rng, (30, 40))
        S = np.zeros((30, 40))
        S[fix[:, 0], fix[:, 1]] = 1.0
        assert ev.auc(S, fix) == pytest.approx(1.0)

    def test_complement(self, rng):
        S = rng.uniform(size=(30, 40))
        fix = _random_fix(rng, (30, 40), 200)
        assert ev.auc(1 - S, fix, seed=1) == pytest.approx(1 - ev.auc(S, fix, seed=1), abs=0.01)

    def test_chance(self):
        vals = []
        for t in range(100):
            rng = np.random.default_rng(t)
            vals.append(ev.auc(ev.chance_map((40, 60), t), _random_fix(rng, (40, 60)), seed=t))
        assert abs(np.mean(vals) - 0.5) <= 0.02

    def test_fixations_outside(self):
        with pytest.raises(ValueError, match="outside"):
            ev.auc(np.ones((5, 5)), [(5, 0)])

    def test_seeded(self, rng):
        S = rng.uniform(size=(20, 20))
        fix = _random_fix(rng, (20, 20))
        assert ev.auc(S, fix, seed=3) == ev.auc(S, fix, seed=3)


class TestShuffledAuc:
    def test_indicator_disjoint_pool(self, rng):
        fix = np.array([[5, 5], [6, 7], [8, 8]])
        S = np.zeros((20, 20))
        S[fix[:, 0], fix[:, 1]] = 1.0
        pool = np.array([[15, 15], [16, 2], [1, 18], [12, 12]])
        assert ev.shuffled_auc(S, fix, pool) == pytest.approx(1.0)

    def test_chance(self):
        vals = []
        for t in range(30):
            rng = np.random.default_rng(t)
            vals.append(ev.shuffled_auc(ev.chance_map((40, 60), t), _random_fix(rng, (40, 60)),
                                        _random_fix(rng, (40, 60), 200), seed=t))
        assert abs(np.mean(vals) - 0.5) <= 0.03

    def test_center_bias_cancels(self):
        shape = (90, 160)
        S = ev.center_map(shape, std=20)
        vals, plain = [], []
        for t in range(20):
            rng = np.random.default_rng(t)

            def centred(n):
                y = np.clip(np.rint(rng.normal(45, 12, n)), 0, 89)
                x = np.clip(np.rint(rng.normal(80, 20, n)), 0, 159)
                return np.column_stack([y, x]).astype(int)

            fix = centred(60)
            vals.append(ev.shuffled_auc(S, fix, centred(600), seed=t))
            plain.append(ev.auc(S, fix, seed=t))
        assert abs(np.mean(vals) - 0.5) <= 0.03
        assert np.mean(plain) > 0.75

    def test_empty_pool(self):
        with pytest.raises(ValueError, match="pool"):
            ev.shuffled_auc(np.ones((5, 5)), [(1, 1)], [(9, 9)])


class TestNss:
    def test_constant(self):
        assert ev.nss(np.full((5, 5), 3.0), [(1, 1)]) == 0.0

    def test_argmax(self, rng):
        S = rng.uniform(size=(20, 30))
        S[7, 11] = 5.0
        assert ev.nss(S, [(7, 11)]) == pytest.approx((5.0 - S.mean()) / S.std())

    def test_chance(self):
        vals = [ev.nss(ev.chance_map((40, 40), t), _random_fix(np.random.default_rng(t), (40, 40)))
                for t in range(100)]
        assert abs(np.mean(vals)) < 0.05


class TestMapMetrics:
    def test_pcc(self, rng):
        f = rng.uniform(size=(20, 20))
        assert ev.pcc_maps(f, f) == pytest.approx(1.0)
        assert ev.pcc_maps(1 - f, f) == pytest.approx(-1.0)
        assert abs(ev.pcc_maps(rng.uniform(size=(60, 60)), rng.uniform(size=(60, 60)))) < 0.05

    def test_pcc_constant(self):
        with pytest.raises(ValueError):
            ev.pcc_maps(np.ones((3, 3)), np.eye(3))

    def test_sim(self):
        assert ev.sim(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]])) == pytest.approx(0.5)
        assert ev.sim(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])) == 0.0

    def test_kld_two_bin(self):
        got = ev.kld(np.array([[0.5, 0.5]]), np.array([[0.75, 0.25]]))
        assert got == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-9)
        assert got == pytest.approx(0.1308, abs=5e-5)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_kld_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(size=(2, 8, 8)) * (rng.uniform(size=(2, 8, 8)) > 0.3)
        b[0, 0] += 0.1
        a[0, 0] += 0.1
        assert ev.kld(a, b) >= 0.0

    def test_negative_map(self):
        with pytest.raises(ValueError, match="negative"):
            ev.sim(-np.ones((2, 2)), np.ones((2, 2)))


class TestEmd:
    def test_identical(self, rng):
        S = rng.uniform(size=(36, 64))
        assert ev.emd(S, S) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("d", [1, 2, 5, 20])
    def test_shift(self, d):
        a, b = np.zeros((18, 32)), np.zeros((18, 32))
        a[4, 3] = 1
        b[4, 3 + d] = 1
        assert ev.emd(a, b) == pytest.approx(d, abs=1e-6)

    def test_diagonal_shift(self):
        a, b = np.zeros((18, 32)), np.zeros((18, 32))
        a[2, 2] = 1
        b[5, 6] = 1
        assert ev.emd(a, b) == pytest.approx(5.0, abs=1e-6)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(2, 36, 64))
        assert ev.emd(a, b) == pytest.approx(ev.emd(b, a), abs=1e-9)

    def test_split_mass(self):
        a, b = np.zeros((18, 32)), np.zeros((18, 32))
        a[0, 0] = 1
        b[0, 2] = b[0, 4] = 0.5
        assert ev.emd(a, b) == pytest.approx(3.0, abs=1e-6)

    def test_area_resize_preserves_mean(self, rng):
        S = rng.uniform(size=(90, 160))
        r = ev.area_resize(S, (32, 18))
        assert r.shape == (18, 32)
        assert r.mean() == pytest.approx(S.mean())


class TestBaselines:
    def test_mix_endpoints(self, rng):
        S = rng.uniform(size=(30, 40))
        np.testing.assert_allclose(ev.center_bias_mix(S, 1.0), S)
        np.testing.assert_allclose(ev.center_bias_mix(S, 0.0), ev.center_map(S.shape))

    @given(st.floats(0, 1))
    def test_mix_convex(self, w):
        S = np.random.default_rng(0).uniform(size=(10, 12))
        c = ev.center_map(S.shape, 5.0)
        out = ev.center_bias_mix(S, w, 5.0)
        assert np.all(out >= np.minimum(S, c) - 1e-12) and np.all(out <= np.maximum(S, c) + 1e-12)

    def test_mix_weight_range(self):
        with pytest.raises(ValueError):
            ev.center_bias_mix(np.ones((3, 3)), 1.5)

    def test_center_map(self):
        c = ev.center_map((31, 41), 5.0)
        assert np.unravel_index(np.argmax(c), c.shape) == (15, 20)
        wide = ev.center_map((31, 41), 1e9)
        assert wide.min() == pytest.approx(1.0, abs=1e-12)

    def test_chance_seeded(self):
        np.testing.assert_array_equal(ev.chance_map((4, 4), 9), ev.chance_map((4, 4), 9))

    def test_evaluate_map(self, rng):
        S = rng.uniform(size=(36, 64))
        fix = _random_fix(rng, S.shape)
        fdm = ev.splat(S.shape, fix, KERNEL)
        scores = ev.evaluate_map(S, fdm, fix, _random_fix(rng, S.shape, 100))
        assert set(scores.as_dict()) == {"auc", "sauc", "nss", "pcc", "sim", "kld", "emd"}


class TestMoments:
    def test_single_pixel(self):
        m = np.zeros((5, 5))
        m[2, 3] = 1
        assert ev.moment_of_inertia(m) == 0.0

    def test_translation(self, rng):
        mask = rng.uniform(size=(10, 12)) < 0.4
        mask[0, 0] = True
        a = np.zeros((40, 40), bool)
        b = np.zeros((40, 40), bool)
        a[2:12, 3:15] = mask
        b[25:35, 20:32] = mask
        assert ev.moment_of_inertia(a) == pytest.approx(ev.moment_of_inertia(b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_upscale_near_invariant(self, seed):
        rng = np.random.default_rng(seed)
        yy, xx = np.mgrid[0:40, 0:40]
        cy, cx, r = rng.uniform(15, 25), rng.uniform(15, 25), rng.uniform(6, 12)
        mask = ((yy - cy) / r) ** 2 + ((xx - cx) / (0.7 * r)) ** 2 <= 1
        big = np.kron(mask, np.ones((2, 2), bool))
        assert ev.moment_of_inertia(big) == pytest.approx(ev.moment_of_inertia(mask), rel=0.02)

    def test_empty(self):
        with pytest.raises(ValueError):
            ev.moment_of_inertia(np.zeros((3, 3)))
