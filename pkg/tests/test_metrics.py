import numpy as np
import pytest

from hint.data.motion import INTERX_STYLE, make_layout
from hint.errors import DataError
from hint.evals.metrics import (
    diversity,
    fid,
    mm_dist,
    mpjpe,
    mroe,
    r_precision,
    root_rotation_track,
)

from conftest import rodrigues


class TestFid:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(256, 16))
        assert fid(x, x.copy()) <= 1e-6

    def test_mean_shift_oracle(self):
        # For equal covariances FID reduces to the squared mean distance.
        rng = np.random.default_rng(1)
        base = rng.normal(size=(10_000, 64))
        delta = np.zeros(64)
        delta[:4] = 1.0  # ||delta||^2 = 4
        val = fid(base, base + delta)
        assert abs(val - 4.0) / 4.0 < 0.05

    def test_known_gaussian_formula(self):
        # 1D Gaussians: FID = (m1-m2)^2 + s1^2 + s2^2 - 2 s1 s2.
        rng = np.random.default_rng(2)
        a = rng.normal(loc=0.0, scale=1.0, size=(200_000, 1))
        b = rng.normal(loc=1.0, scale=2.0, size=(200_000, 1))
        want = 1.0 + 1.0 + 4.0 - 2.0 * 1.0 * 2.0
        assert abs(fid(a, b) - want) / want < 0.05

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(300, 8)), rng.normal(size=(300, 8)) + 0.3
        assert abs(fid(a, b) - fid(b, a)) < 1e-8
        assert fid(a, b) >= 0.0

    def test_needs_two_samples(self):
        with pytest.raises(DataError):
            fid(np.zeros((1, 4)), np.zeros((10, 4)))


class TestRPrecision:
    def test_ideal_embeddings(self):
        rng = np.random.default_rng(4)
        emb = rng.normal(size=(128, 32))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        for k in (1, 2, 3):
            assert r_precision(emb, emb.copy(), pool_size=32, top_k=k, seed=0) == 1.0

    def test_random_embeddings_match_chance(self):
        # With unrelated embeddings top-k accuracy concentrates on k / pool.
        rng = np.random.default_rng(5)
        n, pool = 2048, 32
        motion = rng.normal(size=(n, 16))
        text = rng.normal(size=(n, 16))
        val = r_precision(motion, text, pool_size=pool, top_k=3, seed=0)
        p = 3 / 32
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(val - p) < 3 * sigma

    def test_partial_pool_dropped(self):
        rng = np.random.default_rng(6)
        emb = rng.normal(size=(33, 8))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        # one full pool of 32; the leftover sample is dropped, not scored
        assert r_precision(emb, emb.copy(), pool_size=32, top_k=1, seed=0) == 1.0

    def test_pool_larger_than_set(self):
        with pytest.raises(DataError):
            r_precision(np.zeros((8, 4)), np.zeros((8, 4)), pool_size=32)

    def test_seed_changes_pools(self):
        rng = np.random.default_rng(7)
        motion = rng.normal(size=(256, 8))
        text = rng.normal(size=(256, 8))
        a = r_precision(motion, text, pool_size=32, seed=0)
        b = r_precision(motion, text, pool_size=32, seed=0)
        assert a == b
        c = r_precision(motion, text, pool_size=32, seed=1)
        assert a != c  # shuffle actually depends on the seed


class TestMmDist:
    def test_hand_oracle(self):
        m = np.array([[0.0, 0.0], [1.0, 0.0]])
        t = np.array([[0.0, 1.0], [1.0, 2.0]])
        want = (1.0 + 2.0) / 2.0
        assert abs(mm_dist(m, t) - want) < 1e-12

    def test_zero_at_match(self):
        rng = np.random.default_rng(8)
        m = rng.normal(size=(10, 4))
        assert mm_dist(m, m.copy()) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            mm_dist(np.zeros((3, 4)), np.zeros((4, 4)))


class TestDiversity:
    def test_standard_normal_oracle(self):
        # E||x - y|| for x, y ~ N(0, I_d) approaches sqrt(2 d).
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(40_000, 64))
        val = diversity(feats, n_pairs=10_000, seed=0)
        want = np.sqrt(128.0)
        assert abs(val - want) / want < 0.05

    def test_identical_rows_zero(self):
        feats = np.ones((10, 4))
        assert diversity(feats, n_pairs=5, seed=0) == 0.0

    def test_pairs_clipped_to_disjoint(self):
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(5, 3))
        # only 2 disjoint pairs exist; must not crash asking for 300
        val = diversity(feats, n_pairs=300, seed=0)
        assert np.isfinite(val)

    def test_needs_two_rows(self):
        with pytest.raises(DataError):
            diversity(np.zeros((1, 3)))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(11)
        feats = rng.normal(size=(50, 6))
        assert diversity(feats, seed=3) == diversity(feats, seed=3)


class TestMpjpe:
    def test_hand_oracle(self):
        gt = np.zeros((2, 3, 3))
        pred = np.zeros((2, 3, 3))
        pred[..., 0] = 0.5  # every joint displaced by 0.5 along x
        assert abs(mpjpe(gt, pred) - 0.5) < 1e-12

    def test_shape_check(self):
        with pytest.raises(DataError):
            mpjpe(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))


class TestRotationTracks:
    def test_rotation_slice_layout(self):
        layout = make_layout(INTERX_STYLE, 8)
        frames = np.zeros((3, layout.d))
        angles = [0.3, -1.2, 2.0]
        for t, ang in enumerate(angles):
            mat = rodrigues(np.array([0.0, 1.0, 0.0]), ang)
            frames[t, 0:3] = mat[:, 0]
            frames[t, 3:6] = mat[:, 1]
        track = root_rotation_track(frames, layout)
        assert track.shape == (3, 3, 3)
        for t, ang in enumerate(angles):
            assert np.allclose(track[t], rodrigues(np.array([0.0, 1.0, 0.0]), ang), atol=1e-9)

    def test_hip_fallback_layout(self, layout8):
        frames = np.zeros((1, layout8.d))
        pos = np.zeros((8, 3))
        theta = 0.7
        across = np.array([np.cos(theta), 0.0, -np.sin(theta)])
        pos[layout8.left_hip] = 0.5 * across
        pos[layout8.right_hip] = -0.5 * across
        frames[0, layout8.slice("joint_positions").indices()] = pos.ravel()
        track = root_rotation_track(frames, layout8)
        assert np.allclose(track[0], rodrigues(np.array([0.0, 1.0, 0.0]), theta), atol=1e-9)


class TestMroe:
    def test_zero_when_equal(self):
        rng = np.random.default_rng(12)
        tracks = [
            np.stack([rodrigues(np.array([0, 1, 0]), a) for a in rng.uniform(-3, 3, size=5)])
            for _ in range(2)
        ]
        assert mroe(tracks, [t.copy() for t in tracks]) < 1e-9

    def test_constant_relative_offset(self):
        # Rotating every agent's track by the same global yaw leaves relative
        # rotations unchanged; rotating ONE agent by phi shifts the pairwise
        # relative rotation by exactly phi.
        rng = np.random.default_rng(13)
        base = [
            np.stack([rodrigues(np.array([0, 1, 0]), a) for a in rng.uniform(-3, 3, size=4)])
            for _ in range(2)
        ]
        phi = 0.45
        shift = rodrigues(np.array([0, 1, 0]), phi)
        pred = [base[0].copy(), np.einsum("ij,tjk->tik", shift, base[1])]
        assert abs(mroe(base, pred) - phi) < 1e-9
        global_pred = [np.einsum("ij,tjk->tik", shift, tr) for tr in base]
        assert mroe(base, global_pred) < 1e-9

    def test_needs_pairs(self):
        track = np.eye(3)[None]
        with pytest.raises(DataError):
            mroe([track], [track])
