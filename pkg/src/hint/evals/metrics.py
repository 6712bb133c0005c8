"""Distribution and reconstruction metrics over evaluator embeddings."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..data.motion import FeatureLayout
from ..geometry import rot6d_to_matrix, rotation_geodesic


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, negatives clipped."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(feats_a: np.ndarray, feats_b: np.ndarray, jitter: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise DataError("fid needs at least 2 samples per side")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    k = feats_a.shape[1]
    eye = np.eye(k) * jitter
    cov_a = np.cov(feats_a, rowvar=False) + eye
    cov_b = np.cov(feats_b, rowvar=False) + eye
    root_a = _sqrtm_psd(cov_a)
    inner = _sqrtm_psd(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner))
    return max(value, 0.0)


def r_precision(
    motion_embs: np.ndarray,
    text_embs: np.ndarray,
    pool_size: int = 32,
    top_k: int = 3,
    seed: int = 0,
) -> float:
    """Fraction of motions whose own text ranks top-k within a shuffled pool."""
    motion_embs = np.asarray(motion_embs)
    text_embs = np.asarray(text_embs)
    if motion_embs.shape != text_embs.shape:
        raise DataError("motion/text embedding counts differ")
    n = motion_embs.shape[0]
    if pool_size > n:
        raise DataError(f"pool_size {pool_size} exceeds {n} samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    groups = n // pool_size
    hits, total = 0, 0
    for gi in range(groups):
        idx = perm[gi * pool_size : (gi + 1) * pool_size]
        m = motion_embs[idx]
        t = text_embs[idx]
        dist = np.linalg.norm(m[:, None, :] - t[None, :, :], axis=-1)
        order = np.argsort(dist, axis=1)
        for i in range(pool_size):
            total += 1
            if i in order[i, :top_k]:
                hits += 1
    if total == 0:
        raise DataError("no full pools; reduce pool_size")
    return hits / total


def mm_dist(motion_embs: np.ndarray, text_embs: np.ndarray) -> float:
    """Mean Euclidean distance between each motion and its own text."""
    motion_embs = np.asarray(motion_embs)
    text_embs = np.asarray(text_embs)
    if motion_embs.shape != text_embs.shape:
        raise DataError("motion/text embedding counts differ")
    return float(np.linalg.norm(motion_embs - text_embs, axis=-1).mean())


def diversity(feats: np.ndarray, n_pairs: int = 300, seed: int = 0) -> float:
    """Mean distance over random disjoint pairs; pair count shrinks to n//2."""
    feats = np.asarray(feats)
    n = feats.shape[0]
    if n < 2:
        raise DataError("diversity needs at least 2 samples")
    eff = min(n_pairs, n // 2)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)[: 2 * eff]
    first, second = perm[:eff], perm[eff:]
    return float(np.linalg.norm(feats[first] - feats[second], axis=-1).mean())


def mpjpe(gt_positions: np.ndarray, recon_positions: np.ndarray) -> float:
    """Mean per-joint position error over aligned (..., J, 3) positions."""
    gt_positions = np.asarray(gt_positions)
    recon_positions = np.asarray(recon_positions)
    if gt_positions.shape != recon_positions.shape:
        raise DataError(
            f"position shapes differ: {gt_positions.shape} vs {recon_positions.shape}"
        )
    return float(np.linalg.norm(gt_positions - recon_positions, axis=-1).mean())


def root_rotation_track(frames: np.ndarray, layout: FeatureLayout) -> np.ndarray:
    """Per-frame root orientation matrices (T, 3, 3) for metric use."""
    if layout.root_rotation_slice is not None:
        s = layout.slice(layout.root_rotation_slice)
        return rot6d_to_matrix(frames[:, s.offset : s.offset + 6])
    pos = layout.positions(frames)
    across = pos[:, layout.left_hip] - pos[:, layout.right_hip]
    fx, fz = -across[:, 2], across[:, 0]
    norm = np.maximum(np.hypot(fx, fz), 1e-9)
    fx, fz = fx / norm, fz / norm
    zero, one = np.zeros_like(fx), np.ones_like(fx)
    c0 = np.stack([fz, zero, -fx], axis=-1)
    c1 = np.stack([zero, one, zero], axis=-1)
    c2 = np.stack([fx, zero, fz], axis=-1)
    return np.stack([c0, c1, c2], axis=-1)


def mroe(gt_rotations: list[np.ndarray], recon_rotations: list[np.ndarray]) -> float:
    """Mean geodesic error (radians) of relative root rotations over agent
    pairs and frames."""
    if len(gt_rotations) != len(recon_rotations) or len(gt_rotations) < 2:
        raise DataError("mroe needs matching rotation tracks for >= 2 agents")
    angles = []
    n = len(gt_rotations)
    for i in range(n):
        for j in range(i + 1, n):
            if gt_rotations[i].shape != recon_rotations[i].shape:
                raise DataError("rotation track shapes differ")
            rel_gt = np.einsum("tij,tkj->tik", gt_rotations[i], gt_rotations[j])
            rel_re = np.einsum("tij,tkj->tik", recon_rotations[i], recon_rotations[j])
            angles.append(rotation_geodesic(rel_gt, rel_re))
    return float(np.concatenate(angles).mean())
