"""Training losses: denoising MSE plus interaction regularizers.

The affinity and distance regularizers compare cross-person joint-distance
matrices; affinity masks entries by the ground-truth distance (< D1) while
the distance term masks by the predicted distance (< D2). The asymmetry is
deliberate and kept exactly as defined. The orientation term compares the
in-plane column pair of the relative root rotation, so a 180-degree relative
yaw error costs a squared 6D difference of 8 per frame.

All terms are differentiable through the decoded predictions; masked-entry
sums are averaged over frames.
"""

from __future__ import annotations

import torch

from ..errors import ConfigError, DataError
from ..data.motion import ROLE_POSITION, FeatureLayout


def positions_from_frames(frames: torch.Tensor, layout: FeatureLayout) -> torch.Tensor:
    """Position channels of feature frames (..., d) as (..., J, 3)."""
    parts = [frames[..., s.offset : s.offset + s.width] for s in layout.by_role(ROLE_POSITION)]
    flat = parts[0] if len(parts) == 1 else torch.cat(parts, dim=-1)
    return flat.reshape(*frames.shape[:-1], -1, 3)


def rot6d_to_matrix_t(r6: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Differentiable two-column orthonormalization, (..., 6) -> (..., 3, 3).

    Norms are clamped at eps so near-degenerate predictions stay finite;
    exactly degenerate ground truth should be rejected upstream.
    """
    a1, a2 = r6[..., 0:3], r6[..., 3:6]
    b1 = a1 / a1.norm(dim=-1, keepdim=True).clamp_min(eps)
    u2 = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    b2 = u2 / u2.norm(dim=-1, keepdim=True).clamp_min(eps)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def root_rotations(frames: torch.Tensor, layout: FeatureLayout, validate: bool = False) -> torch.Tensor:
    """Per-frame root orientation matrices (..., 3, 3).

    Layouts carrying a root rotation slice read it directly; position-only
    layouts rebuild the yaw whose +z column is the hip-derived heading.
    """
    if layout.root_rotation_slice is not None:
        s = layout.slice(layout.root_rotation_slice)
        r6 = frames[..., s.offset : s.offset + 6]
        if validate and bool((r6[..., 0:3].norm(dim=-1) < 1e-6).any()):
            raise DataError("degenerate root rotation in ground truth")
        return rot6d_to_matrix_t(r6)
    pos = positions_from_frames(frames, layout)
    across = pos[..., layout.left_hip, :] - pos[..., layout.right_hip, :]
    fx, fz = -across[..., 2], across[..., 0]  # cross(across, up), ground plane
    norm = torch.sqrt(fx * fx + fz * fz)
    if validate and bool((norm < 1e-6).any()):
        raise DataError("degenerate hip-derived heading in ground truth")
    fx, fz = fx / norm.clamp_min(1e-6), fz / norm.clamp_min(1e-6)
    zero, one = torch.zeros_like(fx), torch.ones_like(fx)
    cols = torch.stack(
        [
            torch.stack([fz, zero, -fx], dim=-1),
            torch.stack([zero, one, zero], dim=-1),
            torch.stack([fx, zero, fz], dim=-1),
        ],
        dim=-1,
    )
    return cols


def _cross_distance_sq_error(
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
    pred_a: torch.Tensor,
    pred_b: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    for name, gt, pred in (("a", gt_a, pred_a), ("b", gt_b, pred_b)):
        if gt.shape != pred.shape:
            raise DataError(f"gt/pred {name} shapes differ: {tuple(gt.shape)} vs {tuple(pred.shape)}")
    d_gt = torch.cdist(gt_a, gt_b)
    d_pred = torch.cdist(pred_a, pred_b)
    return d_gt, d_pred


def _reduce(per_frame: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return per_frame.mean()
    if reduction == "scene":
        if per_frame.dim() < 2:
            raise DataError("scene reduction needs batched (B, T, ...) inputs")
        return per_frame.mean(dim=tuple(range(1, per_frame.dim())))
    raise ConfigError(f"unknown reduction {reduction!r}")


def loss_aff(
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
    pred_a: torch.Tensor,
    pred_b: torch.Tensor,
    d_bar1: float,
    reduction: str = "mean",
) -> torch.Tensor:
    """Close-contact affinity: masked by GT cross-distance < d_bar1.

    Inputs are joint positions (..., T, J, 3) in a common frame.
    """
    d_gt, d_pred = _cross_distance_sq_error(gt_a, gt_b, pred_a, pred_b)
    mask = (d_gt < d_bar1).to(d_gt.dtype)
    per_frame = (mask * (d_gt - d_pred) ** 2).sum(dim=(-2, -1))
    return _reduce(per_frame, reduction)


def loss_dist(
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
    pred_a: torch.Tensor,
    pred_b: torch.Tensor,
    d_bar2: float,
    reduction: str = "mean",
) -> torch.Tensor:
    """Close-range distance consistency: masked by PREDICTED distance < d_bar2."""
    d_gt, d_pred = _cross_distance_sq_error(gt_a, gt_b, pred_a, pred_b)
    mask = (d_pred < d_bar2).to(d_pred.dtype)
    per_frame = (mask * (d_gt - d_pred) ** 2).sum(dim=(-2, -1))
    return _reduce(per_frame, reduction)


def relative_orientation_features(
    frames_a: torch.Tensor, frames_b: torch.Tensor, layout: FeatureLayout, validate: bool = False
) -> torch.Tensor:
    """In-plane 6D feature of the relative root rotation, (..., T, 6).

    Uses columns 0 and 2 of R_a R_b^T; for yaw rotations both live in the
    ground plane, so a pi relative-yaw flip negates the whole feature.
    """
    ra = root_rotations(frames_a, layout, validate=validate)
    rb = root_rotations(frames_b, layout, validate=validate)
    rel = ra @ rb.transpose(-2, -1)
    return torch.cat([rel[..., :, 0], rel[..., :, 2]], dim=-1)


def loss_ori(
    gt_a: torch.Tensor,
    gt_b: torch.Tensor,
    pred_a: torch.Tensor,
    pred_b: torch.Tensor,
    layout: FeatureLayout,
    reduction: str = "mean",
) -> torch.Tensor:
    """Squared error of relative root-orientation features, frame-averaged.

    Inputs are feature frames (..., T, d) in a common frame.
    """
    feat_gt = relative_orientation_features(gt_a, gt_b, layout, validate=True)
    feat_pred = relative_orientation_features(pred_a, pred_b, layout)
    per_frame = ((feat_gt - feat_pred) ** 2).sum(dim=-1)
    return _reduce(per_frame, reduction)


def diffusion_loss(z_hat: torch.Tensor, z0: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """MSE between predicted and true clean latents."""
    if z_hat.shape != z0.shape:
        raise DataError(f"latent shapes differ: {tuple(z_hat.shape)} vs {tuple(z0.shape)}")
    err = (z_hat - z0) ** 2
    if reduction == "mean":
        return err.mean()
    if reduction == "scene":
        return err.mean(dim=tuple(range(1, err.dim())))
    raise ConfigError(f"unknown reduction {reduction!r}")


def total_loss(
    components: dict,
    t_diff: torch.Tensor | int,
    t_diff_total: int,
    rho: float,
    lambda_aff: float,
    lambda_dist: float,
    lambda_ori: float,
) -> torch.Tensor:
    """L = L_diff + [t_diff <= rho * T_diff] (la * L_aff + ld * L_dist + lo * L_ori).

    Accepts scalars or per-scene (B,) vectors with a matching t_diff vector;
    vectors are averaged after gating.
    """
    l_diff = components["diff"]
    if isinstance(t_diff, int):
        t_diff = torch.tensor(t_diff)
    gate = (t_diff.to(torch.float64) <= rho * t_diff_total).to(
        l_diff.dtype if torch.is_tensor(l_diff) else torch.float32
    )
    reg = (
        lambda_aff * components["aff"]
        + lambda_dist * components["dist"]
        + lambda_ori * components["ori"]
    )
    return (l_diff + gate * reg).mean()


def history_schedule(stage: int, progress: float) -> float:
    """Probability of conditioning on model-predicted (vs ground-truth) history."""
    if not 0.0 <= progress <= 1.0:
        raise ConfigError(f"progress must be in [0, 1], got {progress}")
    if stage == 1:
        return 0.0
    if stage == 2:
        return float(progress)
    if stage == 3:
        return 1.0
    raise ConfigError(f"stage must be 1, 2, or 3, got {stage}")
