"""Two-stage training: VAE pretraining, then conditional latent diffusion.

Diffusion batches are whole scenes so interaction regularizers see co-present
agents; each scene draws one diffusion step, and the regularizers only fire
when that step falls in the lowest rho fraction of the schedule. Condition
assembly goes through the same code path the inference engine uses.

History conditioning follows the three-stage plan: ground-truth histories,
then a linearly growing probability of model-predicted histories, then
predicted histories only. A predicted history comes from a no-gradient
rollout of the current model over the previous window, after which the
ground-truth future is re-expressed in the predicted anchor frame so the
supervision target stays consistent with what the model sees.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, DataError, ModelError
from ..data.motion import FeatureLayout
from ..data.normalize import Normalizer
from ..data.store import Dataset
from ..data.windows import pad_history
from ..engine import (
    AgentView,
    assemble_conditions,
    binarize_contacts,
    bundle_row,
)
from ..geometry import (
    CanonicalTransform,
    canonical_transform_at,
    invert_transform,
    transform_frames,
)
from ..models.checkpoint import (
    KIND_DIFFUSION,
    KIND_VAE,
    Checkpoint,
    checksum_state,
    load_checkpoint,
    load_vae,
    save_checkpoint,
    state_to_arrays,
)
from ..models.denoiser import ConditionBundle, DenoiserConfig, InteractionDenoiser
from ..models.schedule import DiffusionSchedule, ancestral_sample
from ..models.vae import MotionVae, VaeConfig, reparameterize, vae_loss
from ..textcond import ToyTextEncoder
from .losses import (
    diffusion_loss,
    history_schedule,
    loss_aff,
    loss_dist,
    loss_ori,
    positions_from_frames,
)


@dataclass
class TrainingConfig:
    lr: float = 1e-4
    lr_final: float | None = None  # cosine-decay floor; None keeps lr constant
    beta: float = 1e-4
    lambda_aff: float = 0.1
    lambda_dist: float = 0.1
    lambda_ori: float = 1e-4
    d_bar1: float = 0.1
    d_bar2: float = 1.0
    vae_steps: int = 2000
    stage1_steps: int = 2000
    stage2_steps: int = 2000
    stage3_steps: int = 2000
    batch_size: int = 8
    seed: int = 0
    rho: float = 0.1
    t_diff: int = 100
    grad_clip: float = 1.0
    log_every: int = 50
    h: int = 4
    k: int = 16
    stride: int | None = None

    def __post_init__(self):
        positive = (
            "lr", "beta", "lambda_aff", "lambda_dist", "lambda_ori", "d_bar1", "d_bar2",
            "vae_steps", "stage1_steps", "batch_size",
            "t_diff", "grad_clip", "log_every", "h", "k",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("stage2_steps", "stage3_steps"):  # later stages may be skipped
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must be in (0, 1], got {self.rho}")
        if self.lr_final is not None and not 0.0 < self.lr_final <= self.lr:
            raise ConfigError(f"lr_final must be in (0, lr], got {self.lr_final}")

    def to_dict(self) -> dict:
        return asdict(self)


def _lr_at(cfg: TrainingConfig, step: int, total: int) -> float:
    if cfg.lr_final is None:
        return cfg.lr
    frac = step / max(total - 1, 1)
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


@dataclass
class AgentWindow:
    agent_id: str
    transform: CanonicalTransform
    hist_c: np.ndarray  # (H, d) canonical, unnormalized
    fut_c: np.ndarray  # (K, d)
    fut_world: np.ndarray  # (K, d)
    z0: np.ndarray | None = None  # filled once the VAE is fixed


@dataclass
class SceneWindow:
    record_index: int
    window_index: int
    total_frames: int
    text: str
    agents: list[AgentWindow] = field(default_factory=list)


def prepare_scene_windows(
    dataset: Dataset, h: int, k: int, stride: int
) -> list[SceneWindow]:
    """Cut aligned multi-agent windows, canonicalized at each history tail."""
    layout = dataset.layout
    scenes = []
    for r, rec in enumerate(dataset.records):
        lengths = {s.n_frames for s in rec.sequences}
        if len(lengths) != 1:
            raise DataError(f"record {rec.sequence_id!r} has agents of differing lengths")
        frames = [pad_history(s.frames, h + k) for s in rec.sequences]
        t_total = frames[0].shape[0]
        count = (t_total - h - k) // stride + 1
        for w in range(count):
            start = w * stride
            text = ""
            for span_start, span_end, span_text in rec.texts:
                if span_start <= start + h < span_end:
                    text = span_text
            scene = SceneWindow(
                record_index=r, window_index=w, total_frames=t_total, text=text
            )
            for seq, fr in zip(rec.sequences, frames):
                slab = fr[start : start + h + k]
                x = canonical_transform_at(slab, layout, h - 1)
                slab_c = transform_frames(slab, layout, x)
                scene.agents.append(
                    AgentWindow(
                        agent_id=seq.agent_id,
                        transform=x,
                        hist_c=slab_c[:h],
                        fut_c=slab_c[h:],
                        fut_world=slab[h:].copy(),
                    )
                )
            scenes.append(scene)
    if not scenes:
        raise DataError("dataset yields no training windows")
    return scenes


def fit_window_normalizer(scenes: list[SceneWindow]) -> Normalizer:
    rows = [np.concatenate([a.hist_c, a.fut_c]) for sw in scenes for a in sw.agents]
    return Normalizer.fit(np.concatenate(rows, axis=0))


def _write_log(out_path: Path | None, metrics: list[dict]) -> None:
    if out_path is None:
        return
    log_path = Path(str(out_path) + ".log.jsonl")
    with open(log_path, "w") as f:
        for row in metrics:
            f.write(json.dumps(row) + "\n")


def train_vae(
    dataset: Dataset,
    cfg: TrainingConfig,
    out_path: str | Path | None = None,
    vae_cfg: VaeConfig | None = None,
) -> tuple[MotionVae, Normalizer, list[dict]]:
    stride = cfg.stride if cfg.stride is not None else cfg.k
    scenes = prepare_scene_windows(dataset, cfg.h, cfg.k, stride)
    normalizer = fit_window_normalizer(scenes)
    if vae_cfg is None:
        vae_cfg = VaeConfig(input_dim=dataset.layout.d, h=cfg.h, k=cfg.k, beta=cfg.beta)
    if vae_cfg.input_dim != dataset.layout.d:
        raise DataError("VAE input dim does not match dataset layout")

    torch.manual_seed(cfg.seed)
    vae = MotionVae(vae_cfg)
    opt = torch.optim.Adam(vae.parameters(), lr=cfg.lr)
    g = torch.Generator().manual_seed(cfg.seed + 1)

    windows = [a for sw in scenes for a in sw.agents]
    hist = torch.as_tensor(
        np.stack([normalizer.apply(a.hist_c) for a in windows]), dtype=torch.float32
    )
    fut = torch.as_tensor(
        np.stack([normalizer.apply(a.fut_c) for a in windows]), dtype=torch.float32
    )
    n = hist.shape[0]
    val_idx = torch.arange(min(cfg.batch_size, n))

    metrics = []
    for step in range(cfg.vae_steps):
        lr = _lr_at(cfg, step, cfg.vae_steps)
        for group in opt.param_groups:
            group["lr"] = lr
        idx = torch.randint(0, n, (cfg.batch_size,), generator=g)
        mu, log_var = vae.encode(hist[idx], fut[idx])
        noise = torch.randn(mu.shape, generator=g)
        z = reparameterize(mu, log_var, noise)
        recon = vae.decode(z, hist[idx])
        total, rec_term, kl_term = vae_loss(recon, fut[idx], mu, log_var, cfg.beta)
        opt.zero_grad()
        total.backward()
        torch.nn.utils.clip_grad_norm_(vae.parameters(), cfg.grad_clip)
        opt.step()
        row = {
            "step": step,
            "loss": float(total.detach()),
            "recon": float(rec_term.detach()),
            "kl": float(kl_term.detach()),
            "lr": lr,
        }
        if step % cfg.log_every == 0 or step == cfg.vae_steps - 1:
            vae.eval()
            with torch.no_grad():
                v_mu, v_lv = vae.encode(hist[val_idx], fut[val_idx])
                v_recon = vae.decode(v_mu, hist[val_idx])
                v_total, _, _ = vae_loss(v_recon, fut[val_idx], v_mu, v_lv, cfg.beta)
            vae.train()
            row["val"] = float(v_total)
        metrics.append(row)

    vae.eval()
    if out_path is not None:
        save_checkpoint(
            out_path,
            KIND_VAE,
            {"vae": vae_cfg.to_dict(), "training": cfg.to_dict()},
            state_to_arrays(vae.state_dict()),
            dataset.layout,
            normalizer,
        )
    _write_log(out_path, metrics)
    return vae, normalizer, metrics


def bundle_cat(bundles: list[ConditionBundle]) -> ConditionBundle:
    """Concatenate per-scene bundles, re-padding ragged text and partner axes."""
    max_l = max(b.word_tokens.shape[1] for b in bundles)
    max_p = max(b.partner_histories.shape[1] for b in bundles)
    fields: dict[str, list[torch.Tensor]] = {name: [] for name in ConditionBundle.__dataclass_fields__}
    for b in bundles:
        rows, l = b.word_tokens.shape[:2]
        p = b.partner_histories.shape[1]
        words = torch.zeros(rows, max_l, b.word_tokens.shape[2])
        words[:, :l] = b.word_tokens
        wmask = torch.zeros(rows, max_l, dtype=torch.bool)
        wmask[:, :l] = b.word_mask
        ph = torch.zeros(rows, max_p, *b.partner_histories.shape[2:])
        ph[:, :p] = b.partner_histories
        rel = torch.zeros(rows, max_p, 9)
        rel[:, :p] = b.partner_relative
        pmask = torch.zeros(rows, max_p, dtype=torch.bool)
        pmask[:, :p] = b.partner_mask
        fields["word_tokens"].append(words)
        fields["word_mask"].append(wmask)
        fields["partner_histories"].append(ph)
        fields["partner_relative"].append(rel)
        fields["partner_mask"].append(pmask)
        for name in ("target_history", "step_indices", "command", "window_index", "total_frames"):
            fields[name].append(getattr(b, name))
    return ConditionBundle(**{name: torch.cat(parts, dim=0) for name, parts in fields.items()})


def transform_frames_t(
    frames: torch.Tensor, layout: FeatureLayout, rot: torch.Tensor, trans: torch.Tensor
) -> torch.Tensor:
    """Differentiable per-row rigid map of feature frames.

    frames: (B, T, d); rot: (B, 3, 3); trans: (B, 3). Same channel-role
    semantics as the numpy implementation.
    """
    out = frames.clone()
    rt = rot.transpose(-2, -1)[:, None]  # (B, 1, 3, 3)
    for s in layout.slices:
        block = frames[..., s.offset : s.offset + s.width]
        if s.role == "position":
            pts = block.reshape(*block.shape[:-1], -1, 3)
            moved = pts @ rt + trans[:, None, None, :]
            out[..., s.offset : s.offset + s.width] = moved.reshape(block.shape)
        elif s.role == "velocity":
            vec = block.reshape(*block.shape[:-1], -1, 3)
            out[..., s.offset : s.offset + s.width] = (vec @ rt).reshape(block.shape)
        elif s.role == "rotation6d":
            cols = block.reshape(*block.shape[:-1], -1, 2, 3)
            moved = cols @ rt[:, :, None]
            out[..., s.offset : s.offset + s.width] = moved.reshape(block.shape)
    return out


def _scene_views(scene: SceneWindow) -> list[AgentView]:
    return [
        AgentView(
            agent_id=a.agent_id,
            hist_canonical=a.hist_c,
            transform=a.transform,
            text=scene.text,
        )
        for a in scene.agents
    ]


def _encode_mu(vae: MotionVae, normalizer: Normalizer, hist_c: np.ndarray, fut_c: np.ndarray) -> np.ndarray:
    hist = torch.as_tensor(normalizer.apply(hist_c), dtype=torch.float32)
    fut = torch.as_tensor(normalizer.apply(fut_c), dtype=torch.float32)
    with torch.no_grad():
        mu, _ = vae.encode(hist, fut)
    return mu.numpy()


def _predicted_scene(
    vae: MotionVae,
    denoiser: InteractionDenoiser,
    schedule: DiffusionSchedule,
    normalizer: Normalizer,
    layout: FeatureLayout,
    encoder,
    prev: SceneWindow,
    current: SceneWindow,
    g: torch.Generator,
    h: int,
) -> list[tuple[AgentView, np.ndarray, CanonicalTransform]]:
    """Roll the model over the previous window (no grad) and rebuild the
    current window's condition and target around the predicted anchors.

    Returns per-agent (view, z0 target, predicted transform)."""
    cond = assemble_conditions(
        _scene_views(prev), layout, normalizer, encoder,
        prev.window_index, prev.total_frames, h,
    )
    out = []
    denoiser.eval()
    with torch.no_grad():
        for i, (prev_agent, cur_agent) in enumerate(zip(prev.agents, current.agents)):
            row = bundle_row(cond, i)
            z = ancestral_sample(
                lambda zt, td: denoiser(zt, td, row),
                (1, vae.cfg.latent_dim),
                schedule,
                g,
            )
            fut_norm = vae.decode(z, row.target_history)[0].numpy()
            fut_c = normalizer.invert(fut_norm.astype(np.float64))
            fut_c = binarize_contacts(fut_c, layout)
            fut_world = transform_frames(
                fut_c, layout, invert_transform(prev_agent.transform)
            ).astype(np.float32)
            hist_world = fut_world[-h:]
            x_pred = canonical_transform_at(hist_world, layout, h - 1)
            hist_c = transform_frames(hist_world, layout, x_pred)
            fut_c_target = transform_frames(cur_agent.fut_world, layout, x_pred)
            z0 = _encode_mu(vae, normalizer, hist_c, fut_c_target)
            view = AgentView(
                agent_id=cur_agent.agent_id,
                hist_canonical=hist_c,
                transform=x_pred,
                text=current.text,
            )
            out.append((view, z0, x_pred))
    denoiser.train()
    return out


def train_diffusion(
    vae_ckpt: str | Path | Checkpoint,
    dataset: Dataset,
    cfg: TrainingConfig,
    out_path: str | Path | None = None,
    denoiser_cfg: DenoiserConfig | None = None,
) -> tuple[InteractionDenoiser, list[dict]]:
    ckpt = vae_ckpt if isinstance(vae_ckpt, Checkpoint) else load_checkpoint(vae_ckpt)
    if ckpt.layout.d != dataset.layout.d or ckpt.layout.kind != dataset.layout.kind:
        raise DataError(
            f"dataset layout ({dataset.layout.kind}, d={dataset.layout.d}) does not match "
            f"checkpoint ({ckpt.layout.kind}, d={ckpt.layout.d})"
        )
    vae = load_vae(ckpt)
    vae_cfg = VaeConfig.from_dict(ckpt.config["vae"])
    normalizer = ckpt.normalizer
    layout = dataset.layout
    for p in vae.parameters():
        p.requires_grad_(False)
    vae.eval()
    freeze_ck = checksum_state(vae.state_dict())

    h, k = vae_cfg.h, vae_cfg.k
    stride = cfg.stride if cfg.stride is not None else k
    scenes = prepare_scene_windows(dataset, h, k, stride)
    by_key = {(sw.record_index, sw.window_index): sw for sw in scenes}
    for sw in scenes:
        for a in sw.agents:
            a.z0 = _encode_mu(vae, normalizer, a.hist_c, a.fut_c)

    if denoiser_cfg is None:
        denoiser_cfg = DenoiserConfig(input_dim=layout.d, latent_dim=vae_cfg.latent_dim, h=h)
    if denoiser_cfg.input_dim != layout.d or denoiser_cfg.latent_dim != vae_cfg.latent_dim:
        raise ConfigError("denoiser dims must match the layout and VAE latent")
    schedule = DiffusionSchedule.from_cosine(cfg.t_diff)
    encoder = ToyTextEncoder()

    torch.manual_seed(cfg.seed + 10)
    denoiser = InteractionDenoiser(denoiser_cfg)
    opt = torch.optim.Adam(denoiser.parameters(), lr=cfg.lr)
    g = torch.Generator().manual_seed(cfg.seed + 11)

    mean_t = torch.as_tensor(normalizer.mean, dtype=torch.float32)
    std_t = torch.as_tensor(normalizer.std, dtype=torch.float32)
    stage_bounds = (cfg.stage1_steps, cfg.stage1_steps + cfg.stage2_steps)
    total_steps = cfg.stage1_steps + cfg.stage2_steps + cfg.stage3_steps
    metrics = []

    for step in range(total_steps):
        if step < stage_bounds[0]:
            stage, progress = 1, 0.0
        elif step < stage_bounds[1]:
            stage, progress = 2, (step - stage_bounds[0]) / cfg.stage2_steps
        else:
            stage, progress = 3, 1.0
        p_pred = history_schedule(stage, progress)
        lr = _lr_at(cfg, step, total_steps)
        for group in opt.param_groups:
            group["lr"] = lr

        idx = torch.randint(0, len(scenes), (cfg.batch_size,), generator=g)
        t_scene = torch.randint(0, cfg.t_diff, (cfg.batch_size,), generator=g)
        bundles, z0_rows, scene_of_row = [], [], []
        world_maps, gt_fut_rows = [], []
        for b, scene_i in enumerate(idx.tolist()):
            scene = scenes[scene_i]
            use_pred = (
                p_pred > 0.0
                and scene.window_index > 0
                and float(torch.rand((), generator=g)) < p_pred
            )
            if use_pred:
                prev = by_key[(scene.record_index, scene.window_index - 1)]
                triples = _predicted_scene(
                    vae, denoiser, schedule, normalizer, layout, encoder,
                    prev, scene, g, h,
                )
                views = [tr[0] for tr in triples]
                z0s = [tr[1] for tr in triples]
                transforms = [tr[2] for tr in triples]
            else:
                views = _scene_views(scene)
                z0s = [a.z0 for a in scene.agents]
                transforms = [a.transform for a in scene.agents]
            bundles.append(
                assemble_conditions(
                    views, layout, normalizer, encoder,
                    scene.window_index, scene.total_frames, h,
                )
            )
            for a, z0, x in zip(scene.agents, z0s, transforms):
                z0_rows.append(torch.as_tensor(z0, dtype=torch.float32))
                scene_of_row.append(b)
                inv = invert_transform(x)
                world_maps.append((inv.rotation, inv.translation))
                gt_fut_rows.append(a.fut_world)

        cond = bundle_cat(bundles)
        z0 = torch.stack(z0_rows)
        scene_idx = torch.tensor(scene_of_row, dtype=torch.long)
        t_rows = t_scene[scene_idx]

        eps = torch.randn(z0.shape, generator=g)
        z_t = schedule.q_sample(z0, t_rows, eps)
        x0_hat = denoiser(z_t, t_rows, cond)

        per_row = diffusion_loss(x0_hat, z0, reduction="scene")
        counts = torch.zeros(cfg.batch_size).index_add_(
            0, scene_idx, torch.ones(len(scene_of_row))
        )
        l_diff = torch.zeros(cfg.batch_size).index_add_(0, scene_idx, per_row) / counts

        gate = t_scene <= int(cfg.rho * cfg.t_diff)
        l_aff = torch.zeros(cfg.batch_size)
        l_dist = torch.zeros(cfg.batch_size)
        l_ori = torch.zeros(cfg.batch_size)
        if bool(gate.any()):
            fut_norm_pred = vae.decode(x0_hat, cond.target_history)
            fut_pred = fut_norm_pred * std_t + mean_t
            rot = torch.stack([torch.as_tensor(r, dtype=torch.float32) for r, _ in world_maps])
            trans = torch.stack([torch.as_tensor(t, dtype=torch.float32) for _, t in world_maps])
            pred_world = transform_frames_t(fut_pred, layout, rot, trans)
            gt_world = torch.as_tensor(np.stack(gt_fut_rows), dtype=torch.float32)
            aff_parts = {i: [] for i in range(cfg.batch_size)}
            dist_parts = {i: [] for i in range(cfg.batch_size)}
            ori_parts = {i: [] for i in range(cfg.batch_size)}
            rows_of_scene: dict[int, list[int]] = {}
            for row, sc in enumerate(scene_of_row):
                rows_of_scene.setdefault(sc, []).append(row)
            for sc, rows in rows_of_scene.items():
                if not bool(gate[sc]) or len(rows) < 2:
                    continue
                for ai in range(len(rows)):
                    for aj in range(ai + 1, len(rows)):
                        ra, rb = rows[ai], rows[aj]
                        pa_gt = positions_from_frames(gt_world[ra], layout)
                        pb_gt = positions_from_frames(gt_world[rb], layout)
                        pa = positions_from_frames(pred_world[ra], layout)
                        pb = positions_from_frames(pred_world[rb], layout)
                        aff_parts[sc].append(loss_aff(pa_gt, pb_gt, pa, pb, cfg.d_bar1))
                        dist_parts[sc].append(loss_dist(pa_gt, pb_gt, pa, pb, cfg.d_bar2))
                        ori_parts[sc].append(
                            loss_ori(gt_world[ra], gt_world[rb], pred_world[ra], pred_world[rb], layout)
                        )
            for sc in range(cfg.batch_size):
                if aff_parts[sc]:
                    l_aff[sc] = torch.stack(aff_parts[sc]).mean()
                    l_dist[sc] = torch.stack(dist_parts[sc]).mean()
                    l_ori[sc] = torch.stack(ori_parts[sc]).mean()

        reg = cfg.lambda_aff * l_aff + cfg.lambda_dist * l_dist + cfg.lambda_ori * l_ori
        loss = (l_diff + gate.to(l_diff.dtype) * reg).mean()

        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(denoiser.parameters(), cfg.grad_clip)
        opt.step()
        metrics.append(
            {
                "step": step,
                "stage": stage,
                "history_prob": p_pred,
                "loss": float(loss.detach()),
                "diff": float(l_diff.detach().mean()),
                "aff": float(l_aff.detach().mean()),
                "dist": float(l_dist.detach().mean()),
                "ori": float(l_ori.detach().mean()),
                "lr": lr,
            }
        )

    if checksum_state(vae.state_dict()) != freeze_ck:
        raise ModelError("VAE parameters changed during diffusion training")

    denoiser.eval()
    if out_path is not None:
        tensors = {f"denoiser.{k_}": v for k_, v in state_to_arrays(denoiser.state_dict()).items()}
        tensors.update({f"vae.{k_}": v for k_, v in state_to_arrays(vae.state_dict()).items()})
        save_checkpoint(
            out_path,
            KIND_DIFFUSION,
            {
                "vae": vae_cfg.to_dict(),
                "denoiser": denoiser_cfg.to_dict(),
                "training": cfg.to_dict(),
            },
            tensors,
            layout,
            normalizer,
            schedule=schedule,
            checksums={"vae_freeze": freeze_ck},
        )
    _write_log(out_path, metrics)
    return denoiser, metrics
