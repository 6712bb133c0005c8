"""Conditional latent denoiser with hierarchical interaction conditioning.

Tokens are the H history frames plus one noisy-latent future token, tagged
with step-index embeddings (history 1..H, future its own index). Each block
runs self-attention, cross-attention over all partners' transformed
histories, cross-attention over [word tokens | command token], then a
feed-forward, every sublayer modulated by adaptive layer norm carrying the
diffusion step, the window index, and the session length.

One parameter set serves every agent; partner order and count only enter
through the concatenated key/value tokens, and fully masked memories
contribute exactly zero, so a padded absent partner is a no-op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, DataError
from ..geometry import CanonicalTransform, matrix_to_rot6d, transform_frames
from ..data.motion import FeatureLayout

FUTURE_STEP_INDEX = 0  # history frames use 1..H


@dataclass
class DenoiserConfig:
    input_dim: int
    latent_dim: int = 256
    h: int = 4
    blocks: int = 8
    heads: int = 4
    hidden: int = 512
    ff: int = 1024
    dropout: float = 0.1
    e_dim: int = 512

    def __post_init__(self):
        for name in ("input_dim", "latent_dim", "h", "blocks", "heads", "hidden", "ff", "e_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.hidden % self.heads != 0:
            raise ConfigError("hidden must be divisible by heads")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(data: dict) -> "DenoiserConfig":
        return DenoiserConfig(**data)


@dataclass
class ConditionBundle:
    """Everything the denoiser conditions on, already in the target agent's
    canonical frame and normalized feature space."""

    target_history: torch.Tensor  # (B, H, d)
    step_indices: torch.Tensor  # (B, H) long, exactly 1..H
    partner_histories: torch.Tensor  # (B, P, H, d); P may be 0
    partner_relative: torch.Tensor  # (B, P, 9): flattened 6D rotation + translation
    partner_mask: torch.Tensor  # (B, P) bool, True = real partner
    word_tokens: torch.Tensor  # (B, L, e_dim)
    word_mask: torch.Tensor  # (B, L) bool
    command: torch.Tensor  # (B, e_dim)
    window_index: torch.Tensor  # (B,) long
    total_frames: torch.Tensor  # (B,) long

    def validate(self, h: int) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) is None:
                raise DataError(f"condition bundle missing required field {name!r}")
        b = self.target_history.shape[0]
        expected = torch.arange(1, h + 1, device=self.step_indices.device).expand(b, h)
        if self.step_indices.shape != (b, h) or not torch.equal(self.step_indices, expected):
            raise DataError("step indices must be exactly 1..H")


def relative_features(rel: CanonicalTransform) -> np.ndarray:
    """Flattened embedding input for one relative transform: 6D rotation + T."""
    return np.concatenate([matrix_to_rot6d(rel.rotation), rel.translation]).astype(np.float32)


def transform_partner_history(
    frames: np.ndarray, layout: FeatureLayout, rel: CanonicalTransform
) -> np.ndarray:
    """Express a partner's history in the target agent's canonical frame.

    Same channel-role semantics as the canonicalization map, by construction:
    this is the one implementation.
    """
    return transform_frames(frames, layout, rel)


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Standard sinusoidal embedding of integer indices, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class MaskedAttention(nn.Module):
    """Multi-head attention where fully masked memories yield exactly zero."""

    def __init__(self, hidden: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.q = nn.Linear(hidden, hidden)
        self.k = nn.Linear(hidden, hidden)
        self.v = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, hidden)
        self.drop = nn.Dropout(dropout)

    def forward(
        self, x: torch.Tensor, memory: torch.Tensor, mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        b, n, _ = x.shape
        s = memory.shape[1]
        q = self.q(x).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        k = self.k(memory).view(b, s, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(memory).view(b, s, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            dead = ~mask.any(dim=-1)  # (B,) rows with no valid memory at all
            scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
            if dead.any():
                # Keep softmax finite for dead rows, then zero their output.
                scores = torch.where(dead[:, None, None, None], torch.zeros_like(scores), scores)
        attn = self.drop(torch.softmax(scores, dim=-1))
        out = (attn @ v).transpose(1, 2).reshape(b, n, -1)
        if mask is not None and dead.any():
            out = torch.where(dead[:, None, None], torch.zeros_like(out), out)
        return self.out(out)


class DenoiserBlock(nn.Module):
    SUBLAYERS = 4  # self-attn, partner cross-attn, text cross-attn, feed-forward

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        hd = cfg.hidden
        self.norms = nn.ModuleList([nn.LayerNorm(hd, elementwise_affine=False) for _ in range(self.SUBLAYERS)])
        self.self_attn = MaskedAttention(hd, cfg.heads, cfg.dropout)
        self.partner_attn = MaskedAttention(hd, cfg.heads, cfg.dropout)
        self.text_attn = MaskedAttention(hd, cfg.heads, cfg.dropout)
        self.ff = nn.Sequential(
            nn.Linear(hd, cfg.ff), nn.GELU(), nn.Dropout(cfg.dropout), nn.Linear(cfg.ff, hd)
        )
        self.adaln = nn.Sequential(nn.SiLU(), nn.Linear(hd, 3 * self.SUBLAYERS * hd))
        nn.init.zeros_(self.adaln[1].weight)
        nn.init.zeros_(self.adaln[1].bias)

    def forward(
        self,
        x: torch.Tensor,
        cond: torch.Tensor,
        partner_tokens: torch.Tensor,
        partner_mask: torch.Tensor,
        text_tokens: torch.Tensor,
        text_mask: torch.Tensor,
    ) -> torch.Tensor:
        mods = self.adaln(cond).chunk(3 * self.SUBLAYERS, dim=-1)

        def modulated(i: int) -> torch.Tensor:
            shift, scale = mods[3 * i], mods[3 * i + 1]
            return self.norms[i](x) * (1 + scale[:, None]) + shift[:, None]

        m0 = modulated(0)
        x = x + mods[2][:, None] * self.self_attn(m0, m0)
        x = x + mods[5][:, None] * self.partner_attn(modulated(1), partner_tokens, partner_mask)
        x = x + mods[8][:, None] * self.text_attn(modulated(2), text_tokens, text_mask)
        x = x + mods[11][:, None] * self.ff(modulated(3))
        return x


class InteractionDenoiser(nn.Module):
    """Predicts the clean latent from a noisy one under hierarchical conditions."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        hd = cfg.hidden
        self.frame_in = nn.Linear(cfg.input_dim, hd)
        self.latent_in = nn.Linear(cfg.latent_dim, hd)
        self.step_emb = nn.Embedding(cfg.h + 1, hd)
        self.rel_in = nn.Linear(9, hd)
        self.text_in = nn.Linear(cfg.e_dim, hd)
        self.cond_mlp = nn.Sequential(nn.Linear(3 * hd, hd), nn.SiLU(), nn.Linear(hd, hd))
        self.blocks = nn.ModuleList(DenoiserBlock(cfg) for _ in range(cfg.blocks))
        self.out_norm = nn.LayerNorm(hd)
        self.out = nn.Linear(hd, cfg.latent_dim)

    def forward(
        self, z_noisy: torch.Tensor, t_diff: torch.Tensor | int, cond: ConditionBundle
    ) -> torch.Tensor:
        squeeze = z_noisy.dim() == 1
        if squeeze:
            z_noisy = z_noisy.unsqueeze(0)
        cond.validate(self.cfg.h)
        b = z_noisy.shape[0]
        if isinstance(t_diff, int):
            t_diff = torch.full((b,), t_diff, dtype=torch.long, device=z_noisy.device)

        hist = self.frame_in(cond.target_history) + self.step_emb(cond.step_indices)
        future = self.latent_in(z_noisy) + self.step_emb(
            torch.full((b,), FUTURE_STEP_INDEX, dtype=torch.long, device=z_noisy.device)
        )
        x = torch.cat([hist, future.unsqueeze(1)], dim=1)

        p = cond.partner_histories.shape[1]
        if p > 0:
            ph = self.frame_in(cond.partner_histories) + self.step_emb(
                cond.step_indices[:, None, :].expand(b, p, self.cfg.h)
            )
            ph = ph + self.rel_in(cond.partner_relative)[:, :, None, :]
            partner_tokens = ph.reshape(b, p * self.cfg.h, -1)
            partner_mask = cond.partner_mask[:, :, None].expand(b, p, self.cfg.h).reshape(b, -1)
        else:
            partner_tokens = x.new_zeros(b, 1, self.cfg.hidden)
            partner_mask = torch.zeros(b, 1, dtype=torch.bool, device=x.device)

        text_tokens = self.text_in(
            torch.cat([cond.word_tokens, cond.command.unsqueeze(1)], dim=1)
        )
        text_mask = torch.cat(
            [cond.word_mask, torch.ones(b, 1, dtype=torch.bool, device=x.device)], dim=1
        )

        emb = self.cond_mlp(
            torch.cat(
                [
                    timestep_embedding(t_diff, self.cfg.hidden),
                    timestep_embedding(cond.window_index, self.cfg.hidden),
                    timestep_embedding(cond.total_frames, self.cfg.hidden),
                ],
                dim=-1,
            ).to(z_noisy.dtype)
        )
        for block in self.blocks:
            x = block(x, emb, partner_tokens, partner_mask, text_tokens, text_mask)
        out = self.out(self.out_norm(x[:, -1]))
        return out[0] if squeeze else out


def pack_text_batch(
    word_list: list[np.ndarray], command_list: list[np.ndarray], e_dim: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad per-sample word embeddings to a batch with a validity mask."""
    b = len(word_list)
    max_l = max(w.shape[0] for w in word_list)
    words = torch.zeros(b, max_l, e_dim)
    mask = torch.zeros(b, max_l, dtype=torch.bool)
    for i, w in enumerate(word_list):
        words[i, : w.shape[0]] = torch.as_tensor(w, dtype=torch.float32)
        mask[i, : w.shape[0]] = True
    command = torch.stack([torch.as_tensor(c, dtype=torch.float32) for c in command_list])
    return words, mask, command
