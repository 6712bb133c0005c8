"""Windowed motion VAE.

The encoder reads [aggregation tokens | H history frames | K future frames]
through a transformer stack and emits a single Gaussian latent per window
from the aggregation positions. The decoder is the all-encoder variant: the
latent and the history are tokens alongside K learnable future-slot queries,
and the future-slot outputs are projected back to frame features.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, DataError


@dataclass
class VaeConfig:
    input_dim: int
    h: int = 4
    k: int = 16
    latent_dim: int = 256
    hidden_dim: int = 512
    ff_dim: int = 1024
    layers: int = 5
    heads: int = 4
    dropout: float = 0.1
    beta: float = 1e-4
    global_tokens: int = 1

    def __post_init__(self):
        for name in ("input_dim", "h", "k", "latent_dim", "hidden_dim", "ff_dim", "layers", "heads", "global_tokens"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ConfigError("hidden_dim must be divisible by heads")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    @staticmethod
    def from_dict(data: dict) -> "VaeConfig":
        return VaeConfig(**data)


def _encoder_stack(cfg: VaeConfig) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=cfg.hidden_dim,
        nhead=cfg.heads,
        dim_feedforward=cfg.ff_dim,
        dropout=cfg.dropout,
        activation="gelu",
        batch_first=True,
        norm_first=True,
    )
    return nn.TransformerEncoder(layer, num_layers=cfg.layers, enable_nested_tensor=False)


class MotionVae(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        self.cfg = cfg
        hd = cfg.hidden_dim
        self.frame_in = nn.Linear(cfg.input_dim, hd)
        self.enc_global = nn.Parameter(torch.randn(cfg.global_tokens, hd) * 0.02)
        self.enc_pos = nn.Parameter(torch.randn(cfg.global_tokens + cfg.h + cfg.k, hd) * 0.02)
        self.encoder = _encoder_stack(cfg)
        self.to_stats = nn.Linear(cfg.global_tokens * hd, 2 * cfg.latent_dim)

        self.latent_in = nn.Linear(cfg.latent_dim, hd)
        self.dec_queries = nn.Parameter(torch.randn(cfg.k, hd) * 0.02)
        self.dec_pos = nn.Parameter(torch.randn(1 + cfg.h + cfg.k, hd) * 0.02)
        self.decoder = _encoder_stack(cfg)
        self.frame_out = nn.Linear(hd, cfg.input_dim)

    def _check(self, x: torch.Tensor, rows: int, name: str) -> torch.Tensor:
        if x.dim() == 2:
            x = x.unsqueeze(0)
        if x.dim() != 3 or x.shape[1] != rows or x.shape[2] != self.cfg.input_dim:
            raise DataError(
                f"{name} must be (B, {rows}, {self.cfg.input_dim}), got {tuple(x.shape)}"
            )
        return x

    def encode(self, history: torch.Tensor, future: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        squeeze = history.dim() == 2
        history = self._check(history, self.cfg.h, "history")
        future = self._check(future, self.cfg.k, "future")
        b = history.shape[0]
        tokens = torch.cat(
            [
                self.enc_global.expand(b, -1, -1),
                self.frame_in(history),
                self.frame_in(future),
            ],
            dim=1,
        )
        out = self.encoder(tokens + self.enc_pos)
        stats = self.to_stats(out[:, : self.cfg.global_tokens].reshape(b, -1))
        mu, log_var = stats.chunk(2, dim=-1)
        if squeeze:
            return mu[0], log_var[0]
        return mu, log_var

    def decode(self, z: torch.Tensor, history: torch.Tensor) -> torch.Tensor:
        squeeze = z.dim() == 1
        if squeeze:
            z = z.unsqueeze(0)
        history = self._check(history, self.cfg.h, "history")
        if z.shape[-1] != self.cfg.latent_dim:
            raise DataError(f"latent dim {z.shape[-1]} != {self.cfg.latent_dim}")
        b = z.shape[0]
        tokens = torch.cat(
            [
                self.latent_in(z).unsqueeze(1),
                self.frame_in(history),
                self.dec_queries.expand(b, -1, -1),
            ],
            dim=1,
        )
        out = self.decoder(tokens + self.dec_pos)
        future = self.frame_out(out[:, 1 + self.cfg.h :])
        return future[0] if squeeze else future


def reparameterize(mu: torch.Tensor, log_var: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """z = mu + exp(0.5 log_var) * noise, with caller-supplied noise."""
    return mu + torch.exp(0.5 * log_var) * noise


def vae_loss(
    recon: torch.Tensor,
    target: torch.Tensor,
    mu: torch.Tensor,
    log_var: torch.Tensor,
    beta: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """MSE reconstruction plus beta-weighted closed-form KL to N(0, I).

    The KL term is summed over latent dimensions and averaged over the batch,
    so a unit-mean zero-log-var Gaussian contributes 0.5 per dimension.
    """
    if recon.shape != target.shape:
        raise DataError(f"recon shape {tuple(recon.shape)} != target {tuple(target.shape)}")
    recon_term = torch.mean((recon - target) ** 2)
    kl_per_dim = 0.5 * (mu.pow(2) + log_var.exp() - 1.0 - log_var)
    kl_term = kl_per_dim.sum(dim=-1).mean()
    return recon_term + beta * kl_term, recon_term, kl_term
