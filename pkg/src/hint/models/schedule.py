"""Diffusion noise schedule and the ancestral sampling loop.

Levels are indexed 0..T_diff-1 with alpha_bar[0] = 1 exactly, so level 0 is
noise-free and the reverse transition into it is deterministic. A schedule of
length 1 is the explicit degenerate case [1.0]: sampling collapses to a
single denoise call on pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError

T_DIFF_DEFAULT = 100


@dataclass
class DiffusionSchedule:
    alphas_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alphas_bar, dtype=np.float64)
        self.alphas_bar = ab
        if ab.ndim != 1 or ab.size < 1:
            raise ConfigError("alpha-bar must be a non-empty vector")
        if ab[0] != 1.0:
            raise ConfigError(f"alpha-bar(0) must be exactly 1, got {ab[0]}")
        if ab.size == 1:
            return  # degenerate single-level schedule
        if not np.all(np.diff(ab) < 0):
            raise ConfigError("alpha-bar must be strictly decreasing")
        if not 0.0 < ab[-1] < 0.05:
            raise ConfigError(
                f"final alpha-bar {ab[-1]:.6g} outside (0, 0.05); "
                "use more steps or a different schedule"
            )

    @property
    def t_diff(self) -> int:
        return int(self.alphas_bar.size)

    @staticmethod
    def from_cosine(t_diff: int = T_DIFF_DEFAULT, s: float = 0.008) -> "DiffusionSchedule":
        if t_diff < 1:
            raise ConfigError(f"t_diff must be >= 1, got {t_diff}")
        if t_diff == 1:
            return DiffusionSchedule(np.array([1.0]))
        u = np.arange(t_diff) / t_diff
        f = np.cos((u + s) / (1 + s) * np.pi / 2) ** 2
        ab = f / f[0]
        ab[0] = 1.0
        return DiffusionSchedule(ab)

    def q_sample(self, z0: torch.Tensor, t: torch.Tensor | int, eps: torch.Tensor) -> torch.Tensor:
        """z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps."""
        if isinstance(t, int):
            t = torch.tensor([t] * z0.shape[0])
        if torch.any(t < 0) or torch.any(t >= self.t_diff):
            raise ConfigError(f"diffusion step out of range [0, {self.t_diff})")
        ab = torch.as_tensor(self.alphas_bar, dtype=z0.dtype, device=z0.device)[t]
        while ab.dim() < z0.dim():
            ab = ab.unsqueeze(-1)
        return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps

    def posterior(self, x0: torch.Tensor, z_t: torch.Tensor, t: int) -> tuple[torch.Tensor, float]:
        """Mean and variance of q(z_{t-1} | z_t, x0) for t >= 1."""
        if not 1 <= t < self.t_diff:
            raise ConfigError(f"posterior transition needs 1 <= t < {self.t_diff}, got {t}")
        ab_t = float(self.alphas_bar[t])
        ab_prev = float(self.alphas_bar[t - 1])
        alpha_t = ab_t / ab_prev
        beta_t = 1.0 - alpha_t
        denom = 1.0 - ab_t
        mean = (np.sqrt(ab_prev) * beta_t / denom) * x0 + (
            np.sqrt(alpha_t) * (1.0 - ab_prev) / denom
        ) * z_t
        var = (1.0 - ab_prev) / denom * beta_t
        return mean, var

    def to_dict(self) -> dict:
        return {"alphas_bar": self.alphas_bar.tolist()}

    @staticmethod
    def from_dict(data: dict) -> "DiffusionSchedule":
        return DiffusionSchedule(np.array(data["alphas_bar"], dtype=np.float64))


def ancestral_sample(
    denoise_fn,
    shape: tuple[int, ...],
    schedule: DiffusionSchedule,
    generator: torch.Generator,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Reverse diffusion from pure noise with an x0-predicting denoiser.

    denoise_fn(z, t) returns the predicted clean latent. The final transition
    (into level 0, where alpha_bar = 1) is deterministic, and a last denoise
    call at level 0 produces the output, so a length-1 schedule reduces to
    denoise_fn(noise, 0).
    """
    z = torch.randn(shape, generator=generator, dtype=dtype)
    for t in reversed(range(schedule.t_diff)):
        x0 = denoise_fn(z, t)
        if t == 0:
            return x0
        mean, var = schedule.posterior(x0, z, t)
        if t > 1:
            noise = torch.randn(shape, generator=generator, dtype=dtype)
            z = mean + np.sqrt(var) * noise
        else:
            z = mean
    raise AssertionError("unreachable")
