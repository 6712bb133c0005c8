"""Per-channel feature normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass
class Normalizer:
    """Per-channel mean/std, std floored so constant channels stay finite."""

    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,)

    STD_FLOOR = 1e-6

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("normalizer mean/std must be matching 1-D vectors")
        self.std = np.maximum(self.std, self.STD_FLOOR)

    @staticmethod
    def fit(frames: np.ndarray) -> "Normalizer":
        frames = np.asarray(frames)
        if frames.size == 0:
            raise DataError("cannot fit a normalizer on an empty dataset")
        flat = frames.reshape(-1, frames.shape[-1]).astype(np.float64)
        return Normalizer(mean=flat.mean(axis=0), std=flat.std(axis=0))

    @staticmethod
    def fit_sequences(sequences) -> "Normalizer":
        stacks = [np.asarray(s.frames) for s in sequences]
        if not stacks:
            raise DataError("cannot fit a normalizer on an empty dataset")
        return Normalizer.fit(np.concatenate(stacks, axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(data: dict) -> "Normalizer":
        return Normalizer(mean=np.array(data["mean"]), std=np.array(data["std"]))
