"""Contrastive motion/text embedding model used by the evaluation metrics.

Both encoders map into a shared 64-dim unit-norm space. The motion side is
a GRU over canonicalized, z-scored frames; the text side is an MLP over the
frozen hash-embedding features of the caption. Trained with a symmetric
InfoNCE objective on (sequence, caption) pairs from a reference dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, DataError, ModelError
from ..data.motion import FeatureLayout, MotionSequence
from ..data.normalize import Normalizer
from ..data.store import Dataset
from ..geometry import canonicalize
from ..textcond import ToyTextEncoder, encode_text
from ..models.checkpoint import (
    Checkpoint,
    _load_module,
    load_checkpoint,
    save_checkpoint,
    state_to_arrays,
)

KIND_EVALUATOR = "evaluator"


@dataclass
class EvaluatorConfig:
    input_dim: int
    e_dim: int = 512
    hidden_dim: int = 128
    emb_dim: int = 64
    temperature: float = 0.07

    def __post_init__(self):
        for name in ("input_dim", "e_dim", "hidden_dim", "emb_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluatorConfig":
        return cls(**d)


class MotionTextEvaluator(nn.Module):
    def __init__(self, cfg: EvaluatorConfig):
        super().__init__()
        self.cfg = cfg
        self.motion_rnn = nn.GRU(cfg.input_dim, cfg.hidden_dim, batch_first=True)
        self.motion_out = nn.Linear(cfg.hidden_dim, cfg.emb_dim)
        self.text_net = nn.Sequential(
            nn.Linear(2 * cfg.e_dim, cfg.hidden_dim),
            nn.SiLU(),
            nn.Linear(cfg.hidden_dim, cfg.emb_dim),
        )

    def embed_motion(self, frames: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """frames (B, T_max, d) zero-padded, lengths (B,) -> (B, emb) unit-norm."""
        packed = nn.utils.rnn.pack_padded_sequence(
            frames, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, h_n = self.motion_rnn(packed)
        return F.normalize(self.motion_out(h_n[-1]), dim=-1)

    def embed_text(self, feats: torch.Tensor) -> torch.Tensor:
        """feats (B, 2*e_dim) -> (B, emb) unit-norm."""
        return F.normalize(self.text_net(feats), dim=-1)


def contrastive_loss(motion_emb: torch.Tensor, text_emb: torch.Tensor, temperature: float) -> torch.Tensor:
    logits = motion_emb @ text_emb.t() / temperature
    labels = torch.arange(motion_emb.shape[0], device=motion_emb.device)
    return 0.5 * (F.cross_entropy(logits, labels) + F.cross_entropy(logits.t(), labels))


def text_features(text: str, encoder: ToyTextEncoder) -> np.ndarray:
    """Frozen caption features: [mean word embedding, command embedding]."""
    words, command = encode_text(text, encoder)
    return np.concatenate([words.embeddings.mean(axis=0), command.embedding]).astype(np.float32)


def canonical_frames(seq: MotionSequence) -> np.ndarray:
    """Frames re-expressed in the sequence's own first-frame body frame."""
    canon, _ = canonicalize(seq, anchor=0)
    return canon.frames


def _record_pairs(dataset: Dataset) -> list[tuple[MotionSequence, str]]:
    pairs = []
    for rec in dataset.records:
        text = rec.texts[0][2] if rec.texts else ""
        for seq in rec.sequences:
            pairs.append((seq, text))
    if not pairs:
        raise DataError("dataset holds no sequences to fit the evaluator on")
    return pairs


def _pad_batch(frame_list: list[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([f.shape[0] for f in frame_list], dtype=torch.long)
    t_max = int(lengths.max())
    out = torch.zeros(len(frame_list), t_max, frame_list[0].shape[1])
    for i, f in enumerate(frame_list):
        out[i, : f.shape[0]] = torch.from_numpy(np.ascontiguousarray(f, dtype=np.float32))
    return out, lengths


def fit_evaluator(
    dataset: Dataset,
    seed: int = 0,
    steps: int = 300,
    batch_size: int = 16,
    lr: float = 1e-3,
    hidden_dim: int = 128,
    emb_dim: int = 64,
    encoder: ToyTextEncoder | None = None,
    out_path=None,
) -> tuple[MotionTextEvaluator, Normalizer]:
    encoder = encoder or ToyTextEncoder()
    pairs = _record_pairs(dataset)
    canon = [canonical_frames(seq) for seq, _ in pairs]
    normalizer = Normalizer.fit(np.concatenate(canon, axis=0))
    frames = [normalizer.apply(f).astype(np.float32) for f in canon]
    texts = np.stack([text_features(t, encoder) for _, t in pairs])

    cfg = EvaluatorConfig(
        input_dim=dataset.layout.d,
        e_dim=encoder.e_dim,
        hidden_dim=hidden_dim,
        emb_dim=emb_dim,
    )
    torch.manual_seed(seed)
    model = MotionTextEvaluator(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed + 1)
    n = len(pairs)
    bs = min(batch_size, n)
    model.train()
    for _ in range(steps):
        idx = torch.randperm(n, generator=gen)[:bs]
        batch_frames, lengths = _pad_batch([frames[i] for i in idx])
        batch_texts = torch.from_numpy(texts[idx.numpy()])
        loss = contrastive_loss(
            model.embed_motion(batch_frames, lengths),
            model.embed_text(batch_texts),
            cfg.temperature,
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()
    if out_path is not None:
        save_evaluator(out_path, model, normalizer, dataset.layout)
    return model, normalizer


def save_evaluator(path, model: MotionTextEvaluator, normalizer: Normalizer, layout: FeatureLayout) -> None:
    save_checkpoint(
        path,
        kind=KIND_EVALUATOR,
        config=model.cfg.to_dict(),
        tensors=state_to_arrays(model.state_dict()),
        layout=layout,
        normalizer=normalizer,
    )


def load_evaluator(path) -> tuple[MotionTextEvaluator, Normalizer, FeatureLayout]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != KIND_EVALUATOR:
        raise ModelError(f"checkpoint kind {ckpt.kind!r} is not an evaluator")
    model = MotionTextEvaluator(EvaluatorConfig.from_dict(ckpt.config))
    _load_module(model, ckpt.tensors)
    return model, ckpt.normalizer, ckpt.layout


def embed_motions(
    model: MotionTextEvaluator,
    normalizer: Normalizer,
    sequences: list[MotionSequence],
    batch_size: int = 32,
) -> np.ndarray:
    """Embed sequences (canonicalized at their first frame) to (N, emb)."""
    if not sequences:
        raise DataError("no sequences to embed")
    frames = [normalizer.apply(canonical_frames(s)).astype(np.float32) for s in sequences]
    out = []
    model.eval()
    with torch.no_grad():
        for i in range(0, len(frames), batch_size):
            batch, lengths = _pad_batch(frames[i : i + batch_size])
            out.append(model.embed_motion(batch, lengths).numpy())
    return np.concatenate(out, axis=0)


def embed_texts(
    model: MotionTextEvaluator,
    texts: list[str],
    encoder: ToyTextEncoder | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    if not texts:
        raise DataError("no texts to embed")
    encoder = encoder or ToyTextEncoder()
    feats = np.stack([text_features(t, encoder) for t in texts])
    out = []
    model.eval()
    with torch.no_grad():
        for i in range(0, len(feats), batch_size):
            out.append(model.embed_text(torch.from_numpy(feats[i : i + batch_size])).numpy())
    return np.concatenate(out, axis=0)


def checkpoint_embedder(ckpt_or_path) -> tuple[MotionTextEvaluator, Normalizer, FeatureLayout]:
    if isinstance(ckpt_or_path, Checkpoint):
        ckpt = ckpt_or_path
        if ckpt.kind != KIND_EVALUATOR:
            raise ModelError(f"checkpoint kind {ckpt.kind!r} is not an evaluator")
        model = MotionTextEvaluator(EvaluatorConfig.from_dict(ckpt.config))
        _load_module(model, ckpt.tensors)
        return model, ckpt.normalizer, ckpt.layout
    return load_evaluator(ckpt_or_path)
