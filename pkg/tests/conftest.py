import time

import numpy as np
import pytest
import torch

from hint.data.motion import INTERHUMAN_STYLE, make_layout
from hint.data.store import Dataset, DatasetRecord
from hint.data.synth import SynthConfig, synth_generate
from hint.engine import models_from_checkpoint
from hint.models.denoiser import DenoiserConfig
from hint.models.vae import VaeConfig
from hint.training.trainer import TrainingConfig, train_diffusion, train_vae


def as_dataset(layout, records) -> Dataset:
    return Dataset(
        layout=layout,
        records=[DatasetRecord(r.sequence_id, r.sequences, r.texts) for r in records],
    )


@pytest.fixture(scope="session")
def layout8():
    return make_layout(INTERHUMAN_STYLE, 8)


@pytest.fixture(scope="session")
def train_corpus():
    layout, records = synth_generate(
        SynthConfig(n_sequences=10, min_length=40, max_length=56, seed=11)
    )
    return as_dataset(layout, records)


@pytest.fixture(scope="session")
def heldout_corpus():
    layout, records = synth_generate(
        SynthConfig(n_sequences=6, min_length=40, max_length=56, seed=97)
    )
    return as_dataset(layout, records)


def fast_vae_cfg(d: int) -> VaeConfig:
    return VaeConfig(
        input_dim=d, latent_dim=32, hidden_dim=64, ff_dim=128, layers=1, heads=2, dropout=0.0
    )


def fast_denoiser_cfg(d: int) -> DenoiserConfig:
    return DenoiserConfig(
        input_dim=d, latent_dim=32, h=4, blocks=1, heads=2, hidden=64, ff=128, dropout=0.0
    )


@pytest.fixture(scope="session")
def fast_ckpts(tmp_path_factory, train_corpus):
    """Cheap checkpoints for mechanics tests (determinism, protocol, CLI)."""
    root = tmp_path_factory.mktemp("fast-ckpts")
    vae_path = root / "vae.hckpt"
    diff_path = root / "diffusion.hckpt"
    cfg = TrainingConfig(
        vae_steps=40,
        stage1_steps=20,
        stage2_steps=5,
        stage3_steps=5,
        batch_size=4,
        t_diff=8,
        log_every=10,
        seed=0,
    )
    d = train_corpus.layout.d
    train_vae(train_corpus, cfg, out_path=vae_path, vae_cfg=fast_vae_cfg(d))
    train_diffusion(
        vae_path, train_corpus, cfg, out_path=diff_path, denoiser_cfg=fast_denoiser_cfg(d)
    )
    return {"vae": vae_path, "diffusion": diff_path}


@pytest.fixture(scope="session")
def fast_models(fast_ckpts):
    return models_from_checkpoint(fast_ckpts["diffusion"])


@pytest.fixture(scope="session")
def desk_ckpts(tmp_path_factory, train_corpus):
    """Overfit-grade checkpoints: 2,000 VAE steps, 2,000 denoiser steps."""
    root = tmp_path_factory.mktemp("desk-ckpts")
    vae_path = root / "vae.hckpt"
    diff_path = root / "diffusion.hckpt"
    d = train_corpus.layout.d
    cfg = TrainingConfig(
        vae_steps=2000,
        stage1_steps=2000,
        stage2_steps=0,
        stage3_steps=0,
        batch_size=16,
        t_diff=30,
        lr=1e-3,
        lr_final=1e-5,
        log_every=200,
        seed=0,
    )
    vae_cfg = VaeConfig(
        input_dim=d, latent_dim=64, hidden_dim=192, ff_dim=384, layers=2, heads=4, dropout=0.0
    )
    den_cfg = DenoiserConfig(
        input_dim=d, latent_dim=64, h=4, blocks=2, heads=4, hidden=128, ff=256, dropout=0.0
    )
    t0 = time.perf_counter()
    train_vae(train_corpus, cfg, out_path=vae_path, vae_cfg=vae_cfg)
    t1 = time.perf_counter()
    train_diffusion(vae_path, train_corpus, cfg, out_path=diff_path, denoiser_cfg=den_cfg)
    t2 = time.perf_counter()
    return {
        "vae": vae_path,
        "diffusion": diff_path,
        "config": cfg,
        "seconds": {"vae": t1 - t0, "diffusion": t2 - t1},
    }


@pytest.fixture(scope="session")
def desk_models(desk_ckpts):
    return models_from_checkpoint(desk_ckpts["diffusion"])


def rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    """Independent rotation-matrix construction for geometry oracles."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k_cross + (1 - np.cos(angle)) * (k_cross @ k_cross)
