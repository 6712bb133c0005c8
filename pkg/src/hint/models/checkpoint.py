"""Self-describing checkpoint container.

One file holds a JSON header (kind, configs, tensor index, normalizer stats,
noise schedule, feature layout, checksums) followed by all tensors as raw
little-endian float32. Layout: magic `HCKP`, version u32, header length u64,
UTF-8 JSON header, payload.

Diffusion checkpoints embed the frozen VAE under a `vae.` tensor prefix so a
single file loads a complete generator; the VAE freeze checksum is recorded
when diffusion training starts and must match at load time.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import FormatError, ModelError
from ..data.motion import FeatureLayout
from ..data.normalize import Normalizer
from .denoiser import DenoiserConfig, InteractionDenoiser
from .schedule import DiffusionSchedule
from .vae import MotionVae, VaeConfig

MAGIC = b"HCKP"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sIQ")

KIND_VAE = "vae"
KIND_DIFFUSION = "diffusion"


def state_to_arrays(state_dict: dict) -> dict[str, np.ndarray]:
    return {
        k: v.detach().cpu().numpy().astype("<f4", copy=False)
        for k, v in state_dict.items()
    }


def checksum_tensors(tensors: dict[str, np.ndarray]) -> str:
    """Order-independent digest of named tensors (name, shape, bytes)."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def checksum_state(state_dict: dict) -> str:
    return checksum_tensors(state_to_arrays(state_dict))


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict[str, np.ndarray]
    layout: FeatureLayout
    normalizer: Normalizer
    schedule: DiffusionSchedule | None = None
    checksums: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        plen = len(prefix)
        return {k[plen:]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def save_checkpoint(
    path: str | Path,
    kind: str,
    config: dict,
    tensors: dict[str, np.ndarray],
    layout: FeatureLayout,
    normalizer: Normalizer,
    schedule: DiffusionSchedule | None = None,
    checksums: dict | None = None,
    extra: dict | None = None,
) -> None:
    index = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        blob = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    checksums = dict(checksums or {})
    checksums["payload"] = hashlib.sha256(payload).hexdigest()
    checksums["params"] = checksum_tensors(tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "tensors": index,
        "layout": layout.to_dict(),
        "normalizer": normalizer.to_dict(),
        "schedule": schedule.to_dict() if schedule is not None else None,
        "checksums": checksums,
        "extra": extra or {},
    }
    head_bytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(_HEAD.pack(MAGIC, FORMAT_VERSION, len(head_bytes)))
        f.write(head_bytes)
        f.write(payload)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        head = f.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise FormatError(f"{path}: truncated checkpoint header")
        magic, version, head_len = _HEAD.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(f.read(head_len))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid checkpoint header: {e}") from e
        payload = f.read()
    digest = hashlib.sha256(payload).hexdigest()
    recorded = header.get("checksums", {}).get("payload")
    if recorded is not None and digest != recorded:
        raise FormatError(f"{path}: payload checksum mismatch, file corrupted")
    tensors = {}
    for entry in header["tensors"]:
        size = 4 * int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 4
        start = entry["offset"]
        raw = payload[start : start + size]
        if len(raw) < size:
            raise FormatError(f"{path}: truncated tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
    schedule = header.get("schedule")
    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        tensors=tensors,
        layout=FeatureLayout.from_dict(header["layout"]),
        normalizer=Normalizer.from_dict(header["normalizer"]),
        schedule=DiffusionSchedule.from_dict(schedule) if schedule else None,
        checksums=header.get("checksums", {}),
        extra=header.get("extra", {}),
    )


def _load_module(module: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = {k: torch.from_numpy(v.copy()) for k, v in tensors.items()}
    missing, unexpected = module.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise ModelError(
            f"checkpoint does not match model: missing {sorted(missing)}, "
            f"unexpected {sorted(unexpected)}"
        )
    module.eval()


def load_vae(ckpt: Checkpoint) -> MotionVae:
    if ckpt.kind == KIND_VAE:
        cfg, tensors = ckpt.config["vae"], ckpt.tensors
    elif ckpt.kind == KIND_DIFFUSION:
        cfg, tensors = ckpt.config["vae"], ckpt.subset("vae.")
    else:
        raise ModelError(f"checkpoint kind {ckpt.kind!r} does not hold a VAE")
    vae = MotionVae(VaeConfig.from_dict(cfg))
    _load_module(vae, tensors)
    return vae


def load_denoiser(ckpt: Checkpoint) -> InteractionDenoiser:
    if ckpt.kind != KIND_DIFFUSION:
        raise ModelError(f"checkpoint kind {ckpt.kind!r} does not hold a denoiser")
    model = InteractionDenoiser(DenoiserConfig.from_dict(ckpt.config["denoiser"]))
    _load_module(model, ckpt.subset("denoiser."))
    return model


def verify_frozen_vae(ckpt: Checkpoint) -> None:
    """Assert the embedded VAE still matches its freeze-time checksum."""
    recorded = ckpt.checksums.get("vae_freeze")
    if recorded is None:
        raise ModelError("diffusion checkpoint lacks a VAE freeze checksum")
    actual = checksum_tensors(ckpt.subset("vae."))
    if actual != recorded:
        raise ModelError("frozen VAE parameters changed since freeze time")
