"""On-disk dataset container.

A dataset is a directory holding `manifest.json` (format version, layout
descriptor, sequence index, generator seeds), one binary record file per
agent track, and `texts.jsonl` with one record per (sequence_id, window
span, text).

Record files are little-endian float32 frame matrices behind a 16-byte
header: magic `HMOT`, version u32, T u32, d u32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from .motion import FeatureLayout, MotionSequence

MAGIC = b"HMOT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_motion_file(path: Path, frames: np.ndarray) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise DataError(f"frames must be 2-D, got shape {frames.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, frames.shape[0], frames.shape[1]))
        f.write(frames.tobytes())


def read_motion_file(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, t, d = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = f.read(4 * t * d)
        if len(payload) < 4 * t * d:
            raise FormatError(f"{path}: truncated payload, expected {t}x{d} floats")
    return np.frombuffer(payload, dtype="<f4").reshape(t, d).copy()


@dataclass
class DatasetRecord:
    sequence_id: str
    sequences: list[MotionSequence]
    texts: list[tuple[int, int, str]] = field(default_factory=list)


@dataclass
class Dataset:
    layout: FeatureLayout
    records: list[DatasetRecord]
    seeds: dict = field(default_factory=dict)

    def all_sequences(self) -> list[MotionSequence]:
        return [s for r in self.records for s in r.sequences]


def write_dataset(path: str | Path, layout: FeatureLayout, records, seeds: dict | None = None) -> None:
    """Write records (anything carrying sequence_id / sequences / texts)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = []
    text_rows = []
    for rec in records:
        files, agents = [], []
        for seq in rec.sequences:
            if seq.layout.d != layout.d or seq.layout.kind != layout.kind:
                raise DataError(
                    f"record {rec.sequence_id!r} layout does not match the container layout"
                )
            name = f"{rec.sequence_id}.{seq.agent_id}.hmot"
            write_motion_file(path / name, seq.frames)
            files.append(name)
            agents.append(seq.agent_id)
        index.append(
            {
                "id": rec.sequence_id,
                "agents": agents,
                "files": files,
                "n_frames": int(rec.sequences[0].n_frames),
            }
        )
        for start, end, text in rec.texts:
            text_rows.append(
                {"sequence_id": rec.sequence_id, "start": int(start), "end": int(end), "text": text}
            )
    manifest = {
        "format_version": FORMAT_VERSION,
        "layout": layout.to_dict(),
        "sequences": index,
        "seeds": seeds or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))
    with open(path / "texts.jsonl", "w") as f:
        for row in text_rows:
            f.write(json.dumps(row) + "\n")


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{path}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{manifest_path}: invalid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported dataset format version {manifest.get('format_version')}"
        )
    layout = FeatureLayout.from_dict(manifest["layout"])
    texts_by_seq: dict[str, list] = {}
    texts_path = path / "texts.jsonl"
    if texts_path.exists():
        for line in texts_path.read_text().splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            texts_by_seq.setdefault(row["sequence_id"], []).append(
                (row["start"], row["end"], row["text"])
            )
    records = []
    for entry in manifest["sequences"]:
        sequences = []
        for agent_id, name in zip(entry["agents"], entry["files"]):
            frames = read_motion_file(path / name)
            if frames.shape[1] != layout.d:
                raise DataError(
                    f"{name}: frame width {frames.shape[1]} does not match container d={layout.d}"
                )
            sequences.append(MotionSequence(frames, layout, agent_id=agent_id))
        records.append(
            DatasetRecord(
                sequence_id=entry["id"],
                sequences=sequences,
                texts=texts_by_seq.get(entry["id"], []),
            )
        )
    return Dataset(layout=layout, records=records, seeds=manifest.get("seeds", {}))
