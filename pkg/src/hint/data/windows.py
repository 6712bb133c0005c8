"""Window extraction and foot-contact labeling."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError
from .motion import MotionSequence, WindowSample

H_DEFAULT = 4
K_DEFAULT = 16


def pad_history(frames: np.ndarray, target: int) -> np.ndarray:
    """Left-pad by repeating the first frame until the sequence has target rows."""
    t = frames.shape[0]
    if t >= target:
        return frames
    head = np.repeat(frames[:1], target - t, axis=0)
    return np.concatenate([head, frames], axis=0)


def extract_windows(
    seq: MotionSequence,
    h: int = H_DEFAULT,
    k: int = K_DEFAULT,
    stride: int | None = None,
    pad: bool = True,
    texts: list[tuple[int, int, str]] | None = None,
) -> list[WindowSample]:
    """Cut overlapping (history, future) windows out of one sequence.

    Windows advance by stride (default K, so each history is the previous
    window's tail). Sequences shorter than H+K are left-padded with the
    first frame when pad is set, else rejected. Each window picks up the
    last text span covering its first future frame; spans index the padded
    sequence.
    """
    if stride is None:
        stride = k
    if h < 1 or k < 1 or stride < 1:
        raise ConfigError(f"h, k, stride must be positive, got {(h, k, stride)}")
    frames = seq.frames
    if frames.shape[0] < h + k:
        if not pad:
            raise DataError(
                f"sequence has {frames.shape[0]} frames, needs {h + k} with padding disabled"
            )
        frames = pad_history(frames, h + k)
    t_total = frames.shape[0]
    count = (t_total - h - k) // stride + 1
    out = []
    for w in range(count):
        start = w * stride
        text = ""
        if texts:
            fut_start = start + h
            for span_start, span_end, span_text in texts:
                if span_start <= fut_start < span_end:
                    text = span_text
        out.append(
            WindowSample(
                history=frames[start : start + h],
                future=frames[start + h : start + h + k],
                h=h,
                k=k,
                window_index=w,
                total_frames=t_total,
                text=text,
            )
        )
    return out


def foot_contacts(
    positions: np.ndarray,
    contact_joints: tuple[int, ...] | list[int],
    speed_threshold: float = 0.05,
) -> np.ndarray:
    """Binary contact labels (T, 4): 1 where the joint moves slower than the
    threshold (meters per frame interval).

    Frame 0 copies frame 1's label so output length matches input.
    """
    positions = np.asarray(positions)
    if positions.ndim != 3 or positions.shape[-1] != 3:
        raise DataError(f"positions must be (T, J, 3), got {positions.shape}")
    if len(contact_joints) != 4:
        raise ConfigError(f"need 4 contact joints (heel/toe per foot), got {contact_joints}")
    n_joints = positions.shape[1]
    for j in contact_joints:
        if not 0 <= j < n_joints:
            raise ConfigError(f"contact joint {j} out of range for {n_joints} joints")
    pts = positions[:, list(contact_joints)]  # (T, 4, 3)
    if pts.shape[0] == 1:
        return np.ones((1, 4), dtype=positions.dtype)
    speed = np.linalg.norm(np.diff(pts, axis=0), axis=-1)  # (T-1, 4)
    labels = (speed < speed_threshold).astype(positions.dtype)
    return np.concatenate([labels[:1], labels], axis=0)
