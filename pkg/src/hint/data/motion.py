"""Frame-feature layouts and the core motion containers.

Two layout families are supported:

* ``interhuman-style``: per frame ``[joint positions | joint velocities |
  per-joint 6D rotations (root excluded) | 4 foot contacts]``,
  d = 3*Nj + 3*Nj + 6*(Nj-1) + 4.
* ``interx-style``: per frame ``[per-joint 6D rotations | root position |
  root velocity]``, d = 6*Nj + 3 + 3.

Coordinates are y-up, meters. Positions/velocities are stored in whatever
frame the sequence currently lives in (world for raw data, local after
canonicalization); rotation channels are orientations expressed in that same
frame, so rigid maps left-compose them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError

ROLE_POSITION = "position"
ROLE_VELOCITY = "velocity"
ROLE_ROTATION6D = "rotation6d"
ROLE_CONTACT = "contact"

_ROLES = (ROLE_POSITION, ROLE_VELOCITY, ROLE_ROTATION6D, ROLE_CONTACT)


@dataclass(frozen=True)
class ChannelSlice:
    name: str
    role: str
    offset: int
    width: int

    def indices(self) -> slice:
        return slice(self.offset, self.offset + self.width)


# Joint name tables. The 8-joint stick figure is the desk-scale default.
SYNTH8_JOINTS = (
    "root",
    "left_hip",
    "right_hip",
    "left_foot",
    "right_foot",
    "chest",
    "left_hand",
    "right_hand",
)


def _default_joint_meta(n_joints: int) -> dict:
    """Hip / contact-joint conventions for a given skeleton size.

    Contact joints are (left heel, left toe, right heel, right toe); reduced
    skeletons map heel and toe of a foot onto its single foot joint.
    """
    if n_joints == 8:
        return {
            "joint_names": list(SYNTH8_JOINTS),
            "left_hip": 1,
            "right_hip": 2,
            "contact_joints": [3, 3, 4, 4],
        }
    # SMPL-ish ordering: pelvis 0, left/right hip 1/2, ankles 7/8, feet 10/11.
    if n_joints >= 12:
        return {
            "joint_names": [f"joint_{i}" for i in range(n_joints)],
            "left_hip": 1,
            "right_hip": 2,
            "contact_joints": [7, 10, 8, 11],
        }
    return {
        "joint_names": [f"joint_{i}" for i in range(n_joints)],
        "left_hip": 1 % n_joints,
        "right_hip": 2 % n_joints,
        "contact_joints": [n_joints - 2, n_joints - 2, n_joints - 1, n_joints - 1],
    }


@dataclass(frozen=True)
class FeatureLayout:
    """Named, role-annotated channel slices covering a frame vector."""

    kind: str
    joint_count: int
    slices: tuple[ChannelSlice, ...]
    frame_rate: float = 20.0
    joint_names: tuple[str, ...] = ()
    root_joint: int = 0
    left_hip: int = 1
    right_hip: int = 2
    contact_joints: tuple[int, ...] = ()
    # Name of the rotation slice whose first 6 values are the root orientation,
    # or None when the layout carries no root rotation (hip fallback applies).
    root_rotation_slice: str | None = None

    def __post_init__(self):
        end = 0
        for s in self.slices:
            if s.role not in _ROLES:
                raise ConfigError(f"unknown channel role {s.role!r}")
            if s.offset != end:
                raise ConfigError(
                    f"slice {s.name!r} starts at {s.offset}, expected {end}: "
                    "slices must be disjoint and contiguous"
                )
            end += s.width

    @property
    def d(self) -> int:
        return sum(s.width for s in self.slices)

    def slice(self, name: str) -> ChannelSlice:
        for s in self.slices:
            if s.name == name:
                return s
        raise ConfigError(f"layout has no slice named {name!r}")

    def by_role(self, role: str) -> list[ChannelSlice]:
        return [s for s in self.slices if s.role == role]

    def has_role(self, role: str) -> bool:
        return any(s.role == role for s in self.slices)

    @property
    def position_joint_count(self) -> int:
        return sum(s.width for s in self.by_role(ROLE_POSITION)) // 3

    def positions(self, frames: np.ndarray) -> np.ndarray:
        """View position channels as (..., n_position_joints, 3)."""
        parts = [frames[..., s.indices()] for s in self.by_role(ROLE_POSITION)]
        flat = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-1)
        return flat.reshape(*frames.shape[:-1], -1, 3)

    def root_position(self, frames: np.ndarray) -> np.ndarray:
        """Root joint xyz, shape (..., 3)."""
        first = self.by_role(ROLE_POSITION)[0]
        return frames[..., first.offset : first.offset + 3]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "joint_count": self.joint_count,
            "frame_rate": self.frame_rate,
            "slices": [
                {"name": s.name, "role": s.role, "offset": s.offset, "width": s.width}
                for s in self.slices
            ],
            "joint_names": list(self.joint_names),
            "root_joint": self.root_joint,
            "left_hip": self.left_hip,
            "right_hip": self.right_hip,
            "contact_joints": list(self.contact_joints),
            "root_rotation_slice": self.root_rotation_slice,
        }

    @staticmethod
    def from_dict(data: dict) -> "FeatureLayout":
        return FeatureLayout(
            kind=data["kind"],
            joint_count=int(data["joint_count"]),
            slices=tuple(
                ChannelSlice(s["name"], s["role"], int(s["offset"]), int(s["width"]))
                for s in data["slices"]
            ),
            frame_rate=float(data.get("frame_rate", 20.0)),
            joint_names=tuple(data.get("joint_names", ())),
            root_joint=int(data.get("root_joint", 0)),
            left_hip=int(data.get("left_hip", 1)),
            right_hip=int(data.get("right_hip", 2)),
            contact_joints=tuple(data.get("contact_joints", ())),
            root_rotation_slice=data.get("root_rotation_slice"),
        )


INTERHUMAN_STYLE = "interhuman-style"
INTERX_STYLE = "interx-style"


def make_layout(kind: str, n_joints: int, frame_rate: float = 20.0) -> FeatureLayout:
    """Build a layout of the given family.

    interhuman-style d = 3*Nj + 3*Nj + 6*(Nj-1) + 4; interx-style d = 6*Nj + 6.
    """
    if n_joints < 2:
        raise ConfigError(f"n_joints must be >= 2, got {n_joints}")
    meta = _default_joint_meta(n_joints)
    if kind == INTERHUMAN_STYLE:
        np3 = 3 * n_joints
        slices = (
            ChannelSlice("joint_positions", ROLE_POSITION, 0, np3),
            ChannelSlice("joint_velocities", ROLE_VELOCITY, np3, np3),
            ChannelSlice("joint_rotations", ROLE_ROTATION6D, 2 * np3, 6 * (n_joints - 1)),
            ChannelSlice("foot_contacts", ROLE_CONTACT, 2 * np3 + 6 * (n_joints - 1), 4),
        )
        root_rot = None  # root rotation excluded from the feature; hips define heading
    elif kind == INTERX_STYLE:
        slices = (
            ChannelSlice("joint_rotations", ROLE_ROTATION6D, 0, 6 * n_joints),
            ChannelSlice("root_position", ROLE_POSITION, 6 * n_joints, 3),
            ChannelSlice("root_velocity", ROLE_VELOCITY, 6 * n_joints + 3, 3),
        )
        root_rot = "joint_rotations"
    else:
        raise ConfigError(f"unknown layout kind {kind!r}")
    return FeatureLayout(
        kind=kind,
        joint_count=n_joints,
        slices=slices,
        frame_rate=frame_rate,
        joint_names=tuple(meta["joint_names"]),
        left_hip=meta["left_hip"],
        right_hip=meta["right_hip"],
        contact_joints=tuple(meta["contact_joints"]),
        root_rotation_slice=root_rot,
    )


@dataclass
class MotionSequence:
    """One agent's frames (T, d) under a declared layout."""

    frames: np.ndarray
    layout: FeatureLayout
    agent_id: str = "agent-0"

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise DataError(f"frames must be 2-D, got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise DataError("sequence must contain at least one frame")
        if self.frames.shape[1] != self.layout.d:
            raise DataError(
                f"frame width {self.frames.shape[1]} does not match layout d={self.layout.d}"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def validate(self) -> None:
        if not np.isfinite(self.frames).all():
            raise DataError(f"sequence {self.agent_id!r} contains non-finite values")
        for s in self.layout.by_role(ROLE_CONTACT):
            c = self.frames[:, s.indices()]
            if not np.all((c == 0.0) | (c == 1.0)):
                raise DataError(f"contact channels of {self.agent_id!r} are not binary")

    def with_frames(self, frames: np.ndarray) -> "MotionSequence":
        return MotionSequence(frames=frames, layout=self.layout, agent_id=self.agent_id)


@dataclass
class WindowSample:
    """History/future block pair cut from one sequence."""

    history: np.ndarray  # (H, d)
    future: np.ndarray  # (K, d)
    h: int
    k: int
    window_index: int
    total_frames: int
    text: str = ""

    def __post_init__(self):
        if self.history.shape != (self.h, self.future.shape[1]):
            raise DataError(
                f"history shape {self.history.shape} inconsistent with H={self.h}"
            )
        if self.future.shape[0] != self.k:
            raise DataError(f"future has {self.future.shape[0]} rows, expected K={self.k}")
