"""Rotation representations and the yaw canonicalization algebra.

All rotations here are right-handed, y-up. Canonical transforms are rigid
maps x -> R x + T whose rotation is about the vertical axis only, so gravity
and ground contact survive the change of frame. The 6D rotation encoding is
the first two columns of the matrix, column-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateHeadingError,
    DegenerateRotationError,
)
from .data.motion import (
    ROLE_CONTACT,
    ROLE_POSITION,
    ROLE_ROTATION6D,
    ROLE_VELOCITY,
    FeatureLayout,
    MotionSequence,
)

UP = np.array([0.0, 1.0, 0.0])

_EPS_DEGENERATE = 1e-8


def rot6d_to_matrix(r: np.ndarray) -> np.ndarray:
    """Orthonormalize 6 values (..., 6) into rotation matrices (..., 3, 3).

    Standard two-column construction: normalize the first column, project it
    out of the second, cross for the third.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise DataError(f"expected trailing dim 6, got {r.shape}")
    if not np.isfinite(r).all():
        raise DegenerateRotationError("non-finite 6D rotation values")
    a1 = r[..., 0:3]
    a2 = r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < _EPS_DEGENERATE):
        raise DegenerateRotationError("first rotation column has near-zero norm")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 < _EPS_DEGENERATE):
        raise DegenerateRotationError("rotation columns are parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d(m: np.ndarray) -> np.ndarray:
    """First two columns of rotation matrices (..., 3, 3) -> (..., 6)."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise DataError(f"expected trailing shape (3, 3), got {m.shape}")
    eye = np.eye(3)
    gram = np.einsum("...ji,...jk->...ik", m, m)
    if np.max(np.abs(gram - eye)) > 1e-6:
        raise DataError("matrix is not orthonormal within 1e-6")
    if np.max(np.abs(np.linalg.det(m) - 1.0)) > 1e-6:
        raise DataError("matrix determinant is not +1 within 1e-6")
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def rotation_geodesic(ra: np.ndarray, rb: np.ndarray) -> np.ndarray:
    """Geodesic angle (radians) between rotation matrices, batched."""
    rel = np.einsum("...ij,...kj->...ik", np.asarray(ra), np.asarray(rb))
    tr = np.trace(rel, axis1=-2, axis2=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about +y by angle (radians)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class CanonicalTransform:
    """Rigid map x -> R x + T with R a pure yaw."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise DataError("transform must be a 3x3 rotation and a 3-vector")

    @staticmethod
    def identity() -> "CanonicalTransform":
        return CanonicalTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_heading(forward_xz: np.ndarray, root: np.ndarray) -> "CanonicalTransform":
        """Yaw taking the unit ground-plane heading (fx, fz) onto +z, then the
        translation dropping the root's ground-plane position onto the origin.
        """
        fx, fz = float(forward_xz[0]), float(forward_xz[1])
        rot = np.array([[fz, 0.0, -fx], [0.0, 1.0, 0.0], [fx, 0.0, fz]])
        t = -(rot @ np.asarray(root, dtype=np.float64))
        t[1] = 0.0
        return CanonicalTransform(rot, t)

    def apply_point(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.rotation.T + self.translation

    def apply_vector(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.rotation.T


def invert_transform(x: CanonicalTransform) -> CanonicalTransform:
    rt = x.rotation.T
    return CanonicalTransform(rt, -(rt @ x.translation))


def compose_transforms(a: CanonicalTransform, b: CanonicalTransform) -> CanonicalTransform:
    """a after b: (a ∘ b)(x) = a(b(x))."""
    return CanonicalTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def relative_transform(xi: CanonicalTransform, xj: CanonicalTransform) -> CanonicalTransform:
    """Map agent j's canonical frame into agent i's: R = Ri Rj^T, T = Ti - R Tj."""
    r = xi.rotation @ xj.rotation.T
    t = xi.translation - r @ xj.translation
    return CanonicalTransform(r, t)


def _forward_at(frames: np.ndarray, layout: FeatureLayout, frame: int) -> np.ndarray | None:
    """Unnormalized forward vector of one frame, or None when degenerate."""
    if layout.root_rotation_slice is not None:
        s = layout.slice(layout.root_rotation_slice)
        r6 = frames[frame, s.offset : s.offset + 6]
        rot = rot6d_to_matrix(r6)
        fwd = rot[:, 2]  # body +z column is the facing axis
    else:
        pos = layout.positions(frames[frame : frame + 1])[0]
        fwd = np.cross(pos[layout.left_hip] - pos[layout.right_hip], UP)
    norm = np.linalg.norm(fwd)
    if norm < _EPS_DEGENERATE:
        return None
    fwd = fwd / norm
    if np.hypot(fwd[0], fwd[2]) < 1e-6:
        return None
    return fwd


def heading_at(frames: np.ndarray, layout: FeatureLayout, frame: int) -> np.ndarray:
    """Unit ground-plane heading (fx, fz) at a frame.

    A near-vertical facing keeps the most recent non-degenerate frame's
    heading; a sequence degenerate back through frame 0 is an error.
    """
    for f in range(frame, -1, -1):
        fwd = _forward_at(frames, layout, f)
        if fwd is not None:
            xz = np.array([fwd[0], fwd[2]])
            return xz / np.linalg.norm(xz)
    raise DegenerateHeadingError(
        f"facing direction is within 1e-6 of vertical back through frame 0 (anchor {frame})"
    )


def canonical_transform_at(
    frames: np.ndarray, layout: FeatureLayout, anchor: int
) -> CanonicalTransform:
    """Transform placing the anchor frame's root at the origin facing +z."""
    frames = np.asarray(frames)
    if not 0 <= anchor < frames.shape[0]:
        raise DataError(f"anchor {anchor} out of range for {frames.shape[0]} frames")
    heading = heading_at(frames, layout, anchor)
    root = layout.root_position(frames[anchor])
    return CanonicalTransform.from_heading(heading, root)


def transform_frames(
    frames: np.ndarray, layout: FeatureLayout, x: CanonicalTransform
) -> np.ndarray:
    """Apply a rigid map per channel role.

    positions -> R p + T; velocities -> R v (free vectors); 6D rotations ->
    left-compose (R applied to both stored columns); contacts unchanged.
    """
    frames = np.asarray(frames)
    out = frames.copy()
    rt = x.rotation.T
    for s in layout.slices:
        block = frames[..., s.indices()]
        if s.role == ROLE_POSITION:
            pts = block.reshape(*block.shape[:-1], -1, 3)
            out[..., s.indices()] = (pts @ rt + x.translation).reshape(block.shape)
        elif s.role == ROLE_VELOCITY:
            vec = block.reshape(*block.shape[:-1], -1, 3)
            out[..., s.indices()] = (vec @ rt).reshape(block.shape)
        elif s.role == ROLE_ROTATION6D:
            cols = block.reshape(*block.shape[:-1], -1, 2, 3)
            out[..., s.indices()] = (cols @ rt).reshape(block.shape)
        elif s.role == ROLE_CONTACT:
            pass
        else:
            raise ConfigError(f"slice {s.name!r} has unhandled role {s.role!r}")
    return out


def apply_transform(seq: MotionSequence, x: CanonicalTransform) -> MotionSequence:
    return seq.with_frames(transform_frames(seq.frames, seq.layout, x))


def canonicalize(
    seq: MotionSequence, anchor: int
) -> tuple[MotionSequence, CanonicalTransform]:
    """Express a sequence in the frame where, at the anchor frame, the root
    ground-plane position is the origin and the heading is +z."""
    x = canonical_transform_at(seq.frames, seq.layout, anchor)
    return apply_transform(seq, x), x
