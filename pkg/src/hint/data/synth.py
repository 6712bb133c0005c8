"""Scripted synthetic multi-agent motion.

Stands in for licensed mocap corpora. Each sequence runs one parameterized
interaction script (approach, circle, follow, back-away, wave) on a reduced
8-joint stick figure and carries a template text naming the script and its
parameters. Everything is a pure function of the config seed.

Feet are driven by a step-gated gait: a foot either stays planted (speed
exactly zero) or swings with per-frame displacement at least 0.075 m, so the
speed-threshold contact labeler reproduces the scripted stance mask exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .motion import (
    INTERHUMAN_STYLE,
    INTERX_STYLE,
    FeatureLayout,
    MotionSequence,
    make_layout,
)

SCRIPTS = ("approach", "circle", "follow", "back-away", "wave")

_GAIT_PERIOD = 16
_SWING_MIN_STEP = 0.075  # m per swing frame; keeps swings above the contact threshold


@dataclass
class SynthConfig:
    n_sequences: int = 16
    agents: int = 2
    min_length: int = 64
    max_length: int = 128
    seed: int = 0
    scripts: tuple[str, ...] = SCRIPTS
    layout_kind: str = INTERHUMAN_STYLE
    n_joints: int = 8
    frame_rate: float = 20.0


@dataclass
class SynthRecord:
    sequence_id: str
    sequences: list[MotionSequence]
    texts: list[tuple[int, int, str]]
    stance: list[np.ndarray] = field(default_factory=list)  # (T, 4) per agent


def _heading_from_path(xz: np.ndarray, initial: float) -> np.ndarray:
    """Per-frame yaw from path tangent, carrying the last heading while idle."""
    t = xz.shape[0]
    out = np.empty(t)
    prev = initial
    vel = np.diff(xz, axis=0, prepend=xz[:1])
    for i in range(t):
        if np.hypot(vel[i, 0], vel[i, 1]) > 1e-4:
            prev = np.arctan2(vel[i, 0], vel[i, 1])
        out[i] = prev
    return out


def _walk_feet(
    left_base: np.ndarray, right_base: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Step-gated gait. Returns foot positions (T, 2, 3) and stance mask (T, 2)."""
    t_total = left_base.shape[0]
    bases = (left_base, right_base)
    half = _GAIT_PERIOD // 2
    plants = [left_base[0].copy(), right_base[0].copy()]
    swing_from = [None, None]
    swing_to = [None, None]
    active = [False, False]
    pos = np.zeros((t_total, 2, 3))
    mask = np.ones((t_total, 2))
    for t in range(t_total):
        cyc = t % _GAIT_PERIOD
        for f in (0, 1):
            lo = 0 if f == 0 else half
            in_swing = lo <= cyc < lo + half
            if in_swing and cyc == lo:
                end = min(t + half, t_total - 1)
                target = bases[f][end]
                step = np.hypot(*(target - plants[f])[[0, 2]])
                active[f] = step / half >= _SWING_MIN_STEP
                if active[f]:
                    swing_from[f] = plants[f].copy()
                    swing_to[f] = target.copy()
            if in_swing and active[f]:
                s = (cyc - lo + 1) / half
                p = swing_from[f] + (swing_to[f] - swing_from[f]) * s
                p[1] = 0.05 + 0.08 * np.sin(np.pi * s)
                pos[t, f] = p
                mask[t, f] = 0.0
                if s >= 1.0:
                    plants[f] = swing_to[f].copy()
            else:
                pos[t, f] = plants[f]
    return pos, mask


def _pose_body(
    root_xz: np.ndarray, heading: np.ndarray, wave: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Skeleton positions (T, 8, 3) and stance mask (T, 4) around a root path.

    wave holds per-frame (left, right) hand raise amounts in [0, 1].
    """
    t_total = root_xz.shape[0]
    fwd = np.stack([np.sin(heading), np.zeros(t_total), np.cos(heading)], axis=-1)
    left = np.stack([fwd[:, 2], np.zeros(t_total), -fwd[:, 0]], axis=-1)
    speed = np.linalg.norm(np.diff(root_xz, axis=0, prepend=root_xz[:1]), axis=-1)
    bob = 0.015 * np.sin(2 * np.pi * np.arange(t_total) / 8) * np.minimum(speed / 0.04, 1.0)

    root = np.zeros((t_total, 3))
    root[:, [0, 2]] = root_xz
    root[:, 1] = 0.9 + bob
    ground = root.copy()
    ground[:, 1] = 0.05

    l_hip = root + 0.1 * left
    r_hip = root - 0.1 * left
    l_hip[:, 1] = 0.85
    r_hip[:, 1] = 0.85
    l_base = ground + 0.1 * left
    r_base = ground - 0.1 * left
    l_base[:, 1] = 0.05
    r_base[:, 1] = 0.05
    feet, mask2 = _walk_feet(l_base, r_base)

    chest = root + np.array([0.0, 0.45, 0.0])
    osc = 0.1 * np.sin(2 * np.pi * np.arange(t_total) / 10)[:, None]
    hands = []
    for side, w in ((1.0, wave[:, 0]), (-1.0, wave[:, 1])):
        rest = root + side * 0.25 * left + np.array([0.0, -0.15, 0.0]) + 0.05 * fwd
        raised = root + side * 0.3 * left + np.array([0.0, 0.5, 0.0]) + side * osc * left
        hands.append(rest * (1 - w[:, None]) + raised * w[:, None])

    positions = np.stack(
        [root, l_hip, r_hip, feet[:, 0], feet[:, 1], chest, hands[0], hands[1]], axis=1
    )
    mask4 = mask2[:, [0, 0, 1, 1]]  # heel/toe per foot collapse onto one joint each
    return positions, mask4


def _rot6d_yaw(heading: np.ndarray) -> np.ndarray:
    """(T, 6) column-major 6D of yaw matrices: columns R[:,0], R[:,1]."""
    c, s = np.cos(heading), np.sin(heading)
    zero, one = np.zeros_like(c), np.ones_like(c)
    return np.stack([c, zero, -s, zero, one, zero], axis=-1)


def _features(
    layout: FeatureLayout, positions: np.ndarray, heading: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    t_total, n_joints = positions.shape[:2]
    vel = np.diff(positions, axis=0, prepend=positions[:1])
    vel[0] = vel[1] if t_total > 1 else 0.0
    r6 = _rot6d_yaw(heading)
    if layout.kind == INTERHUMAN_STYLE:
        rots = np.repeat(r6[:, None, :], n_joints - 1, axis=1)
        parts = [
            positions.reshape(t_total, -1),
            vel.reshape(t_total, -1),
            rots.reshape(t_total, -1),
            mask,
        ]
    else:
        rots = np.repeat(r6[:, None, :], n_joints, axis=1)
        parts = [rots.reshape(t_total, -1), positions[:, 0], vel[:, 0]]
    return np.concatenate(parts, axis=-1).astype(np.float32)


def _script_paths(
    script: str, rng: np.random.Generator, t_total: int, n_agents: int
) -> tuple[list[dict], str]:
    """Per-agent {root_xz, heading, wave} plus the template text."""
    center = rng.uniform(-3.0, 3.0, size=2)
    base_angle = rng.uniform(0, 2 * np.pi)
    angles = base_angle + 2 * np.pi * np.arange(n_agents) / n_agents
    agents = []

    def toward(path, target):
        d = target[None, :] - path
        return np.arctan2(d[:, 0], d[:, 1])

    if script == "approach":
        d0 = rng.uniform(2.4, 4.0)
        v = rng.uniform(0.04, 0.07)
        stop = 0.35 if n_agents > 2 else 0.3
        for a in range(n_agents):
            start = center + (d0 / 2) * np.array([np.sin(angles[a]), np.cos(angles[a])])
            path = np.empty((t_total, 2))
            pos = start.copy()
            direction = center - start
            direction /= np.linalg.norm(direction)
            for t in range(t_total):
                remaining = np.linalg.norm(center - pos) - stop
                pos = pos + direction * min(v, max(remaining, 0.0))
                path[t] = pos
            agents.append({"root_xz": path, "heading": toward(path, center), "wave": None})
        text = f"{n_agents} people approach each other from {d0:.1f} m apart"
    elif script == "circle":
        r = rng.uniform(1.0, 2.0)
        v = rng.uniform(0.04, 0.07)
        turn = 1.0 if rng.random() < 0.5 else -1.0
        omega = turn * v / r
        for a in range(n_agents):
            alpha = angles[a] + omega * np.arange(t_total)
            path = center + r * np.stack([np.sin(alpha), np.cos(alpha)], axis=-1)
            agents.append({"root_xz": path, "heading": None, "wave": None})
        word = "clockwise" if turn < 0 else "counterclockwise"
        text = f"{n_agents} people circle a {r:.1f} m ring {word}"
    elif script == "follow":
        v = rng.uniform(0.04, 0.07)
        lag = int(rng.integers(8, 16))
        theta = base_angle + 0.8 * np.sin(2 * np.pi * np.arange(t_total) / 90)
        steps = v * np.stack([np.sin(theta), np.cos(theta)], axis=-1)
        lead = center + np.cumsum(steps, axis=0)
        for a in range(n_agents):
            idx = np.maximum(np.arange(t_total) - a * lag, 0)
            agents.append({"root_xz": lead[idx], "heading": None, "wave": None})
        text = f"a winding walk with followers trailing {lag} frames behind"
    elif script == "back-away":
        d1 = rng.uniform(2.2, 3.2)
        v = rng.uniform(0.03, 0.05)
        for a in range(n_agents):
            direction = np.array([np.sin(angles[a]), np.cos(angles[a])])
            start = center + 0.4 * direction
            path = np.empty((t_total, 2))
            pos = start.copy()
            for t in range(t_total):
                remaining = d1 / 2 - np.linalg.norm(pos - center)
                pos = pos + direction * min(v, max(remaining, 0.0))
                path[t] = pos
            agents.append({"root_xz": path, "heading": toward(path, center), "wave": None})
        text = f"{n_agents} people back away to {d1:.1f} m while facing each other"
    elif script == "wave":
        d = rng.uniform(1.0, 1.8)
        wavers = rng.random(n_agents) < 0.7
        wavers[int(rng.integers(n_agents))] = True
        hand = "right" if rng.random() < 0.5 else "left"
        for a in range(n_agents):
            start = center + (d / 2) * np.array([np.sin(angles[a]), np.cos(angles[a])])
            path = np.repeat(start[None, :], t_total, axis=0)
            wave = np.zeros((t_total, 2))
            if wavers[a]:
                ramp = np.clip((np.arange(t_total) - 8) / 6, 0.0, 1.0)
                wave[:, 0 if hand == "left" else 1] = ramp
            agents.append({"root_xz": path, "heading": toward(path, center), "wave": wave})
        text = f"people stand {d:.1f} m apart and wave the {hand} hand"
    else:
        raise ConfigError(f"unknown script {script!r}")
    return agents, text


def rest_pose(layout: FeatureLayout, position_xz, heading: float, n_frames: int = 1) -> np.ndarray:
    """Standing frames (n_frames, d) at a ground-plane position facing `heading`."""
    if layout.joint_count != 8:
        raise ConfigError("rest poses are defined for the 8-joint skeleton")
    root_xz = np.tile(np.asarray(position_xz, dtype=np.float64)[None, :], (n_frames, 1))
    head = np.full(n_frames, float(heading))
    positions, mask = _pose_body(root_xz, head, np.zeros((n_frames, 2)))
    return _features(layout, positions, head, mask)


def default_seed_poses(layout: FeatureLayout, n_agents: int, spacing: float = 1.2) -> list[np.ndarray]:
    """Per-agent single seed frames on a circle, everyone facing the center."""
    if n_agents < 1:
        raise ConfigError(f"n_agents must be >= 1, got {n_agents}")
    if n_agents == 1:
        return [rest_pose(layout, (0.0, 0.0), 0.0)]
    radius = spacing / (2.0 * np.sin(np.pi / n_agents))
    poses = []
    for a in range(n_agents):
        ang = 2.0 * np.pi * a / n_agents
        pos = (radius * np.sin(ang), radius * np.cos(ang))
        heading = float(np.arctan2(-pos[0], -pos[1]))  # face the centroid
        poses.append(rest_pose(layout, pos, heading))
    return poses


def synth_generate(cfg: SynthConfig) -> tuple[FeatureLayout, list[SynthRecord]]:
    """Generate a deterministic scripted dataset."""
    if cfg.agents < 1:
        raise ConfigError(f"agents must be >= 1, got {cfg.agents}")
    for s in cfg.scripts:
        if s not in SCRIPTS:
            raise ConfigError(f"unknown script {s!r}, known: {SCRIPTS}")
    if cfg.n_joints != 8:
        raise ConfigError("synthetic kinematics are defined for the 8-joint skeleton")
    layout = make_layout(cfg.layout_kind, cfg.n_joints, cfg.frame_rate)
    rng = np.random.default_rng(cfg.seed)
    records = []
    for i in range(cfg.n_sequences):
        t_total = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        script = cfg.scripts[int(rng.integers(len(cfg.scripts)))]
        agent_specs, text = _script_paths(script, rng, t_total, cfg.agents)
        sequences, stances = [], []
        for a, spec in enumerate(agent_specs):
            heading = spec["heading"]
            if heading is None:
                heading = _heading_from_path(spec["root_xz"], 0.0)
            wave = spec["wave"]
            if wave is None:
                wave = np.zeros((t_total, 2))
            positions, mask = _pose_body(spec["root_xz"], heading, wave)
            frames = _features(layout, positions, heading, mask)
            sequences.append(MotionSequence(frames, layout, agent_id=f"agent-{a}"))
            stances.append(mask)
        records.append(
            SynthRecord(
                sequence_id=f"seq-{i:04d}",
                sequences=sequences,
                texts=[(0, t_total, text)],
                stance=stances,
            )
        )
    return layout, records
