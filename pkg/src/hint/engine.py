"""Sliding-window autoregressive rollout over a multi-agent session.

Each window, every agent is re-canonicalized at its last history frame, sees
every partner's history mapped into its own canonical frame, samples a future
latent, decodes it, and maps the frames back to world coordinates. All agents
advance on the same window boundary, so nobody conditions on a partner's
future.

Randomness is keyed per (session seed, agent id, window index), which makes
rollouts bitwise reproducible and agent-permutation equivariant: an agent's
noise stream travels with its id, not its position in the agent list.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DataError, SessionError
from .data.motion import ROLE_CONTACT, FeatureLayout
from .data.normalize import Normalizer
from .data.windows import pad_history
from .geometry import (
    CanonicalTransform,
    canonical_transform_at,
    invert_transform,
    relative_transform,
    transform_frames,
)
from .models.checkpoint import (
    KIND_DIFFUSION,
    Checkpoint,
    load_checkpoint,
    load_denoiser,
    load_vae,
    verify_frozen_vae,
)
from .models.denoiser import (
    ConditionBundle,
    InteractionDenoiser,
    pack_text_batch,
    relative_features,
)
from .models.schedule import DiffusionSchedule, ancestral_sample
from .models.vae import MotionVae
from .errors import ModelError
from .textcond import encode_text


@dataclass
class SessionModels:
    """Everything a rollout needs, unpacked from one diffusion checkpoint."""

    vae: MotionVae
    denoiser: InteractionDenoiser
    schedule: DiffusionSchedule
    normalizer: Normalizer
    layout: FeatureLayout
    checksums: dict


def models_from_checkpoint(ckpt_or_path) -> SessionModels:
    ckpt = ckpt_or_path if isinstance(ckpt_or_path, Checkpoint) else load_checkpoint(ckpt_or_path)
    if ckpt.kind != KIND_DIFFUSION:
        raise ModelError(f"rollout needs a diffusion checkpoint, got kind {ckpt.kind!r}")
    verify_frozen_vae(ckpt)
    if ckpt.schedule is None:
        raise ModelError("diffusion checkpoint lacks a noise schedule")
    return SessionModels(
        vae=load_vae(ckpt),
        denoiser=load_denoiser(ckpt),
        schedule=ckpt.schedule,
        normalizer=ckpt.normalizer,
        layout=ckpt.layout,
        checksums=dict(ckpt.checksums),
    )


def agent_generator(seed: int, agent_id: str, window: int) -> torch.Generator:
    """Noise stream keyed by (seed, agent id, window index)."""
    digest = hashlib.blake2b(f"{seed}:{agent_id}:{window}".encode(), digest_size=8).digest()
    g = torch.Generator()
    g.manual_seed(int.from_bytes(digest, "little") & (2**63 - 1))
    return g


@dataclass
class AgentView:
    """One agent's canonical-frame history entering a window."""

    agent_id: str
    hist_canonical: np.ndarray  # (H, d), unnormalized
    transform: CanonicalTransform  # world -> canonical
    text: str


def assemble_conditions(
    views: list[AgentView],
    layout: FeatureLayout,
    normalizer: Normalizer,
    encoder,
    window_index: int,
    total_frames: int,
    h: int,
) -> ConditionBundle:
    """Batched condition bundle, one row per agent, partners ordered by id."""
    n = len(views)
    d = layout.d
    target = torch.zeros(n, h, d)
    partners = torch.zeros(n, max(n - 1, 0), h, d)
    rel = torch.zeros(n, max(n - 1, 0), 9)
    pmask = torch.zeros(n, max(n - 1, 0), dtype=torch.bool)
    words, commands = [], []
    order = sorted(range(n), key=lambda i: views[i].agent_id)
    for i, view in enumerate(views):
        target[i] = torch.as_tensor(
            normalizer.apply(view.hist_canonical), dtype=torch.float32
        )
        slot = 0
        for j in order:
            if views[j].agent_id == view.agent_id:
                continue
            r = relative_transform(view.transform, views[j].transform)
            moved = transform_frames(views[j].hist_canonical, layout, r)
            partners[i, slot] = torch.as_tensor(
                normalizer.apply(moved), dtype=torch.float32
            )
            rel[i, slot] = torch.as_tensor(relative_features(r))
            pmask[i, slot] = True
            slot += 1
        wt, cmd = encode_text(view.text, encoder)
        words.append(wt.embeddings)
        commands.append(cmd.embedding)
    word_tokens, word_mask, command = pack_text_batch(words, commands, encoder.e_dim)
    return ConditionBundle(
        target_history=target,
        step_indices=torch.arange(1, h + 1).expand(n, h),
        partner_histories=partners,
        partner_relative=rel,
        partner_mask=pmask,
        word_tokens=word_tokens,
        word_mask=word_mask,
        command=command,
        window_index=torch.full((n,), window_index, dtype=torch.long),
        total_frames=torch.full((n,), total_frames, dtype=torch.long),
    )


def bundle_row(cond: ConditionBundle, i: int) -> ConditionBundle:
    return ConditionBundle(
        **{name: getattr(cond, name)[i : i + 1] for name in cond.__dataclass_fields__}
    )


def binarize_contacts(frames: np.ndarray, layout: FeatureLayout) -> np.ndarray:
    for s in layout.by_role(ROLE_CONTACT):
        frames[..., s.indices()] = (frames[..., s.indices()] > 0.5).astype(frames.dtype)
    return frames


@dataclass
class AgentState:
    agent_id: str
    history: np.ndarray  # (H, d) world frame, float32
    trajectory: list = field(default_factory=list)  # emitted (K, d) world blocks
    text_override: str | None = None


@dataclass
class GenerationSession:
    vae: MotionVae
    denoiser: InteractionDenoiser
    schedule: DiffusionSchedule
    normalizer: Normalizer
    layout: FeatureLayout
    encoder: object
    seed: int
    h: int
    k: int
    total_frames: int | None  # None = open-ended
    agents: dict[str, AgentState] = field(default_factory=dict)
    global_text: str = ""
    window_index: int = 0
    max_agents: int = 8
    transcript: list = field(default_factory=list)

    @property
    def window_limit(self) -> int | None:
        if self.total_frames is None:
            return None
        return -(-self.total_frames // self.k)

    def record(self, event: str, **payload) -> None:
        self.transcript.append({"event": event, "window_index": self.window_index, **payload})


def _seed_history(pose: np.ndarray, layout: FeatureLayout, h: int) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float32)
    if pose.ndim == 1:
        pose = pose[None, :]
    if pose.ndim != 2 or pose.shape[0] < 1 or pose.shape[0] > h or pose.shape[1] != layout.d:
        raise DataError(
            f"seed pose must be (1..{h}, {layout.d}) world-frame rows, got {pose.shape}"
        )
    return pad_history(pose, h)


def init_session(
    vae: MotionVae,
    denoiser: InteractionDenoiser,
    schedule: DiffusionSchedule,
    normalizer: Normalizer,
    layout: FeatureLayout,
    encoder,
    poses: list[tuple[str, np.ndarray]],
    text: str,
    total_frames: int | None,
    seed: int,
    max_agents: int = 8,
) -> GenerationSession:
    """Start a session from world-frame seed poses (1..H frames per agent)."""
    if not poses:
        raise SessionError("session needs at least one agent")
    if len(poses) > max_agents:
        raise SessionError(f"{len(poses)} agents exceeds the limit of {max_agents}")
    ids = [agent_id for agent_id, _ in poses]
    if len(set(ids)) != len(ids):
        raise SessionError(f"colliding agent ids: {ids}")
    session = GenerationSession(
        vae=vae,
        denoiser=denoiser,
        schedule=schedule,
        normalizer=normalizer,
        layout=layout,
        encoder=encoder,
        seed=seed,
        h=vae.cfg.h,
        k=vae.cfg.k,
        total_frames=total_frames,
        global_text=text,
        max_agents=max_agents,
    )
    for agent_id, pose in poses:
        session.agents[agent_id] = AgentState(
            agent_id=agent_id, history=_seed_history(pose, layout, session.h)
        )
    session.record(
        "init",
        seed=seed,
        text=text,
        total_frames=total_frames,
        agents=[
            {"id": agent_id, "pose": np.asarray(pose, dtype=np.float32).reshape(-1, layout.d).tolist()}
            for agent_id, pose in poses
        ],
    )
    return session


def update_text(session: GenerationSession, text: str, scope: str = "global") -> dict:
    """Steer generation from the next window on. Last writer wins."""
    if scope == "global":
        session.global_text = text
    elif scope in session.agents:
        session.agents[scope].text_override = text
    else:
        raise SessionError(f"unknown text scope {scope!r}")
    session.record("text", scope=scope, text=text)
    return {"scope": scope, "window_index": session.window_index}


def add_agent(
    session: GenerationSession, pose: np.ndarray, agent_id: str | None = None, text: str | None = None
) -> str:
    """Join a new agent; it participates from the next window."""
    if len(session.agents) >= session.max_agents:
        raise SessionError(f"agent limit {session.max_agents} reached")
    if agent_id is None:
        n = 0
        while f"agent-{n}" in session.agents:
            n += 1
        agent_id = f"agent-{n}"
    elif agent_id in session.agents:
        raise SessionError(f"agent id {agent_id!r} already present")
    state = AgentState(agent_id=agent_id, history=_seed_history(pose, session.layout, session.h))
    state.text_override = text
    session.agents[agent_id] = state
    session.record(
        "add_agent",
        id=agent_id,
        pose=np.asarray(pose, dtype=np.float32).reshape(-1, session.layout.d).tolist(),
        text=text,
    )
    return agent_id


def roll_window(session: GenerationSession) -> dict[str, np.ndarray]:
    """Generate the next K frames for every agent, world frame."""
    limit = session.window_limit
    if limit is not None and session.window_index >= limit:
        raise SessionError(f"session exhausted after {limit} windows")
    t = session.window_index
    total = session.total_frames if session.total_frames is not None else (t + 1) * session.k

    states = [session.agents[a] for a in sorted(session.agents)]
    views = []
    for st in states:
        x = canonical_transform_at(st.history, session.layout, session.h - 1)
        views.append(
            AgentView(
                agent_id=st.agent_id,
                hist_canonical=transform_frames(st.history, session.layout, x),
                transform=x,
                text=st.text_override if st.text_override is not None else session.global_text,
            )
        )
    cond = assemble_conditions(
        views, session.layout, session.normalizer, session.encoder, t, total, session.h
    )

    outputs: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for i, view in enumerate(views):
            row = bundle_row(cond, i)
            gen = agent_generator(session.seed, view.agent_id, t)
            z = ancestral_sample(
                lambda zt, td: session.denoiser(zt, td, row),
                (1, session.vae.cfg.latent_dim),
                session.schedule,
                gen,
            )
            fut_norm = session.vae.decode(z, row.target_history)[0].numpy()
            fut_c = session.normalizer.invert(fut_norm.astype(np.float64))
            fut_c = binarize_contacts(fut_c, session.layout)
            fut_world = transform_frames(
                fut_c, session.layout, invert_transform(view.transform)
            ).astype(np.float32)
            outputs[view.agent_id] = fut_world

    for st in states:  # synchronous boundary update after all agents sampled
        block = outputs[st.agent_id]
        st.trajectory.append(block)
        st.history = block[-session.h :].copy()
    session.record("step")
    session.window_index += 1
    return outputs


def full_trajectory(session: GenerationSession, agent_id: str) -> np.ndarray:
    st = session.agents[agent_id]
    if not st.trajectory:
        return np.zeros((0, session.layout.d), dtype=np.float32)
    return np.concatenate(st.trajectory, axis=0)


def write_transcript(session: GenerationSession, path) -> None:
    with open(path, "w") as f:
        for row in session.transcript:
            f.write(json.dumps(row) + "\n")


def load_transcript(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def replay_transcript(
    events: list[dict],
    vae: MotionVae,
    denoiser: InteractionDenoiser,
    schedule: DiffusionSchedule,
    normalizer: Normalizer,
    layout: FeatureLayout,
    encoder,
) -> GenerationSession:
    """Re-run a recorded session; outputs are bitwise identical to the original."""
    if not events or events[0]["event"] != "init":
        raise DataError("transcript must start with an init event")
    session = None
    for ev in events:
        kind = ev["event"]
        if kind == "init":
            poses = [
                (a["id"], np.asarray(a["pose"], dtype=np.float32)) for a in ev["agents"]
            ]
            session = init_session(
                vae,
                denoiser,
                schedule,
                normalizer,
                layout,
                encoder,
                poses,
                ev["text"],
                ev["total_frames"],
                ev["seed"],
            )
        elif kind == "text":
            update_text(session, ev["text"], ev["scope"])
        elif kind == "add_agent":
            add_agent(
                session,
                np.asarray(ev["pose"], dtype=np.float32),
                agent_id=ev["id"],
                text=ev.get("text"),
            )
        elif kind == "step":
            roll_window(session)
        else:
            raise DataError(f"unknown transcript event {kind!r}")
    return session
