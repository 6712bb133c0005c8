"""Command line entry points.

Subcommands: make-data, train-vae, train-diffusion, generate, eval, serve,
replay. Exit codes: 0 success, 2 usage or config, 3 data or format, 4 model.
Checkpoint paths fall back to $HINT_CHECKPOINT_DIR when flags are omitted.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .data.motion import INTERHUMAN_STYLE, INTERX_STYLE, MotionSequence
from .data.store import DatasetRecord, read_dataset, write_dataset
from .data.synth import SCRIPTS, SynthConfig, default_seed_poses, synth_generate
from .engine import (
    SessionModels,
    full_trajectory,
    init_session,
    load_transcript,
    models_from_checkpoint,
    replay_transcript,
    roll_window,
    write_transcript,
)
from .errors import (
    ConfigError,
    DataError,
    EncoderUnavailableError,
    FormatError,
    HintError,
    ModelError,
)
from .evals.evaluator import fit_evaluator, load_evaluator
from .evals.protocol import eval_protocol, format_table, pairs_from_dataset, write_report
from .models.denoiser import DenoiserConfig
from .models.vae import VaeConfig
from .service import ENV_CHECKPOINT_DIR, create_app
from .textcond import ToyTextEncoder
from .training.trainer import TrainingConfig, train_diffusion, train_vae


def _resolve_ckpt(value: str | None, name: str, for_output: bool = False) -> Path:
    if value:
        return Path(value)
    root = os.environ.get(ENV_CHECKPOINT_DIR)
    if root:
        return Path(root) / name
    kind = "write" if for_output else "find"
    raise ConfigError(
        f"no checkpoint path given and {ENV_CHECKPOINT_DIR} is unset; "
        f"cannot {kind} {name}"
    )


def cmd_make_data(args) -> int:
    cfg = SynthConfig(
        n_sequences=args.sequences,
        agents=args.agents,
        min_length=args.min_length,
        max_length=args.max_length,
        seed=args.seed,
        scripts=tuple(args.scripts.split(",")) if args.scripts else SCRIPTS,
        layout_kind=args.layout,
    )
    layout, records = synth_generate(cfg)
    write_dataset(args.out, layout, records, seeds={"synth": args.seed})
    n_frames = sum(r.sequences[0].n_frames for r in records)
    print(
        f"wrote {len(records)} sequences x {args.agents} agents "
        f"({n_frames} frames each track) to {args.out}"
    )
    return 0


def cmd_train_vae(args) -> int:
    dataset = read_dataset(args.data)
    cfg = TrainingConfig(
        vae_steps=args.steps,
        batch_size=args.batch,
        seed=args.seed,
        lr=args.lr,
        lr_final=args.lr_final,
        beta=args.beta,
        log_every=args.log_every,
        h=args.history,
        k=args.future,
    )
    vae_cfg = VaeConfig(
        input_dim=dataset.layout.d,
        h=args.history,
        k=args.future,
        latent_dim=args.latent,
        hidden_dim=args.hidden,
        ff_dim=args.ff,
        layers=args.layers,
        heads=args.heads,
        beta=args.beta,
    )
    out = _resolve_ckpt(args.out, "vae.hckpt", for_output=True)
    _, _, metrics = train_vae(dataset, cfg, out_path=out, vae_cfg=vae_cfg)
    last = metrics[-1] if metrics else {}
    print(f"saved VAE to {out} (final loss {last.get('loss', float('nan')):.6f})")
    return 0


def cmd_train_diffusion(args) -> int:
    dataset = read_dataset(args.data)
    vae_path = _resolve_ckpt(args.vae, "vae.hckpt")
    cfg = TrainingConfig(
        stage1_steps=args.stage1,
        stage2_steps=args.stage2,
        stage3_steps=args.stage3,
        batch_size=args.batch,
        seed=args.seed,
        lr=args.lr,
        lr_final=args.lr_final,
        t_diff=args.t_diff,
        rho=args.rho,
        lambda_aff=args.lambda_aff,
        lambda_dist=args.lambda_dist,
        lambda_ori=args.lambda_ori,
        log_every=args.log_every,
        h=args.history,
        k=args.future,
    )
    denoiser_cfg = DenoiserConfig(
        input_dim=dataset.layout.d,
        latent_dim=args.latent,
        h=args.history,
        blocks=args.blocks,
        heads=args.heads,
        hidden=args.hidden,
        ff=args.ff,
    )
    out = _resolve_ckpt(args.out, "diffusion.hckpt", for_output=True)
    _, metrics = train_diffusion(vae_path, dataset, cfg, out_path=out, denoiser_cfg=denoiser_cfg)
    last = metrics[-1] if metrics else {}
    print(f"saved diffusion model to {out} (final loss {last.get('loss', float('nan')):.6f})")
    return 0


def _generate_scene(models: SessionModels, encoder, n_agents, text, frames, seed, poses=None):
    if poses is None:
        poses = [
            (f"agent-{i}", p)
            for i, p in enumerate(default_seed_poses(models.layout, n_agents))
        ]
    session = init_session(
        models.vae,
        models.denoiser,
        models.schedule,
        models.normalizer,
        models.layout,
        encoder,
        poses,
        text,
        frames,
        seed,
    )
    for _ in range(session.window_limit):
        roll_window(session)
    tracks = {
        agent_id: full_trajectory(session, agent_id)[:frames]
        for agent_id in sorted(session.agents)
    }
    return session, tracks


def cmd_generate(args) -> int:
    models = models_from_checkpoint(_resolve_ckpt(args.checkpoint, "diffusion.hckpt"))
    encoder = ToyTextEncoder()
    session, tracks = _generate_scene(
        models, encoder, args.agents, args.text, args.frames, args.seed
    )
    record = DatasetRecord(
        sequence_id=f"gen-{args.seed:04d}",
        sequences=[
            MotionSequence(frames, models.layout, agent_id=agent_id)
            for agent_id, frames in tracks.items()
        ],
        texts=[(0, args.frames, args.text)],
    )
    out = Path(args.out)
    write_dataset(out, models.layout, [record], seeds={"session": args.seed})
    write_transcript(session, out / "transcript.jsonl")
    print(
        f"generated {args.frames} frames for {args.agents} agents "
        f"(seed {args.seed}) into {out}"
    )
    return 0


def _rollout_generator(models: SessionModels, reference, encoder):
    """Per-repeat generator: one scene per reference record, matched prompts
    and matched opening poses (each agent is seeded with the record's first
    H frames, the same conditions a continuation of that scene would see)."""
    h = models.vae.cfg.h

    def generate(seed: int):
        pairs = []
        for i, rec in enumerate(reference.records):
            text = rec.texts[0][2] if rec.texts else ""
            total = rec.sequences[0].n_frames
            poses = [(seq.agent_id, seq.frames[:h].copy()) for seq in rec.sequences]
            _, tracks = _generate_scene(
                models, encoder, len(rec.sequences), text, total, seed * 100003 + i,
                poses=poses,
            )
            for agent_id, frames in tracks.items():
                pairs.append((MotionSequence(frames, models.layout, agent_id=agent_id), text))
        return pairs

    return generate


def cmd_eval(args) -> int:
    reference = read_dataset(args.ref)
    encoder = ToyTextEncoder()
    if args.evaluator and Path(args.evaluator).exists():
        model, normalizer, layout = load_evaluator(args.evaluator)
        if layout.d != reference.layout.d:
            raise DataError(
                f"evaluator was fit on d={layout.d}, reference has d={reference.layout.d}"
            )
    else:
        model, normalizer = fit_evaluator(
            reference,
            seed=args.seed,
            steps=args.evaluator_steps,
            encoder=encoder,
            out_path=args.evaluator,
        )
        if args.evaluator:
            print(f"fit and cached evaluator at {args.evaluator}")
    if args.gen:
        pairs = pairs_from_dataset(read_dataset(args.gen))
        generator = lambda seed: pairs
    else:
        models = models_from_checkpoint(_resolve_ckpt(args.checkpoint, "diffusion.hckpt"))
        generator = _rollout_generator(models, reference, encoder)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    report = eval_protocol(
        generator,
        reference,
        model,
        normalizer,
        repeats=args.repeats,
        seeds=seeds,
        pool_size=args.pool,
        encoder=encoder,
    )
    if args.out:
        write_report(args.out, report)
        print(f"wrote metrics to {args.out}")
    print(format_table(report))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    app = create_app(
        checkpoint=_resolve_ckpt(args.checkpoint, "diffusion.hckpt"),
        max_sessions=args.max_sessions,
        max_agents=args.max_agents,
        idle_timeout=args.idle_timeout,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_replay(args) -> int:
    models = models_from_checkpoint(_resolve_ckpt(args.checkpoint, "diffusion.hckpt"))
    encoder = ToyTextEncoder()
    events = load_transcript(args.transcript)
    session = replay_transcript(
        events,
        models.vae,
        models.denoiser,
        models.schedule,
        models.normalizer,
        models.layout,
        encoder,
    )
    total = session.total_frames
    record = DatasetRecord(
        sequence_id="replay",
        sequences=[
            MotionSequence(
                full_trajectory(session, agent_id)[: total or None],
                models.layout,
                agent_id=agent_id,
            )
            for agent_id in sorted(session.agents)
        ],
        texts=[],
    )
    if args.out:
        write_dataset(args.out, models.layout, [record], seeds={"session": session.seed})
        print(f"replayed {session.window_index} windows into {args.out}")
    else:
        import hashlib

        for seq in record.sequences:
            digest = hashlib.sha256(np.ascontiguousarray(seq.frames).tobytes()).hexdigest()
            print(f"{seq.agent_id}: {seq.n_frames} frames sha256={digest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hint", description="Interactive multi-agent motion generation tools"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write a scripted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--sequences", type=int, default=16)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--min-length", type=int, default=64)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scripts", default=None, help="comma-separated subset of scripts")
    p.add_argument("--layout", default=INTERHUMAN_STYLE, choices=[INTERHUMAN_STYLE, INTERX_STYLE])
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train-vae", help="train the windowed motion autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-final", type=float, default=None, help="cosine-decay lr floor")
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--latent", type=int, default=256)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--ff", type=int, default=1024)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--history", type=int, default=4)
    p.add_argument("--future", type=int, default=16)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("train-diffusion", help="train the latent denoiser on a frozen VAE")
    p.add_argument("--data", required=True)
    p.add_argument("--vae", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--stage1", type=int, default=2000)
    p.add_argument("--stage2", type=int, default=2000)
    p.add_argument("--stage3", type=int, default=2000)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-final", type=float, default=None, help="cosine-decay lr floor")
    p.add_argument("--t-diff", type=int, default=100)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--lambda-aff", type=float, default=0.1)
    p.add_argument("--lambda-dist", type=float, default=0.1)
    p.add_argument("--lambda-ori", type=float, default=1e-4)
    p.add_argument("--latent", type=int, default=256)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--ff", type=int, default=1024)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--history", type=int, default=4)
    p.add_argument("--future", type=int, default=16)
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("generate", help="roll out a scene and write it as a dataset")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--text", default="")
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generated motion against a reference set")
    p.add_argument("--ref", required=True)
    p.add_argument("--gen", default=None, help="generated dataset directory")
    p.add_argument("--checkpoint", default=None, help="generate per repeat instead of --gen")
    p.add_argument("--evaluator", default=None, help="embedding checkpoint to reuse or create")
    p.add_argument("--evaluator-steps", type=int, default=300)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seeds", default=None, help="comma-separated repeat seeds")
    p.add_argument("--pool", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="machine-readable metrics JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the websocket generation service")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-sessions", type=int, default=8)
    p.add_argument("--max-agents", type=int, default=8)
    p.add_argument("--idle-timeout", type=float, default=300.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-run a session transcript bit-for-bit")
    p.add_argument("--transcript", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", default=None, help="dataset directory for the replayed frames")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args) or 0
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ModelError, EncoderUnavailableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except HintError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
