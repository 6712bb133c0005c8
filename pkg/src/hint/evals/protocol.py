"""Repeated evaluation runs with confidence intervals.

Each repeat regenerates (or re-pools) a candidate set under its own seed,
computes the distribution metrics against a fixed reference set, and the
protocol reports per-metric mean with a 1.96 * stderr interval.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import DataError, ModelError
from ..data.motion import MotionSequence
from ..data.store import Dataset
from ..textcond import ToyTextEncoder
from .evaluator import MotionTextEvaluator, embed_motions, embed_texts
from .metrics import diversity, fid, mm_dist, r_precision

TABLE_COLUMNS = ("r_top3", "fid", "mm_dist", "diversity")
_LABELS = {"r_top3": "R@Top3", "fid": "FID", "mm_dist": "MM Dist", "diversity": "Diversity"}

Pair = tuple[MotionSequence, str]
Generator = Callable[[int], list[Pair]]


def pairs_from_dataset(dataset: Dataset) -> list[Pair]:
    pairs: list[Pair] = []
    for rec in dataset.records:
        text = rec.texts[0][2] if rec.texts else ""
        for seq in rec.sequences:
            pairs.append((seq, text))
    if not pairs:
        raise DataError("reference dataset holds no sequences")
    return pairs


def _embed_pairs(
    pairs: Sequence[Pair],
    model: MotionTextEvaluator,
    normalizer,
    encoder: ToyTextEncoder,
) -> tuple[np.ndarray, np.ndarray]:
    motions = embed_motions(model, normalizer, [p[0] for p in pairs])
    texts = embed_texts(model, [p[1] for p in pairs], encoder)
    return motions, texts


def _summary(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    half = 1.96 * stderr
    return {
        "mean": mean,
        "ci_low": mean - half,
        "ci_high": mean + half,
        "values": [float(v) for v in arr],
    }


def eval_protocol(
    generator: Generator,
    reference: Dataset | Sequence[Pair],
    model: MotionTextEvaluator,
    normalizer,
    repeats: int = 20,
    seeds: Sequence[int] | None = None,
    pool_size: int = 32,
    diversity_pairs: int = 300,
    encoder: ToyTextEncoder | None = None,
) -> dict:
    """Run `generator(seed)` once per seed and aggregate metrics.

    `generator` returns the candidate (sequence, text) pairs for one repeat.
    A constant generator still yields per-repeat variation in the pooled
    metrics, whose sub-sampling is keyed by the repeat seed.
    """
    encoder = encoder or ToyTextEncoder()
    if seeds is None:
        seeds = list(range(repeats))
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise DataError("eval protocol needs at least one seed")
    ref_pairs = pairs_from_dataset(reference) if isinstance(reference, Dataset) else list(reference)
    ref_motion, _ = _embed_pairs(ref_pairs, model, normalizer, encoder)

    per_metric: dict[str, list[float]] = {}
    for seed in seeds:
        try:
            gen_pairs = generator(seed)
        except Exception as e:
            raise ModelError(f"generation failed for eval seed {seed}: {e}") from e
        if not gen_pairs:
            raise DataError(f"generator produced no samples for seed {seed}")
        gen_motion, gen_text = _embed_pairs(gen_pairs, model, normalizer, encoder)
        pool = min(pool_size, gen_motion.shape[0])
        row = {
            "r_top1": r_precision(gen_motion, gen_text, pool, top_k=1, seed=seed),
            "r_top2": r_precision(gen_motion, gen_text, pool, top_k=2, seed=seed),
            "r_top3": r_precision(gen_motion, gen_text, pool, top_k=3, seed=seed),
            "fid": fid(gen_motion, ref_motion),
            "mm_dist": mm_dist(gen_motion, gen_text),
            "diversity": diversity(gen_motion, n_pairs=diversity_pairs, seed=seed),
        }
        for name, value in row.items():
            per_metric.setdefault(name, []).append(float(value))

    return {
        "repeats": len(seeds),
        "seeds": seeds,
        "pool_size": pool_size,
        "metrics": {name: _summary(vals) for name, vals in per_metric.items()},
    }


def report_rows(report: dict) -> list[dict]:
    """Flat machine-readable rows: metric, mean, ci bounds, repeat count."""
    rows = []
    for name, stats in report["metrics"].items():
        rows.append(
            {
                "metric": name,
                "mean": stats["mean"],
                "ci_low": stats["ci_low"],
                "ci_high": stats["ci_high"],
                "repeats": report["repeats"],
                "seeds": report["seeds"],
            }
        )
    return rows


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps({"report": report, "rows": report_rows(report)}, indent=2))


def format_table(report: dict) -> str:
    cells = []
    for name in TABLE_COLUMNS:
        stats = report["metrics"][name]
        half = (stats["ci_high"] - stats["ci_low"]) / 2.0
        cells.append((_LABELS[name], f"{stats['mean']:.4f} +/- {half:.4f}"))
    width = max(len(c[1]) for c in cells)
    head = " | ".join(label.center(max(len(label), width)) for label, _ in cells)
    body = " | ".join(val.center(max(len(label), width)) for label, val in cells)
    rule = "-+-".join("-" * max(len(label), width) for label, _ in cells)
    return "\n".join([head, rule, body])
