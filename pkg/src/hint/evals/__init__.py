from .metrics import diversity, fid, mm_dist, mpjpe, mroe, r_precision, root_rotation_track
from .evaluator import (
    EvaluatorConfig,
    MotionTextEvaluator,
    embed_motions,
    embed_texts,
    fit_evaluator,
    load_evaluator,
    save_evaluator,
)
from .protocol import eval_protocol, format_table, pairs_from_dataset, report_rows, write_report

__all__ = [
    "diversity",
    "fid",
    "mm_dist",
    "mpjpe",
    "mroe",
    "r_precision",
    "root_rotation_track",
    "EvaluatorConfig",
    "MotionTextEvaluator",
    "embed_motions",
    "embed_texts",
    "fit_evaluator",
    "load_evaluator",
    "save_evaluator",
    "eval_protocol",
    "format_table",
    "pairs_from_dataset",
    "report_rows",
    "write_report",
]
