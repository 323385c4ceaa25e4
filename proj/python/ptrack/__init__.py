"""Point-tracking evaluation and adaptation engine."""

import json
import os
import tempfile

from ._ptrack import (
    CorruptFile,
    Error,
    FileNotFound,
    Incompatible,
    InvalidConfig,
    InvalidInput,
    InvalidState,
    TrainingFault,
    TypeMismatch,
    UndefinedMetric,
    argmax2d,
    bilinear_sample,
    checkpoint_info,
    correlation_map,
    probe_init,
    probe_parameter_count,
    read_features,
    soft_argmax2d,
    write_features,
    zero_shot_track,
)
from . import _ptrack

__all__ = [
    "CorruptFile",
    "Error",
    "FileNotFound",
    "Incompatible",
    "InvalidConfig",
    "InvalidInput",
    "InvalidState",
    "TrainingFault",
    "TypeMismatch",
    "UndefinedMetric",
    "argmax2d",
    "bilinear_sample",
    "checkpoint_info",
    "correlation_map",
    "eval_zeroshot",
    "evaluate",
    "gen_synth",
    "probe_init",
    "probe_parameter_count",
    "read_features",
    "soft_argmax2d",
    "train_probe",
    "write_features",
    "zero_shot_track",
]


def evaluate(annotations, predictions, pooling="frame", jaccard="strict"):
    """Queried-first metrics report as a dict."""
    return json.loads(_ptrack.evaluate(str(annotations), str(predictions), pooling, jaccard))


def gen_synth(config, out, seed=None):
    """Generate a synthetic benchmark; `config` is a path or a dict."""
    if not isinstance(config, dict):
        return _ptrack.gen_synth(str(config), str(out), seed)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "config.json")
        with open(path, "w") as f:
            json.dump(config, f)
        return _ptrack.gen_synth(path, str(out), seed)


def eval_zeroshot(features, annotations, out, resolution=None):
    return json.loads(_ptrack.eval_zeroshot(str(features), str(annotations), str(out), resolution))


def train_probe(features, annotations, out, val_features=None, val_annotations=None,
                config=None, seed=None):
    opt = lambda p: None if p is None else str(p)
    return json.loads(_ptrack.train_probe(str(features), str(annotations), str(out),
                                          opt(val_features), opt(val_annotations), opt(config), seed))
