"""Episodic evaluation, hyperparameter sweeps and report files.

Per-episode accuracy (fraction of correct queries) is averaged over
episodes; the 95% half-width is ``1.96 * std / sqrt(E)`` with the sample
standard deviation. Episodes are seeded individually, so results do not
depend on the number of worker processes (``workers`` argument or the
``ATA_WORKERS`` environment variable).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
import csv
import io
import json
import math
import os
import time

import numpy as np

from .alignment import AlignmentConfig
from .classifier import InferenceConfig, classify_episode
from .episodes import EpisodeSpec, _eligible, make_episode
from .errors import InvalidSpec, ValidationError
from .losses import LossConfig, PrototypeBank, train_prototypes

SWEEP_AXES = ("beta", "alpha", "nu")
SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    config: dict
    episodes: int
    mean_accuracy: float
    ci95_halfwidth: float
    wall_time_seconds: float = 0.0
    per_episode_accuracies: list | None = None

    def interval(self):
        """``(low, high)`` clipped to [0, 1], for display."""
        return (
            max(0.0, self.mean_accuracy - self.ci95_halfwidth),
            min(1.0, self.mean_accuracy + self.ci95_halfwidth),
        )

    def to_dict(self, timing=False, per_episode=False):
        out = {
            "schema_version": SCHEMA_VERSION,
            "kind": "eval",
            "config": self.config,
            "episodes": self.episodes,
            "mean_accuracy": self.mean_accuracy,
            "ci95_halfwidth": self.ci95_halfwidth,
        }
        if timing:
            out["wall_time_seconds"] = self.wall_time_seconds
        if per_episode and self.per_episode_accuracies is not None:
            out["per_episode_accuracies"] = list(self.per_episode_accuracies)
        return out


@dataclass
class SweepReport:
    axis: str
    points: list = field(default_factory=list)  # [(value, EvalReport)]

    def to_dict(self, timing=False, per_episode=False):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "sweep",
            "axis": self.axis,
            "points": [
                {"value": v, "report": r.to_dict(timing, per_episode)} for v, r in self.points
            ],
        }

    def accuracies(self):
        return [r.mean_accuracy for _, r in self.points]


def summarize(accs):
    accs = np.asarray(accs, dtype=np.float64)
    mean = float(np.mean(accs))
    half = 1.96 * float(np.std(accs, ddof=1)) / math.sqrt(len(accs)) if len(accs) > 1 else 0.0
    return mean, half


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get("ATA_WORKERS", "1"))
    if workers < 1:
        raise ValidationError("worker count must be >= 1")
    return workers


# state shared with worker processes through the pool initializer
_STATE = {}


def _init_worker(ds, espec, icfg, acfg, bank):
    _STATE.update(ds=ds, espec=espec, icfg=icfg, acfg=acfg, bank=bank)
    _STATE["cache"] = _eligible(ds, espec)


def _episode_accuracy(index):
    s = _STATE
    ep = make_episode(s["ds"], s["espec"], index, s["cache"])
    bank = None if s["bank"] is None else PrototypeBank(s["bank"][ep.classes])
    pred, _ = classify_episode(ep, s["icfg"], s["acfg"], bank=bank)
    return float(np.mean(pred == ep.query_labels))


def _accuracies(ds, espec, icfg, acfg, bank, workers):
    args = (ds, espec, icfg, acfg, None if bank is None else bank.prototypes)
    indices = range(espec.num_episodes)
    if workers == 1:
        _init_worker(*args)
        return [_episode_accuracy(i) for i in indices]
    chunk = max(1, espec.num_episodes // (4 * workers))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=args) as pool:
        return list(pool.map(_episode_accuracy, indices, chunksize=chunk))


def evaluate(ds, espec=EpisodeSpec(), icfg=InferenceConfig(), acfg=AlignmentConfig(),
             bank=None, workers=None, data_info=None):
    """Run ``espec.num_episodes`` episodes and aggregate accuracy.

    If ``bank`` is given (one prototype per dataset class), episodes start
    from the bank's prototypes for their classes instead of support means.
    """
    if espec.num_episodes < 1:
        raise InvalidSpec("need at least one episode")
    if espec.queries_per_class < 1:
        raise InvalidSpec("evaluation needs at least one query per class")
    if bank is not None and bank.num_classes != ds.num_classes:
        raise InvalidSpec(f"bank has {bank.num_classes} prototypes for {ds.num_classes} classes")
    workers = resolve_workers(workers)
    start = time.perf_counter()
    accs = _accuracies(ds, espec, icfg, acfg, bank, workers)
    mean, half = summarize(accs)
    config = {
        "alignment": acfg.to_dict(),
        "inference": icfg.to_dict(),
        "episodes": espec.to_dict(),
        "data": data_info or {"videos": len(ds), "classes": ds.num_classes, "m": ds.m, "c": ds.c},
        "init": "support_mean" if bank is None else "trained_bank",
    }
    return EvalReport(config, len(accs), mean, half, time.perf_counter() - start, accs)


def sweep(axis, values, ds, espec=EpisodeSpec(), icfg=InferenceConfig(), acfg=AlignmentConfig(),
          lcfg=LossConfig(), base=None, workers=None, data_info=None):
    """Evaluate once per value of ``axis`` on identical episodes.

    ``beta`` varies the inference mixture weight. ``alpha`` and ``nu`` are
    training weights: each point trains a bank on ``base`` (same classes as
    ``ds``) and evaluates episodes drawn from ``ds`` starting from it.
    """
    if axis not in SWEEP_AXES:
        raise ValidationError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = [float(v) for v in values]
    if len(values) < 2:
        raise ValidationError("a sweep needs at least two values")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError(f"sweep values must be strictly increasing: {values}")
    if axis != "beta" and base is None:
        raise ValidationError(f"sweeping {axis} needs a base training set")
    report = SweepReport(axis)
    for v in values:
        if axis == "beta":
            r = evaluate(ds, espec, replace(icfg, beta=v), acfg, workers=workers, data_info=data_info)
        else:
            cfg = replace(lcfg, **{axis: v})
            bank = train_prototypes(base, cfg, acfg, num_classes=ds.num_classes)
            r = evaluate(ds, espec, icfg, acfg, bank=bank, workers=workers, data_info=data_info)
            r.config["loss"] = cfg.to_dict()
        report.points.append((v, r))
    return report


# ---------------------------------------------------------------- output


def schema_path():
    """Location of the JSON Schema that every emitted report satisfies."""
    return resources.files("ata") / "schemas" / "report.schema.json"


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def report_json(report, timing=False, per_episode=False):
    return json.dumps(report.to_dict(timing, per_episode), indent=2, sort_keys=True) + "\n"


def report_csv(report, timing=False):
    """One row per evaluation: ``axis,value`` (sweeps only), results, flattened config."""
    if isinstance(report, SweepReport):
        rows = [{"axis": report.axis, "value": v, **_row(r, timing)} for v, r in report.points]
    else:
        rows = [_row(report, timing)]
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _row(r, timing):
    row = {"episodes": r.episodes, "mean_accuracy": r.mean_accuracy, "ci95_halfwidth": r.ci95_halfwidth}
    if timing:
        row["wall_time_seconds"] = r.wall_time_seconds
    row.update(_flatten(r.config, "config."))
    return row


def write_report(report, path=None, fmt="json", timing=False, per_episode=False):
    """Serialize ``report``; write it to ``path`` or return the text when ``path`` is None."""
    if fmt == "json":
        text = report_json(report, timing, per_episode)
    elif fmt == "csv":
        text = report_csv(report, timing)
    else:
        raise ValidationError(f"unknown format {fmt!r}")
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text
