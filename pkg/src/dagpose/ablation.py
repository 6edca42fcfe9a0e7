"""Component ablation grid: baseline, each component alone, and all together."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .pipeline.data import build_samples
from .pipeline.evaluate import evaluate
from .pipeline.train import train

ROWS = (
    ("baseline", {"use_augment": False, "use_adam": False, "use_gcn": False}),
    ("+DA", {"use_augment": True, "use_adam": False, "use_gcn": False}),
    ("+ADAM", {"use_augment": False, "use_adam": True, "use_gcn": False}),
    ("+GCN", {"use_augment": False, "use_adam": False, "use_gcn": True}),
    ("DAG (all)", {"use_augment": True, "use_adam": True, "use_gcn": True}),
)
METRICS = ("pck", "pck_visible", "pck_occluded")


@dataclass
class AblationRow:
    name: str
    toggles: dict
    seeds: list
    reports: list = field(default_factory=list)
    seconds: float = 0.0

    def mean(self, metric):
        return float(np.mean([getattr(r, metric) for r in self.reports]))

    def std(self, metric):
        return float(np.std([getattr(r, metric) for r in self.reports]))


def run_ablation(train_images, val_images, run_cfg, pool=None, epochs=None, seeds=None,
                 rows=ROWS, progress=None):
    """Train and evaluate every row for every seed; returns rows in table order."""
    epochs = run_cfg.ablation.epochs if epochs is None else epochs
    seeds = list(run_cfg.ablation.seeds if seeds is None else seeds)
    crop = run_cfg.train.model.crop_size
    train_set = build_samples(train_images, crop, run_cfg.train.sigma)
    val_set = build_samples(val_images, crop, run_cfg.train.sigma)
    out = []
    for name, toggles in rows:
        row = AblationRow(name, dict(toggles), seeds)
        start = time.perf_counter()
        for seed in seeds:
            cfg = run_cfg.train_config(epochs=epochs, **toggles)
            cfg.seed = seed
            cfg.augment.seed = seed
            result = train(train_images, cfg, pool=pool, samples=train_set)
            report = evaluate(result.model, samples=val_set)
            row.reports.append(report)
            if progress:
                progress(name, seed, report, result)
        row.seconds = time.perf_counter() - start
        out.append(row)
    return out


def to_markdown(rows):
    lines = ["| Method | DA | ADAM | GCN | PCK@0.2 | PCK visible | PCK occluded | seeds |",
             "|---|---|---|---|---|---|---|---|"]
    for r in rows:
        t = r.toggles
        marks = ["x" if t[k] else "" for k in ("use_augment", "use_adam", "use_gcn")]
        vals = [f"{100 * r.mean(m):.2f} ± {100 * r.std(m):.2f}" for m in METRICS]
        lines.append(f"| {r.name} | " + " | ".join(marks + vals) + f" | {len(r.reports)} |")
    return "\n".join(lines) + "\n"


def to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["method", "use_augment", "use_adam", "use_gcn"]
               + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")] + ["seeds", "seconds"])
    for r in rows:
        w.writerow([r.name] + [int(r.toggles[k]) for k in ("use_augment", "use_adam", "use_gcn")]
                   + [f"{100 * v:.4f}" for m in METRICS for v in (r.mean(m), r.std(m))]
                   + [" ".join(str(s) for s in r.seeds), f"{r.seconds:.1f}"])
    return buf.getvalue()


def check_directional(rows, occluded_gain=2.0, tolerance=0.5):
    """Ordering claims in PCK points: ``{claim: bool}``."""
    by = {r.name: r for r in rows}
    base, full = by["baseline"], by["DAG (all)"]
    checks = {"full >= baseline + %.1f on occluded" % occluded_gain:
              100 * full.mean("pck_occluded") >= 100 * base.mean("pck_occluded") + occluded_gain}
    for name in ("+DA", "+ADAM", "+GCN"):
        checks[f"{name} >= baseline - {tolerance} overall"] = (
            100 * by[name].mean("pck") >= 100 * base.mean("pck") - tolerance)
    checks["full is the best row overall"] = all(full.mean("pck") >= r.mean("pck") for r in rows)
    return checks
