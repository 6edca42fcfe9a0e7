"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation failure (bad config,
schema or missing input), 3 numeric failure (NaN loss or gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _pool_for(data_dir, cfg):
    from .augment import load_pool

    pool_dir = Path(data_dir) / "pool"
    if not cfg.use_augment or cfg.augment.paste_prob == 0:
        return []
    if not pool_dir.is_dir():
        raise FileNotFoundError(f"instance pool {pool_dir} is missing; set augment.paste_prob: 0 "
                                f"or pass --no-da")
    return load_pool(pool_dir)


def _load_data(path):
    from .annotations import load_dataset

    path = Path(path)
    if not (path / "annotations.json").exists():
        raise FileNotFoundError(f"{path}/annotations.json not found")
    return load_dataset(path)


def _run_config(args, **extra):
    from .config import load_config

    overrides = {"seed": getattr(args, "seed", None), "train.epochs": getattr(args, "epochs", None)}
    overrides.update(extra)
    return load_config(getattr(args, "config", None), overrides)


# ------------------------------------------------------------------ commands

def cmd_gen(args):
    from .synthdata import generate_dataset

    recs = generate_dataset(args.n, args.seed, args.out, pool_size=args.pool_size)
    print(f"wrote {len(recs)} scenes to {args.out}")


def cmd_augment(args):
    from PIL import Image

    from .annotations import load_dataset
    from .augment import augment, load_pool

    cfg = _run_config(args).train.augment
    records = load_dataset(args.inp)
    pool_dir = Path(args.inp) / "pool"
    pool = load_pool(pool_dir) if pool_dir.is_dir() else []
    if not pool and cfg.paste_prob > 0:
        raise FileNotFoundError(f"instance pool {pool_dir} is missing but paste_prob > 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = []
    for i, rec in enumerate(records[:args.limit]):
        img, record = augment(rec, pool, cfg, np.random.default_rng([cfg.seed, i]))
        stem = Path(rec.file_name).stem or f"{i:06d}"
        Image.fromarray(rec.pixels).save(out / f"{stem}_before.png")
        Image.fromarray(img.pixels).save(out / f"{stem}_after.png")
        log.append({"file_name": rec.file_name, **record.to_dict()})
    (out / "records.json").write_text(json.dumps(log, indent=1))
    print(f"wrote {len(log)} before/after pairs to {out}")


def cmd_train(args):
    from .pipeline.train import save_model, train

    toggles = {}
    if args.no_da:
        toggles["train.use_augment"] = False
    if args.no_adam:
        toggles["model.use_adam"] = False
    if args.no_gcn:
        toggles["model.use_gcn"] = False
    run = _run_config(args, **toggles)
    cfg = run.train_config()
    records = _load_data(args.data)
    pool = _pool_for(args.data, cfg)
    ckpt = Path(args.out_ckpt)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else ckpt.with_suffix(".csv")

    def progress(epoch, row):
        print(f"epoch {epoch:3d}  l_m {row['l_m']:.5f}  l_t {row['l_t']:.5f}  "
              f"l_p {row['l_p']:.5f}  total {row['total']:.5f}", flush=True)

    result = train(records, cfg, pool=pool, log_path=log_path, progress=progress)
    save_model(ckpt, result.model, cfg)
    print(f"saved {ckpt} ({result.model.parameter_count()} parameters) and loss log {log_path} "
          f"in {result.seconds:.1f}s")


def cmd_eval(args):
    from .pipeline.evaluate import evaluate
    from .pipeline.train import load_model

    model, _ = load_model(args.ckpt)
    report = evaluate(model, _load_data(args.data))
    text = report.to_json()
    print(text)
    out = Path(args.out) if args.out else Path(args.ckpt).with_suffix(".eval.json")
    out.write_text(text + "\n")


def cmd_ablate(args):
    from .ablation import check_directional, run_ablation, to_csv, to_markdown
    from .augment import load_pool

    run = _run_config(args)
    if args.seeds:
        run.ablation.seeds = tuple(args.seeds)
    if args.ablation_epochs is not None:
        run.ablation.epochs = args.ablation_epochs
    data = Path(args.data)
    train_dir, val_dir = data / "train", data / "val"
    train_images, val_images = _load_data(train_dir), _load_data(val_dir)
    pool = load_pool(train_dir / "pool") if (train_dir / "pool").is_dir() else []
    if not pool and run.train.augment.paste_prob > 0:
        raise FileNotFoundError(f"instance pool {train_dir / 'pool'} is missing but paste_prob > 0")

    def progress(name, seed, report, result):
        print(f"{name:10s} seed {seed}: PCK {100 * report.pck:.2f}  visible {100 * report.pck_visible:.2f}  "
              f"occluded {100 * report.pck_occluded:.2f}  ({result.seconds:.0f}s)", flush=True)

    start = time.perf_counter()
    rows = run_ablation(train_images, val_images, run, pool=pool, progress=progress)
    md = to_markdown(rows)
    out = Path(args.out) if args.out else data
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.md").write_text(md)
    (out / "ablation.csv").write_text(to_csv(rows))
    print(md)
    for claim, ok in check_directional(rows).items():
        print(f"{'PASS' if ok else 'FAIL'}  {claim}")
    print(f"total {time.perf_counter() - start:.0f}s; tables in {out}")


def cmd_gradcheck(args):
    from .gradsuite import TOLERANCE, run_suite

    def report(res):
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name:18s} worst rel err {max(res.errors):.2e} "
              f"over {len(res.errors)} instances ({res.seconds:.1f}s)", flush=True)

    results = run_suite(args.instances, report=report)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed (tolerance {TOLERANCE:g}): {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    print("all gradient checks passed")
    return EXIT_OK


def cmd_viz(args):
    from .annotations import load_annotations, load_image
    from .pipeline.train import load_model
    from .viz import render_visualizations

    model, _ = load_model(args.ckpt)
    pixels = load_image(args.image)
    bbox = np.array([0.0, 0.0, pixels.shape[1], pixels.shape[0]])
    if args.ann:
        name = Path(args.image).name
        matches = [r for r in load_annotations(args.ann) if r.file_name == name]
        if not matches:
            raise FileNotFoundError(f"no annotation for {name} in {args.ann}")
        bbox = matches[0].target.bbox
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in render_visualizations(model, pixels, bbox, out, Path(args.image).stem):
        print(f"wrote {path}")


# ------------------------------------------------------------------- parsing

def build_parser():
    p = _Parser(prog="dagpose", description="Occluded pose estimation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gen", help="generate a synthetic occluded-pose dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--pool-size", type=int, default=200)
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("augment", help="write before/after augmentation pairs")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--config")
    a.add_argument("--limit", type=int, default=16)
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out-ckpt", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--log", help="loss CSV path (default: checkpoint path with .csv)")
    t.add_argument("--no-da", action="store_true", help="disable occlusion augmentation")
    t.add_argument("--no-adam", action="store_true", help="disable the attention module")
    t.add_argument("--no-gcn", action="store_true", help="disable graph refinement")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint (PCK@0.2 JSON)")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", help="report path (default: checkpoint path with .eval.json)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("ablate", help="run the five-row component ablation")
    b.add_argument("--data", required=True, help="directory holding train/ and val/ datasets")
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--seeds", type=int, nargs="+")
    b.add_argument("--epochs", dest="ablation_epochs", type=int)
    b.add_argument("--out")
    b.set_defaults(func=cmd_ablate)

    c = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    c.add_argument("--instances", type=int, default=10)
    c.set_defaults(func=cmd_gradcheck)

    v = sub.add_parser("viz", help="write heatmap and pose overlays for one image")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--image", required=True)
    v.add_argument("--ann", help="annotations.json holding the target bbox (default: whole image)")
    v.add_argument("--out", default="viz")
    v.set_defaults(func=cmd_viz)
    return p


def main(argv=None):
    from .annotations import SchemaError
    from .augment import AugmentConfigError
    from .numerics import CheckpointError, NonFiniteError
    from .pipeline.train import NumericalError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (NumericalError, NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, NotADirectoryError, SchemaError, CheckpointError, AugmentConfigError,
            ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
