"""Command-line entry point.

Subcommands: synth, prepare-flow, plan, train, predict, eval, plot.
Exit codes: 0 success, 2 configuration/argument error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus, metrics, pipeline, sampling, synthetic
from .config import load_config
from .errors import (
    ConfigError,
    DataError,
    EvaluationError,
    InfeasiblePlanError,
    NumericError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowrec",
        description="Motion-aware multi-label video behavior recognition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the moving-shapes toy dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--clips", type=int, default=200)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=32)

    p = sub.add_parser("prepare-flow", help="populate the flow cache for a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("plan", help="print sampling plans as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", type=int, required=True, help="clip frame count N")

    p = sub.add_parser("train", help="train a model and write checkpoint + loss CSV")
    p.add_argument("--config", required=True)

    p = sub.add_parser("predict", help="write per-clip prediction JSON-lines")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output path (default <out_dir>/predictions.jsonl)")
    p.add_argument("--top-k", type=int, default=0, help="also rank the top-k classes")

    p = sub.add_parser("eval", help="write the mAP report CSV and PR figures")
    p.add_argument("--config", required=True)
    p.add_argument("--no-plots", action="store_true", help="skip the PR-curve figure")

    p = sub.add_parser("plot", help="render PR curves and loss curves to images")
    p.add_argument("--predictions", help="predictions JSON-lines file")
    p.add_argument("--manifest", help="manifest with ground-truth labels")
    p.add_argument("--train-log", help="training log CSV")
    p.add_argument("--out", required=True, help="output directory for figures")

    return parser


def _cmd_synth(args) -> int:
    manifest = synthetic.generate_moving_shapes(
        args.clips,
        args.frames,
        args.seed,
        args.out,
        image_size=args.image_size,
    )
    print(f"wrote {args.clips} clips, manifest at {manifest}")
    return EXIT_OK


def _cmd_prepare_flow(args) -> int:
    cfg = load_config(args.config)
    done = pipeline.prepare_flow_cache(cfg, workers=args.workers)
    print(f"flow cache ready for {len(done)} clips in {cfg.paths.flow_cache}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    cfg = load_config(args.config)
    plans = sampling.build_plans(
        args.frames, cfg.classifiers, cfg.scheme, cfg.frame_budget, cfg.seed
    )
    print(json.dumps([p.to_dict() for p in plans], indent=2))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    ckpt, log_path = pipeline.run_training(cfg)
    print(f"checkpoint: {ckpt}")
    print(f"training log: {log_path}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    cfg = load_config(args.config)
    scored, classes = pipeline.score_clips(cfg)
    out = Path(args.out) if args.out else cfg.paths.require("out_dir") / "predictions.jsonl"
    pipeline.write_predictions(scored, classes, out, top_k=args.top_k)
    print(f"predictions: {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    report, scored, classes = pipeline.run_eval(cfg)
    out_dir = cfg.paths.require("out_dir")
    csv_path = metrics.write_metrics_csv(report, out_dir / "metrics.csv")
    for name in report.excluded_classes:
        print(f"warning: class {name!r} has no positives and was excluded", file=sys.stderr)
    print(f"metrics: {csv_path}")
    print(f"mAP: {report.mean_ap:.6f}")
    if not args.no_plots:
        records = pipeline.load_records(cfg, require_labels=True)
        vocab = corpus.LabelVocabulary(tuple(classes))
        labels = np.stack([vocab.binary_vector(r.labels) for r in records])
        scores = np.stack([s.mean_scores for s in scored])
        curves = {}
        for c, name in enumerate(classes):
            if labels[:, c].sum() > 0:
                curves[name] = metrics.pr_curve(scores[:, c], labels[:, c])
        fig_path = out_dir / "pr_curves.png"
        from .plots import plot_pr_curves

        plot_pr_curves(curves, fig_path, report)
        print(f"figures: {fig_path}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import plot_loss_curve, plot_pr_curves

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.predictions:
        if not args.manifest:
            raise ConfigError("--predictions requires --manifest for ground truth")
        records = corpus.load_manifest(args.manifest, require_labels=True)
        by_id = {}
        with open(args.predictions, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    by_id[row["clip_id"]] = row["mean_scores"]
        missing = [r.clip_id for r in records if r.clip_id not in by_id]
        if missing:
            raise DataError(f"predictions missing clips: {missing[:5]}")
        vocab = corpus.LabelVocabulary.from_records(records)
        labels = np.stack([vocab.binary_vector(r.labels) for r in records])
        scores = np.stack([np.asarray(by_id[r.clip_id], dtype=np.float64) for r in records])
        if scores.shape[1] != len(vocab):
            raise DataError(
                f"predictions have {scores.shape[1]} classes, manifest implies {len(vocab)}"
            )
        report = metrics.evaluate(scores, labels, list(vocab.classes))
        curves = {
            name: metrics.pr_curve(scores[:, c], labels[:, c])
            for c, name in enumerate(vocab.classes)
            if labels[:, c].sum() > 0
        }
        wrote.append(plot_pr_curves(curves, out_dir / "pr_curves.png", report))
    if args.train_log:
        wrote.append(plot_loss_curve(args.train_log, out_dir / "loss_curve.png"))
    if not wrote:
        raise ConfigError("nothing to plot: pass --predictions/--manifest or --train-log")
    for path in wrote:
        print(f"figure: {path}")
    return EXIT_OK


_HANDLERS = {
    "synth": _cmd_synth,
    "prepare-flow": _cmd_prepare_flow,
    "plan": _cmd_plan,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, InfeasiblePlanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
