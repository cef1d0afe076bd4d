"""Command-line surface: dataset checks, synthesis, training, evaluation.

Exit codes: 0 success, 1 usage error, 2 data error. Every numeric output is
a pure function of the inputs and ``--seed``, so reruns are bit-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .comment_graph import build_graph
from .dataio import (
    DataError,
    SyntheticConfig,
    generate_synthetic,
    load_model,
    parse_posts,
    save_model,
    write_posts,
)
from .model import ModelConfig
from .node_features import Lexicons, assemble_feature_matrix
from .training import (
    PipelineConfig,
    TrainConfig,
    build_example,
    build_examples,
    cross_validate,
    evaluate_examples,
    predict,
    time_sweep,
    train,
)

__all__ = ["main", "entry", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--config", type=Path, default=None, help="JSON config file")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = _Parser(
        prog="fauxnet",
        description="Detect misleading image posts from their comment networks.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", parents=[common], help="validate a dataset file")
    p.add_argument("dataset", type=Path)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="emit a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-posts", type=int, default=200)
    p.add_argument("--balance", type=float, default=0.5)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("featurize", parents=[common], help="dump node feature matrices")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train a model on a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--history-out", type=Path, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--report-out", type=Path, default=None)
    p.add_argument("--roc-out", type=Path, default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="score a single post")
    p.add_argument("post_file", type=Path, help="JSONL file holding exactly one post")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("sweep-time", parents=[common], help="metrics per observation window")
    p.add_argument("dataset", type=Path)
    p.add_argument(
        "--windows", required=True, help="comma-separated window lengths in seconds"
    )
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("xval", parents=[common], help="k-fold cross-validation")
    p.add_argument("dataset", type=Path)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_xval)

    return parser


def _load_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"bad config file {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise DataError(f"bad config file {path}: expected a JSON object")
    return obj


def _pipeline_config(cfg: dict) -> PipelineConfig:
    section = cfg.get("features", {})
    return PipelineConfig(
        hash_buckets=int(section.get("hash_buckets", 64)),
        symmetrize=bool(section.get("symmetrize", True)),
        scaled_endorsement=bool(section.get("scaled_endorsement", True)),
    )


def _model_config(cfg: dict, pipeline: PipelineConfig, seed: int) -> ModelConfig:
    section = dict(cfg.get("model", {}))
    section.pop("input_dim", None)  # always derived from the feature layout
    section.setdefault("seed", seed)
    return ModelConfig(input_dim=pipeline.input_dim, **section)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    section.setdefault("seed", seed)
    return TrainConfig(**section)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _write_history(path: Path, history) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_loss,holdout_accuracy\n")
        for row in history:
            handle.write(f"{row.epoch},{row.train_loss!r},{row.holdout_accuracy!r}\n")


def _warn_malformed(args, report) -> None:
    if report.malformed_lines and not args.quiet:
        print(
            f"warning: skipped {len(report.malformed_lines)} malformed line(s)",
            file=sys.stderr,
        )


def _cmd_ingest(args) -> int:
    posts, report = parse_posts(args.dataset)
    comments = sum(len(p.comments) for p in posts)
    labeled = sum(1 for p in posts if p.label is not None)
    _say(
        args,
        f"{len(posts)} posts, {comments} comments, {labeled} labeled, "
        f"{report.unknown_fields} unknown fields ignored, "
        f"{report.clamped_timestamps} timestamps clamped",
    )
    if report.malformed_lines:
        for lineno, message in report.malformed_lines:
            print(f"malformed line {lineno}: {message}", file=sys.stderr)
        return 2
    return 0


def _cmd_synth(args) -> int:
    cfg = SyntheticConfig(n_posts=args.n_posts, class_balance=args.balance, seed=args.seed)
    posts = generate_synthetic(cfg)
    write_posts(posts, args.out)
    positives = sum(1 for p in posts if p.label)
    _say(args, f"wrote {len(posts)} posts ({positives} positive) to {args.out}")
    return 0


def _cmd_featurize(args) -> int:
    cfg = _load_config(args.config)
    pipeline = _pipeline_config(cfg)
    posts, report = parse_posts(args.dataset)
    _warn_malformed(args, report)
    lex = Lexicons.default()
    with open(args.out, "w", encoding="utf-8") as handle:
        for post in posts:
            graph = build_graph(post)
            matrix = assemble_feature_matrix(
                graph,
                post,
                lex,
                hash_buckets=pipeline.hash_buckets,
                scaled_endorsement=pipeline.scaled_endorsement,
            )
            handle.write(
                json.dumps(
                    {
                        "post_id": post.post_id,
                        "label": post.label,
                        "nodes": graph.node_count,
                        "columns": matrix.shape[1],
                        "matrix": matrix.tolist(),
                    }
                )
            )
            handle.write("\n")
    _say(args, f"wrote feature matrices for {len(posts)} posts to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    pipeline = _pipeline_config(cfg)
    model_cfg = _model_config(cfg, pipeline, args.seed)
    train_cfg = _train_config(cfg, args.seed)
    posts, report = parse_posts(args.dataset)
    _warn_malformed(args, report)
    lex = Lexicons.default()
    examples = build_examples(posts, lex, pipeline)
    result = train(examples, model_cfg, train_cfg, symmetrize=pipeline.symmetrize)
    save_model(
        args.model_out,
        params=result.params,
        model_cfg=model_cfg,
        pipeline=pipeline,
        stats=result.stats,
        seed=args.seed,
    )
    if args.history_out is not None:
        _write_history(args.history_out, result.history)
    final = result.history[-1]
    _say(
        args,
        f"trained {len(result.history)} epochs; final loss {final.train_loss:.4f}, "
        f"holdout accuracy {final.holdout_accuracy:.4f}; model at {args.model_out}",
    )
    return 0


def _labeled_examples(posts, lex, pipeline):
    unlabeled = [p.post_id for p in posts if p.label is None]
    if unlabeled:
        raise DataError(
            f"{len(unlabeled)} posts have no label (first: {unlabeled[0]!r})"
        )
    return build_examples(posts, lex, pipeline)


def _cmd_evaluate(args) -> int:
    loaded = load_model(args.model)
    posts, report = parse_posts(args.dataset)
    _warn_malformed(args, report)
    examples = _labeled_examples(posts, Lexicons.default(), loaded.pipeline)
    eval_report = evaluate_examples(
        loaded.params,
        examples,
        loaded.stats,
        threshold=args.threshold,
        symmetrize=loaded.pipeline.symmetrize,
    )
    if args.report_out is not None:
        payload = eval_report.to_jsonable()
        payload["threshold"] = args.threshold
        with open(args.report_out, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=1)
            handle.write("\n")
    if args.roc_out is not None:
        with open(args.roc_out, "w", encoding="utf-8") as handle:
            handle.write("fpr,tpr\n")
            for fpr, tpr in eval_report.roc_points:
                handle.write(f"{fpr!r},{tpr!r}\n")
    _say(
        args,
        f"accuracy {eval_report.accuracy:.4f}, f1 {eval_report.f1:.4f}, "
        f"auc {eval_report.auc:.4f} on {eval_report.total} posts",
    )
    return 0


def _cmd_predict(args) -> int:
    loaded = load_model(args.model)
    posts, _ = parse_posts(args.post_file)
    if len(posts) != 1:
        raise DataError(f"expected exactly one post in {args.post_file}, got {len(posts)}")
    example = build_example(posts[0], Lexicons.default(), loaded.pipeline)
    score, label = predict(
        loaded.params,
        example,
        loaded.stats,
        threshold=args.threshold,
        symmetrize=loaded.pipeline.symmetrize,
    )
    print(json.dumps({"post_id": posts[0].post_id, "score": score, "label": label}))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    pipeline = _pipeline_config(cfg)
    model_cfg = _model_config(cfg, pipeline, args.seed)
    train_cfg = _train_config(cfg, args.seed)
    try:
        windows = [int(w) for w in args.windows.split(",") if w.strip()]
    except ValueError:
        raise DataError(f"bad --windows value {args.windows!r}") from None
    posts, report = parse_posts(args.dataset)
    _warn_malformed(args, report)
    points = time_sweep(
        posts, windows, model_cfg, train_cfg, Lexicons.default(), pipeline
    )
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("window_seconds,accuracy,precision,recall,f1,auc\n")
        for point in points:
            r = point.report
            handle.write(
                f"{point.window_seconds},{r.accuracy!r},{r.precision!r},"
                f"{r.recall!r},{r.f1!r},{r.auc!r}\n"
            )
    _say(args, f"swept {len(points)} windows; metrics at {args.out}")
    return 0


def _cmd_xval(args) -> int:
    cfg = _load_config(args.config)
    pipeline = _pipeline_config(cfg)
    model_cfg = _model_config(cfg, pipeline, args.seed)
    train_cfg = _train_config(cfg, args.seed)
    posts, report = parse_posts(args.dataset)
    _warn_malformed(args, report)
    examples = _labeled_examples(posts, Lexicons.default(), pipeline)
    result = cross_validate(
        examples, args.k, model_cfg, train_cfg, symmetrize=pipeline.symmetrize
    )
    payload = {
        "k": args.k,
        "folds": [r.to_jsonable() for r in result.reports],
        "mean": result.mean,
        "std": result.std,
    }
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=1)
            handle.write("\n")
    _say(
        args,
        f"{args.k}-fold: accuracy {result.mean['accuracy']:.4f} "
        f"+/- {result.std['accuracy']:.4f}",
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
