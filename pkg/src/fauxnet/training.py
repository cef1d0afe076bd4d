"""Training loop, prediction, and evaluation metrics.

Owns everything between featurized graphs and numbers in a report:
stratified splitting, per-column feature standardization (fit on training
rows only), the Adam mini-batch loop over block-diagonal batches, threshold
classification, confusion metrics, ROC/AUC, k-fold cross-validation, and
the observation-window sweep. Fixed seeds give bitwise-identical runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .comment_graph import CommentGraph, PostRecord, adjacency, build_graph, filter_by_window
from .model import (
    ModelConfig,
    ModelParams,
    batch_loss,
    block_diagonal,
    forward,
    init_params,
    normalize_adjacency,
)
from .node_features import Lexicons, assemble_feature_matrix, feature_dim

__all__ = [
    "PipelineConfig",
    "LabeledExample",
    "build_example",
    "build_examples",
    "FeatureStats",
    "standardize_features",
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "train",
    "score_examples",
    "classify_score",
    "predict",
    "mean_loss",
    "EvalReport",
    "compute_metrics",
    "roc_auc",
    "evaluate_examples",
    "CrossValResult",
    "cross_validate",
    "SweepPoint",
    "time_sweep",
]


@dataclass(frozen=True)
class PipelineConfig:
    """Feature-extraction settings that travel with a trained model."""

    hash_buckets: int = 64
    symmetrize: bool = True
    scaled_endorsement: bool = True

    @property
    def input_dim(self) -> int:
        return feature_dim(self.hash_buckets)


@dataclass
class LabeledExample:
    """One post ready for the model: graph, node features, optional label."""

    graph: CommentGraph
    features: np.ndarray
    label: Optional[bool]

    def __post_init__(self) -> None:
        if self.features.shape[0] != self.graph.node_count:
            raise ValueError(
                f"{self.features.shape[0]} feature rows for "
                f"{self.graph.node_count} graph nodes"
            )


def build_example(
    post: PostRecord, lex: Lexicons, pipeline: PipelineConfig = PipelineConfig()
) -> LabeledExample:
    graph = build_graph(post)
    features = assemble_feature_matrix(
        graph,
        post,
        lex,
        hash_buckets=pipeline.hash_buckets,
        scaled_endorsement=pipeline.scaled_endorsement,
    )
    return LabeledExample(graph=graph, features=features, label=post.label)


def build_examples(
    posts: Sequence[PostRecord],
    lex: Lexicons,
    pipeline: PipelineConfig = PipelineConfig(),
) -> list[LabeledExample]:
    return [build_example(post, lex, pipeline) for post in posts]


@dataclass
class FeatureStats:
    """Per-column standardization fitted on training node rows.

    Columns with variance below 1e-12 and the post-indicator column are left
    untouched (``transformed`` False, std 1).
    """

    mean: np.ndarray
    std: np.ndarray
    transformed: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean * self.transformed) / self.std

    def inverse(self, features: np.ndarray) -> np.ndarray:
        return features * self.std + self.mean * self.transformed

    def to_jsonable(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "transformed": [bool(t) for t in self.transformed],
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "FeatureStats":
        return FeatureStats(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
            transformed=np.asarray(obj["transformed"], dtype=bool),
        )


def standardize_features(
    train_set: Sequence[np.ndarray],
    apply_sets: Sequence[Sequence[np.ndarray]] = (),
    flag_column: int = -1,
) -> tuple[list[np.ndarray], list[list[np.ndarray]], FeatureStats]:
    """Fit column stats on the training matrices and transform every set.

    Statistics pool all node rows of all training graphs. Returns the
    transformed training set, the transformed extra sets, and the fitted
    stats (reusable on future data via ``stats.apply``).
    """
    if not train_set:
        raise ValueError("standardize_features requires a non-empty training set")
    stacked = np.concatenate(list(train_set), axis=0)
    mean = stacked.mean(axis=0)
    variance = stacked.var(axis=0)
    transformed = variance >= 1e-12
    transformed[flag_column] = False
    std = np.where(transformed, np.sqrt(variance), 1.0)
    stats = FeatureStats(mean=mean, std=std, transformed=transformed)
    train_out = [stats.apply(m) for m in train_set]
    apply_out = [[stats.apply(m) for m in group] for group in apply_sets]
    return train_out, apply_out, stats


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    train_fraction: float = 0.8
    standardize: bool = True
    patience: Optional[int] = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    holdout_accuracy: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    stats: Optional[FeatureStats]
    train_indices: list[int]
    holdout_indices: list[int]


def _stratified_split(
    labels: Sequence[bool], fraction: float, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    train_idx: list[int] = []
    hold_idx: list[int] = []
    for cls in (False, True):
        members = [i for i, y in enumerate(labels) if y == cls]
        perm = rng.permutation(len(members))
        n_train = round(fraction * len(members))
        for pos, j in enumerate(perm):
            (train_idx if pos < n_train else hold_idx).append(members[j])
    return sorted(train_idx), sorted(hold_idx)


def _require_labels(examples: Sequence[LabeledExample]) -> list[bool]:
    labels = []
    for i, ex in enumerate(examples):
        if ex.label is None:
            raise ValueError(f"example {i} ({ex.graph.post_ref!r}) has no label")
        labels.append(bool(ex.label))
    return labels


def _prepare(
    examples: Sequence[LabeledExample],
    stats: Optional[FeatureStats],
    symmetrize: bool,
) -> list[tuple]:
    prepared = []
    for ex in examples:
        adj = normalize_adjacency(
            adjacency(ex.graph, symmetrize=symmetrize),
            allow_asymmetric=not symmetrize,
        )
        feats = stats.apply(ex.features) if stats is not None else ex.features
        prepared.append((adj, feats))
    return prepared


def train(
    examples: Sequence[LabeledExample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig = TrainConfig(),
    symmetrize: bool = True,
) -> TrainResult:
    """Fit the classifier with Adam over block-diagonal mini-batches.

    The example list is split stratified by label; column standardization is
    fitted on the training portion only. History records the mean training
    loss and holdout accuracy per epoch. Identical seeds and data give
    bitwise-identical trajectories. Raises if the training split ends up
    single-class.
    """
    labels = _require_labels(examples)
    if len(examples) < 2:
        raise ValueError("training requires at least 2 labeled examples")
    if model_cfg.input_dim != examples[0].features.shape[1]:
        raise ValueError(
            f"model input_dim {model_cfg.input_dim} does not match "
            f"feature dimension {examples[0].features.shape[1]}"
        )

    rng = np.random.default_rng(train_cfg.seed)
    train_idx, hold_idx = _stratified_split(labels, train_cfg.train_fraction, rng)
    train_labels = [labels[i] for i in train_idx]
    if len(set(train_labels)) < 2:
        raise ValueError(
            "training split contains a single class; both labels are required"
        )

    stats: Optional[FeatureStats] = None
    if train_cfg.standardize:
        _, _, stats = standardize_features([examples[i].features for i in train_idx])
    prepared = _prepare(examples, stats, symmetrize)

    params = init_params(model_cfg)
    named = params.as_dict()
    adam = ad.AdamState.for_params(
        named,
        lr=train_cfg.learning_rate,
        beta1=train_cfg.beta1,
        beta2=train_cfg.beta2,
        eps=train_cfg.eps,
    )

    history: list[EpochStats] = []
    best_holdout_loss = math.inf
    stale_epochs = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train_idx))
        total_loss = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            chunk = [train_idx[k] for k in order[start : start + train_cfg.batch_size]]
            batch = block_diagonal(
                [prepared[i] for i in chunk], labels=[labels[i] for i in chunk]
            )
            loss, _, leaves = batch_loss(batch, params)
            ad.backward(loss)
            grads = {name: leaves[name].grad for name in named}
            ad.adam_step(named, grads, adam)
            total_loss += float(loss.value) * len(chunk)
        train_loss = total_loss / len(train_idx)

        holdout_accuracy = math.nan
        if hold_idx:
            scores = _score_prepared([prepared[i] for i in hold_idx], params)
            predicted = scores >= 0.5
            actual = np.array([labels[i] for i in hold_idx])
            holdout_accuracy = float((predicted == actual).mean())
        history.append(EpochStats(epoch, train_loss, holdout_accuracy))

        if train_cfg.patience is not None and hold_idx:
            holdout_loss = _loss_prepared(
                [prepared[i] for i in hold_idx],
                [labels[i] for i in hold_idx],
                params,
                train_cfg.batch_size,
            )
            if holdout_loss < best_holdout_loss - 1e-12:
                best_holdout_loss = holdout_loss
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= train_cfg.patience:
                    break

    return TrainResult(
        params=params,
        history=history,
        stats=stats,
        train_indices=list(train_idx),
        holdout_indices=list(hold_idx),
    )


def _score_prepared(
    prepared: Sequence[tuple], params: ModelParams, chunk: int = 64
) -> np.ndarray:
    scores = []
    for start in range(0, len(prepared), chunk):
        batch = block_diagonal(prepared[start : start + chunk])
        scores.append(forward(batch, params)[:, 1])
    return np.concatenate(scores)


def _loss_prepared(
    prepared: Sequence[tuple],
    labels: Sequence[bool],
    params: ModelParams,
    chunk: int,
) -> float:
    total = 0.0
    for start in range(0, len(prepared), chunk):
        part = prepared[start : start + chunk]
        batch = block_diagonal(part, labels=labels[start : start + len(part)])
        loss, _, _ = batch_loss(batch, params)
        total += float(loss.value) * len(part)
    return total / len(prepared)


def score_examples(
    params: ModelParams,
    examples: Sequence[LabeledExample],
    stats: Optional[FeatureStats] = None,
    symmetrize: bool = True,
) -> np.ndarray:
    """Positive-class probability for every example."""
    if not examples:
        return np.zeros(0, dtype=np.float64)
    return _score_prepared(_prepare(examples, stats, symmetrize), params)


def classify_score(score: float, threshold: float = 0.5) -> bool:
    """Threshold rule; a score exactly at the threshold counts as positive."""
    return score >= threshold


def predict(
    params: ModelParams,
    example: LabeledExample,
    stats: Optional[FeatureStats] = None,
    threshold: float = 0.5,
    symmetrize: bool = True,
) -> tuple[float, bool]:
    """(probability the post is misleading, thresholded label)."""
    if example.features.shape[1] != params.input_dim:
        raise ValueError(
            f"feature dimension {example.features.shape[1]} does not match "
            f"model input dimension {params.input_dim}"
        )
    score = float(score_examples(params, [example], stats, symmetrize)[0])
    return score, classify_score(score, threshold)


def mean_loss(
    params: ModelParams,
    examples: Sequence[LabeledExample],
    stats: Optional[FeatureStats] = None,
    symmetrize: bool = True,
) -> float:
    """Mean cross-entropy of the model on labeled examples."""
    labels = _require_labels(examples)
    prepared = _prepare(examples, stats, symmetrize)
    return _loss_prepared(prepared, labels, params, chunk=64)


@dataclass
class EvalReport:
    """Confusion counts plus the derived metrics.

    ``flags`` names metrics whose denominator was 0 and were defined as 0.
    ``roc_points``/``auc`` are filled only when a ROC sweep ran.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float
    flags: tuple[str, ...] = ()
    roc_points: tuple[tuple[float, float], ...] = ()
    auc: Optional[float] = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def metrics_consistent(self, tol: float = 1e-12) -> bool:
        """Re-derive every metric from the stored counts and compare."""
        fresh = _report_from_counts(self.tp, self.fp, self.tn, self.fn)
        return all(
            abs(getattr(self, name) - getattr(fresh, name)) <= tol
            for name in ("accuracy", "precision", "recall", "f1", "fpr", "fnr")
        )

    def to_jsonable(self) -> dict:
        out = {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "flags": list(self.flags),
        }
        if self.auc is not None:
            out["auc"] = self.auc
        return out


def _safe_ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _report_from_counts(tp: int, fp: int, tn: int, fn: int) -> EvalReport:
    flags: list[str] = []
    precision = _safe_ratio(tp, tp + fp, "precision", flags)
    recall = _safe_ratio(tp, tp + fn, "recall", flags)
    if precision + recall == 0.0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    fpr = _safe_ratio(fp, fp + tn, "fpr", flags)
    fnr = _safe_ratio(fn, fn + tp, "fnr", flags)
    total = tp + fp + tn + fn
    return EvalReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        fpr=fpr,
        fnr=fnr,
        flags=tuple(flags),
    )


def compute_metrics(
    scores: Sequence[float], labels: Sequence[bool], threshold: float = 0.5
) -> EvalReport:
    """Confusion counts and derived metrics at one threshold (no ROC)."""
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    if len(scores) == 0:
        raise ValueError("compute_metrics requires at least one example")
    tp = fp = tn = fn = 0
    for score, label in zip(scores, labels):
        predicted = classify_score(float(score), threshold)
        if predicted and label:
            tp += 1
        elif predicted and not label:
            fp += 1
        elif not predicted and label:
            fn += 1
        else:
            tn += 1
    return _report_from_counts(tp, fp, tn, fn)


def roc_auc(
    scores: Sequence[float], labels: Sequence[bool]
) -> tuple[list[tuple[float, float]], float]:
    """ROC points over every distinct score plus the trapezoidal AUC.

    The AUC equals the probability that a random positive outscores a random
    negative (ties count one half); score groups with equal value collapse
    into single ROC points so the trapezoid handles ties exactly.
    """
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    positives = int(y.sum())
    negatives = int(y.size - positives)
    if positives == 0 or negatives == 0:
        raise ValueError(
            "ROC/AUC needs both classes present; got a single-class label set"
        )

    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_labels = y[order]
    points: list[tuple[float, float]] = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            if sorted_labels[j]:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / negatives, tp / positives))
        i = j
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))

    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return points, area


def evaluate_examples(
    params: ModelParams,
    examples: Sequence[LabeledExample],
    stats: Optional[FeatureStats] = None,
    threshold: float = 0.5,
    symmetrize: bool = True,
) -> EvalReport:
    """Full report on labeled examples: confusion metrics plus ROC/AUC."""
    labels = _require_labels(examples)
    scores = score_examples(params, examples, stats, symmetrize)
    report = compute_metrics(scores, labels, threshold)
    points, auc = roc_auc(scores, labels)
    return replace(report, roc_points=tuple(points), auc=auc)


@dataclass
class CrossValResult:
    reports: list[EvalReport]
    mean: dict[str, float]
    std: dict[str, float]


_SUMMARY_METRICS = ("accuracy", "precision", "recall", "f1", "fpr", "fnr", "auc")


def cross_validate(
    examples: Sequence[LabeledExample],
    k: int,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig = TrainConfig(),
    symmetrize: bool = True,
) -> CrossValResult:
    """Stratified k-fold cross-validation with fresh models per fold.

    Fold standardization statistics come from each fold's own training
    portion, so no information leaks from the evaluation fold.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    labels = _require_labels(examples)
    for cls in (False, True):
        count = sum(1 for y in labels if y == cls)
        if count < k:
            raise ValueError(
                f"class {cls} has {count} examples, fewer than k={k} folds"
            )

    rng = np.random.default_rng(train_cfg.seed)
    fold_of = [0] * len(examples)
    for cls in (False, True):
        members = [i for i, y in enumerate(labels) if y == cls]
        perm = rng.permutation(len(members))
        for pos, j in enumerate(perm):
            fold_of[members[j]] = pos % k

    reports: list[EvalReport] = []
    for fold in range(k):
        train_part = [examples[i] for i in range(len(examples)) if fold_of[i] != fold]
        test_part = [examples[i] for i in range(len(examples)) if fold_of[i] == fold]
        result = train(train_part, model_cfg, train_cfg, symmetrize=symmetrize)
        reports.append(
            evaluate_examples(
                result.params, test_part, result.stats, symmetrize=symmetrize
            )
        )

    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in _SUMMARY_METRICS:
        values = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        mean[name] = float(values.mean())
        std[name] = float(values.std())
    return CrossValResult(reports=reports, mean=mean, std=std)


@dataclass
class SweepPoint:
    window_seconds: int
    retained_comments: int
    report: EvalReport


def time_sweep(
    posts: Sequence[PostRecord],
    windows: Sequence[int],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    lex: Lexicons,
    pipeline: PipelineConfig = PipelineConfig(),
) -> list[SweepPoint]:
    """Retrain and evaluate with comments restricted to growing windows.

    The train/eval split of posts is fixed once, so every window sees the
    same held-out posts; graphs and features are rebuilt per window and the
    model retrains from the same seed.
    """
    if not windows:
        raise ValueError("windows must be non-empty")
    if list(windows) != sorted(windows):
        raise ValueError("windows must be ascending")
    post_labels = []
    for post in posts:
        if post.label is None:
            raise ValueError(f"post {post.post_id!r} has no label")
        post_labels.append(bool(post.label))

    rng = np.random.default_rng(train_cfg.seed)
    train_idx, eval_idx = _stratified_split(
        post_labels, train_cfg.train_fraction, rng
    )

    points: list[SweepPoint] = []
    for window in windows:
        filtered = [filter_by_window(post, window) for post in posts]
        retained = sum(len(post.comments) for post in filtered)
        examples = build_examples(filtered, lex, pipeline)
        result = train(
            [examples[i] for i in train_idx],
            model_cfg,
            train_cfg,
            symmetrize=pipeline.symmetrize,
        )
        report = evaluate_examples(
            result.params,
            [examples[i] for i in eval_idx],
            result.stats,
            symmetrize=pipeline.symmetrize,
        )
        points.append(
            SweepPoint(window_seconds=int(window), retained_comments=retained, report=report)
        )
    return points
