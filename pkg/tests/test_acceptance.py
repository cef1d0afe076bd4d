"""Acceptance gate: every release-blocking property, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one printed
PASS line per criterion. The original platform corpora are not available,
so the gate rests on independent oracles and a synthetic benchmark; see
the README's data-availability section.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from fauxnet.autodiff import Tensor, backward, cross_entropy_loss
from fauxnet.comment_graph import SparseAdjacency, adjacency
from fauxnet.dataio import SyntheticConfig, generate_synthetic
from fauxnet.model import (
    ModelConfig,
    batch_loss,
    block_diagonal,
    dense_forward_oracle,
    forward,
    init_params,
    normalize_adjacency,
)
from fauxnet.node_features import Lexicons
from fauxnet.training import (
    PipelineConfig,
    TrainConfig,
    build_examples,
    compute_metrics,
    evaluate_examples,
    mean_loss,
    roc_auc,
    standardize_features,
    time_sweep,
)

from helpers import (
    finite_difference,
    permute_sparse,
    random_params,
    random_tree_graph,
    relative_error,
)

REPO_ROOT = Path(__file__).resolve().parent.parent


def ok(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: PASS{suffix}")


def random_instance(rng, max_nodes=10):
    """Random (graph, features, params, config) with modest dimensions."""
    cfg = ModelConfig(
        input_dim=int(rng.integers(2, 7)),
        hidden_dim=int(rng.integers(2, 7)),
        clusters=int(rng.integers(1, 5)),
        conv_layers_per_stage=int(rng.integers(1, 3)),
        pooling_stages=int(rng.integers(1, 3)),
        seed=0,
    )
    nodes = int(rng.integers(2, max_nodes + 1))
    graph = random_tree_graph(rng, nodes)
    features = rng.standard_normal((nodes, cfg.input_dim))
    params = random_params(cfg, rng)
    return graph, features, params


def test_reported_numbers_are_not_reproducible_and_said_so():
    """The README must state that the original corpora are not distributed."""
    readme = (REPO_ROOT / "README.md").read_text("utf-8")
    assert "not distributed" in readme
    assert "Data availability" in readme
    # no labeled platform corpus ships with the package
    assert not list(REPO_ROOT.glob("src/**/*.jsonl"))
    ok(
        "published-numbers disclaimer",
        "original corpora not distributed; gate rests on oracles + synthetic benchmark",
    )


def test_gradient_oracle_on_100_random_graphs():
    started = time.time()
    rng = np.random.default_rng(20_240_001)
    checked = 0
    worst = 0.0
    for _ in range(100):
        graph, features, params = random_instance(rng)
        norm = normalize_adjacency(adjacency(graph))
        label = bool(rng.random() < 0.5)
        batch = block_diagonal([(norm, features)], labels=[label])

        loss, _, leaves = batch_loss(batch, params)
        backward(loss)
        names = list(params.as_dict())
        analytic = [leaves[n].grad.copy() for n in names]
        arrays = [params.as_dict()[n] for n in names]
        numeric = finite_difference(
            lambda: float(batch_loss(batch, params)[0].value), arrays, h=1e-5
        )
        for name, got, expected in zip(names, analytic, numeric):
            err = relative_error(got, expected)
            worst = max(worst, err)
            assert err < 1e-4, f"{name}: relative error {err}"
            checked += got.size
    elapsed = time.time() - started
    assert elapsed < 120.0
    ok("gradient oracle", f"{checked} parameter entries, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_dense_oracle_equivalence_on_200_instances():
    started = time.time()
    rng = np.random.default_rng(20_240_002)
    worst = 0.0
    remaining = 200
    while remaining > 0:
        group = min(int(rng.integers(1, 6)), remaining)
        # one parameter set per group; every graph in the batch shares it
        cfg_graphs = []
        graph, features, params = random_instance(rng)
        cfg_graphs.append((graph, features))
        width = features.shape[1]
        for _ in range(group - 1):
            nodes = int(rng.integers(2, 11))
            g = random_tree_graph(rng, nodes)
            cfg_graphs.append((g, rng.standard_normal((nodes, width))))
        batch = block_diagonal(
            [(normalize_adjacency(adjacency(g)), f) for g, f in cfg_graphs]
        )
        fast = forward(batch, params)
        for row, (g, f) in enumerate(cfg_graphs):
            slow = dense_forward_oracle(g, f, params)
            worst = max(worst, float(np.max(np.abs(fast[row] - slow[0]))))
        remaining -= group
    elapsed = time.time() - started
    assert worst < 1e-12
    assert elapsed < 60.0
    ok("dense-oracle equivalence", f"200 instances, worst |diff| {worst:.2e}, {elapsed:.1f}s")


def test_permutation_invariance_on_100_pairs():
    rng = np.random.default_rng(20_240_003)
    worst = 0.0
    for _ in range(100):
        graph, features, params = random_instance(rng)
        norm = normalize_adjacency(adjacency(graph))
        base = forward(block_diagonal([(norm, features)]), params)
        perm = rng.permutation(graph.node_count)
        permuted_features = np.empty_like(features)
        permuted_features[perm] = features
        permuted = forward(
            block_diagonal([(permute_sparse(norm, perm), permuted_features)]), params
        )
        worst = max(worst, float(np.max(np.abs(base - permuted))))
        assert worst < 1e-9
    ok("permutation invariance", f"100 pairs, worst |diff| {worst:.2e}")


def test_renormalization_3_node_path_example():
    path = SparseAdjacency.from_entries(
        3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]
    )
    got = normalize_adjacency(path).to_dense()

    # direct dense evaluation: add self loops, symmetric degree rescale
    dense = path.to_dense() + np.eye(3)
    degree = dense.sum(axis=1)
    expected = dense / np.sqrt(np.outer(degree, degree))
    assert np.max(np.abs(got - expected)) < 1e-12

    assert abs(got[0, 1] - 1.0 / math.sqrt(6.0)) < 1e-12
    assert abs(got[0, 1] - 0.408248) < 1e-6
    assert abs(got[1, 1] - 1.0 / 3.0) < 1e-12
    ok("renormalization path example", "off-diagonal 1/sqrt(6), center 1/3")


def test_loss_sanity():
    # hand case: probability one half, positive label
    loss = cross_entropy_loss(Tensor(np.array([[0.5]])), np.array([1.0]))
    assert abs(float(loss.value) - 0.693147) < 1e-6
    assert abs(float(loss.value) - math.log(2.0)) < 1e-9

    # untrained model on balanced synthetic data
    posts = generate_synthetic(SyntheticConfig(n_posts=200, seed=31))
    pipe = PipelineConfig()
    examples = build_examples(posts, Lexicons.default(), pipe)
    _, _, stats = standardize_features([ex.features for ex in examples])
    params = init_params(ModelConfig(input_dim=pipe.input_dim, seed=31))
    untrained = mean_loss(params, examples, stats)
    assert abs(untrained - math.log(2.0)) < 0.15
    ok("loss sanity", f"hand case exact, untrained loss {untrained:.6f}")


def test_synthetic_end_to_end_benchmark():
    started = time.time()
    posts = generate_synthetic(SyntheticConfig(n_posts=500, class_balance=0.5, seed=7))
    pipe = PipelineConfig()
    examples = build_examples(posts, Lexicons.default(), pipe)
    model_cfg = ModelConfig(input_dim=pipe.input_dim, seed=7)
    train_cfg = TrainConfig(epochs=50, batch_size=32, seed=7)
    from fauxnet.training import train as run_train

    result = run_train(examples, model_cfg, train_cfg)
    holdout = [examples[i] for i in result.holdout_indices]
    assert len(holdout) == 100 and len(result.train_indices) == 400
    report = evaluate_examples(result.params, holdout, result.stats)
    elapsed = time.time() - started
    assert report.accuracy >= 0.95
    assert report.auc >= 0.98
    assert elapsed < 300.0
    ok(
        "synthetic benchmark",
        f"holdout accuracy {report.accuracy:.3f}, AUC {report.auc:.3f}, {elapsed:.0f}s",
    )


def test_metric_arithmetic():
    # frozen confusion example: 3 TP, 1 FP, 4 TN, 2 FN
    scores = [0.9] * 3 + [0.9] + [0.1] * 4 + [0.1] * 2
    labels = [True] * 3 + [False] + [False] * 4 + [True] * 2
    report = compute_metrics(scores, labels)
    assert (report.tp, report.fp, report.tn, report.fn) == (3, 1, 4, 2)
    assert report.precision == 0.75
    assert report.recall == 0.6
    assert abs(report.f1 - 0.666667) < 1e-6
    assert report.accuracy == 0.7

    # trapezoidal AUC against the pairwise ranking statistic
    rng = np.random.default_rng(20_240_004)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 40))
        scores = np.round(rng.random(n), 2)
        labels = rng.random(n) < rng.uniform(0.2, 0.8)
        if labels.all() or not labels.any():
            labels[int(rng.integers(0, n))] = not labels[int(rng.integers(0, n))]
        if labels.all() or not labels.any():
            continue
        _, auc = roc_auc(scores, labels)
        positives = scores[labels]
        negatives = scores[~labels]
        wins = 0.0
        for p in positives:
            wins += float(np.sum(p > negatives)) + 0.5 * float(np.sum(p == negatives))
        pairwise = wins / (len(positives) * len(negatives))
        worst = max(worst, abs(auc - pairwise))
        assert worst < 1e-12
    ok("metric arithmetic", f"confusion exact, 1000 AUC sets, worst |diff| {worst:.2e}")


def test_time_window_trend():
    posts = generate_synthetic(SyntheticConfig(n_posts=240, class_balance=0.5, seed=13))
    pipe = PipelineConfig()
    model_cfg = ModelConfig(input_dim=pipe.input_dim, seed=13)
    train_cfg = TrainConfig(epochs=20, batch_size=32, seed=13)
    windows = [3600, 86_400, 432_000]  # 1 hour, 1 day, 5 days
    points = time_sweep(posts, windows, model_cfg, train_cfg, Lexicons.default(), pipe)

    retained = [p.retained_comments for p in points]
    assert retained == sorted(retained)
    accuracies = [p.report.accuracy for p in points]
    assert accuracies[-1] >= accuracies[0] - 0.05
    ok(
        "time-window trend",
        "accuracy " + " -> ".join(f"{a:.3f}" for a in accuracies)
        + f", retained {retained}",
    )


def test_bitwise_reproducibility_of_cli_runs(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "model": {"hidden_dim": 16, "clusters": 4},
                "train": {"epochs": 5, "batch_size": 16},
                "features": {"hash_buckets": 16},
            }
        )
    )

    def run(tag: str) -> dict[str, bytes]:
        base = tmp_path / tag
        base.mkdir()
        data = base / "data.jsonl"
        model = base / "model.json"
        history = base / "history.csv"
        report = base / "report.json"
        roc = base / "roc.csv"
        commands = [
            ["synth", "--out", str(data), "--n-posts", "80", "--seed", "21", "--quiet"],
            [
                "train", str(data), "--model-out", str(model), "--history-out",
                str(history), "--config", str(config), "--seed", "21", "--quiet",
            ],
            [
                "evaluate", str(data), "--model", str(model), "--report-out",
                str(report), "--roc-out", str(roc), "--seed", "21", "--quiet",
            ],
        ]
        for command in commands:
            proc = subprocess.run(
                [sys.executable, "-m", "fauxnet", *command],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
        return {
            name.name: name.read_bytes() for name in (data, model, history, report, roc)
        }

    first = run("run1")
    second = run("run2")
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], f"{name} differs between identical runs"
    ok("bitwise reproducibility", f"{len(first)} files byte-identical across runs")
