"""Graph-convolutional classifier over batched comment graphs.

The network is conv stage(s) -> soft cluster pooling -> conv stage(s) ->
per-graph mean readout -> dense softmax head. Batches pack several graphs
into one block-diagonal sparse matrix so a whole mini-batch is one pass;
pooling is computed per diagonal block so clusters never mix graphs.

Propagation uses the self-loop renormalization
``D^(-1/2) (I + A) D^(-1/2)``: every node gets degree >= 1 from its own
loop, which keeps the normalization well defined on any input. Pooling
contracts both the propagation matrix (``C^T A C``) and the node
embeddings (``C^T H``) through a learned soft assignment ``C``.

``dense_forward_oracle`` re-derives the whole forward pass for a single
graph with naive Python loops: no sparse code, no tape. It exists so the
fast path can be checked against an independent computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .comment_graph import CommentGraph, SparseAdjacency

__all__ = [
    "ModelConfig",
    "ModelParams",
    "BatchedGraphs",
    "init_params",
    "normalize_adjacency",
    "block_diagonal",
    "graph_conv",
    "cluster_pool",
    "forward",
    "batch_loss",
    "dense_forward_oracle",
]

Propagation = Union[SparseAdjacency, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs.

    The default instantiation is the smallest faithful pipeline: one
    convolution before pooling, 16 clusters, one convolution after, mean
    readout, two-way softmax head.
    """

    input_dim: int
    hidden_dim: int = 64
    clusters: int = 16
    conv_layers_per_stage: int = 1
    pooling_stages: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("input_dim", "hidden_dim", "clusters", "conv_layers_per_stage", "pooling_stages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class ModelParams:
    """All trainable weights.

    ``conv_weights`` holds every convolution layer in forward order
    (``pooling_stages + 1`` stages of ``conv_layers_per_stage`` each);
    ``assign_weights`` holds one cluster-assignment matrix per pooling
    stage. The dense head maps the readout to two logits.
    """

    conv_weights: list[np.ndarray]
    assign_weights: list[np.ndarray]
    dense_weight: np.ndarray
    dense_bias: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for i, w in enumerate(self.conv_weights):
            named[f"conv{i}"] = w
        for i, w in enumerate(self.assign_weights):
            named[f"assign{i}"] = w
        named["dense_weight"] = self.dense_weight
        named["dense_bias"] = self.dense_bias
        return named

    @property
    def input_dim(self) -> int:
        return int(self.conv_weights[0].shape[0])

    def architecture(self) -> tuple[int, int, int]:
        """(pooling stages, conv layers per stage, clusters) from shapes."""
        stages = len(self.assign_weights)
        if stages < 1 or len(self.conv_weights) % (stages + 1) != 0:
            raise ValueError(
                f"inconsistent parameter set: {len(self.conv_weights)} conv layers, "
                f"{stages} pooling stages"
            )
        per_stage = len(self.conv_weights) // (stages + 1)
        clusters = int(self.assign_weights[0].shape[1])
        return stages, per_stage, clusters


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig) -> ModelParams:
    """Seeded initialization: symmetric-uniform graph weights, zero head.

    The dense head starts at zero so the untrained network outputs the
    uniform distribution exactly (initial loss ln 2 on any data); it picks
    up gradient on the first step and the layers below on the next.
    """
    rng = np.random.default_rng(cfg.seed)
    conv_weights: list[np.ndarray] = []
    in_dim = cfg.input_dim
    for _ in range(cfg.pooling_stages + 1):
        for _ in range(cfg.conv_layers_per_stage):
            conv_weights.append(_glorot(rng, in_dim, cfg.hidden_dim))
            in_dim = cfg.hidden_dim
    assign_weights = [
        _glorot(rng, cfg.hidden_dim, cfg.clusters) for _ in range(cfg.pooling_stages)
    ]
    return ModelParams(
        conv_weights=conv_weights,
        assign_weights=assign_weights,
        dense_weight=np.zeros((cfg.hidden_dim, 2), dtype=np.float64),
        dense_bias=np.zeros((1, 2), dtype=np.float64),
    )


def normalize_adjacency(
    adj: SparseAdjacency, allow_asymmetric: bool = False
) -> SparseAdjacency:
    """Self-loop renormalization ``D^(-1/2) (I + A) D^(-1/2)``.

    Degrees are the row sums of ``I + A``; self-loops guarantee every degree
    is at least 1, so the rescaling never divides by zero. Asymmetric input
    is rejected unless ``allow_asymmetric`` is set (directed ablation mode,
    same formula).
    """
    if not allow_asymmetric and not adj.is_symmetric():
        raise ValueError("adjacency is not symmetric; pass allow_asymmetric=True for directed mode")
    loop_idx = np.arange(adj.dim, dtype=np.int64)
    rows = np.concatenate([adj.rows, loop_idx])
    cols = np.concatenate([adj.cols, loop_idx])
    vals = np.concatenate([adj.vals, np.ones(adj.dim, dtype=np.float64)])
    with_loops = SparseAdjacency._canonical(adj.dim, rows, cols, vals, coalesce=True)
    degree = np.zeros(adj.dim, dtype=np.float64)
    np.add.at(degree, with_loops.rows, with_loops.vals)
    scaled = with_loops.vals / np.sqrt(degree[with_loops.rows] * degree[with_loops.cols])
    return SparseAdjacency(
        dim=adj.dim, rows=with_loops.rows, cols=with_loops.cols, vals=scaled
    )


@dataclass
class BatchedGraphs:
    """Several graphs packed into one block-diagonal problem."""

    a_diag: SparseAdjacency
    node_features: np.ndarray
    graph_offsets: list[tuple[int, int]]
    labels: Optional[np.ndarray] = None

    @property
    def graph_count(self) -> int:
        return len(self.graph_offsets)


def block_diagonal(
    graphs: Sequence[tuple[SparseAdjacency, np.ndarray]],
    labels: Optional[Sequence[bool]] = None,
) -> BatchedGraphs:
    """Stack adjacencies as diagonal blocks and features as stacked rows."""
    if not graphs:
        raise ValueError("block_diagonal requires at least one graph")
    widths = {feats.shape[1] for _, feats in graphs}
    if len(widths) != 1:
        raise ValueError(f"feature dimension mismatch across graphs: {sorted(widths)}")
    if labels is not None and len(labels) != len(graphs):
        raise ValueError(f"{len(labels)} labels for {len(graphs)} graphs")

    offsets: list[tuple[int, int]] = []
    rows_parts, cols_parts, vals_parts = [], [], []
    start = 0
    for adj, feats in graphs:
        if adj.dim != feats.shape[0]:
            raise ValueError(
                f"adjacency dim {adj.dim} does not match {feats.shape[0]} feature rows"
            )
        offsets.append((start, adj.dim))
        rows_parts.append(adj.rows + start)
        cols_parts.append(adj.cols + start)
        vals_parts.append(adj.vals)
        start += adj.dim

    a_diag = SparseAdjacency(
        dim=start,
        rows=np.concatenate(rows_parts),
        cols=np.concatenate(cols_parts),
        vals=np.concatenate(vals_parts),
    )
    features = np.concatenate([feats for _, feats in graphs], axis=0)
    packed_labels = (
        np.asarray(labels, dtype=np.float64) if labels is not None else None
    )
    return BatchedGraphs(
        a_diag=a_diag,
        node_features=features,
        graph_offsets=offsets,
        labels=packed_labels,
    )


def graph_conv(prop: Propagation, h: Tensor, w: Tensor) -> Tensor:
    """One convolution layer: relu(prop @ h @ w).

    ``prop`` is the (constant) normalized sparse matrix before pooling and a
    tape tensor afterwards, when the pooled propagation matrix itself
    depends on the assignment.
    """
    mixed = ad.spmm(prop, h) if isinstance(prop, SparseAdjacency) else ad.matmul(prop, h)
    return ad.relu(ad.matmul(mixed, w))


def cluster_pool(
    prop: Propagation,
    h: Tensor,
    w_assign: Tensor,
    graph_offsets: Sequence[tuple[int, int]],
) -> tuple[Tensor, Tensor, Tensor]:
    """Soft-cluster coarsening of every graph block.

    The assignment ``C = row_softmax(conv(prop, h, w_assign))`` is computed
    on the whole batch at once (the block-diagonal propagation cannot leak
    across blocks and softmax is row-local), then each block is contracted
    separately: pooled propagation ``C^T prop C`` and pooled embeddings
    ``C^T h``, re-embedded block-diagonally. Every graph ends up with
    exactly ``clusters`` nodes.

    Returns (pooled propagation, pooled embeddings, assignment).
    """
    expected_start = 0
    for start, length in graph_offsets:
        if start != expected_start or length < 1:
            raise ValueError("graph_offsets do not partition the batch rows")
        expected_start += length
    if expected_start != h.value.shape[0]:
        raise ValueError(
            f"graph_offsets cover {expected_start} rows, batch has {h.value.shape[0]}"
        )

    assign = ad.row_softmax(graph_conv(prop, h, w_assign))
    mixed_assign = (
        ad.spmm(prop, assign)
        if isinstance(prop, SparseAdjacency)
        else ad.matmul(prop, assign)
    )

    pooled_adj_blocks: list[Tensor] = []
    pooled_feat_blocks: list[Tensor] = []
    for start, length in graph_offsets:
        block_assign_t = ad.transpose(ad.slice_rows(assign, start, start + length))
        pooled_adj_blocks.append(
            ad.matmul(block_assign_t, ad.slice_rows(mixed_assign, start, start + length))
        )
        pooled_feat_blocks.append(
            ad.matmul(block_assign_t, ad.slice_rows(h, start, start + length))
        )
    return ad.block_diag(pooled_adj_blocks), ad.concat_rows(pooled_feat_blocks), assign


def _forward_tensor(
    batch: BatchedGraphs, leaves: dict[str, Tensor], params: ModelParams
) -> Tensor:
    stages, per_stage, clusters = params.architecture()
    prop: Propagation = batch.a_diag
    h: Tensor = Tensor(batch.node_features)
    offsets = list(batch.graph_offsets)

    layer = 0
    for stage in range(stages):
        for _ in range(per_stage):
            h = graph_conv(prop, h, leaves[f"conv{layer}"])
            layer += 1
        prop, h, _ = cluster_pool(prop, h, leaves[f"assign{stage}"], offsets)
        offsets = [(g * clusters, clusters) for g in range(len(offsets))]
    for _ in range(per_stage):
        h = graph_conv(prop, h, leaves[f"conv{layer}"])
        layer += 1

    readouts = [
        ad.mean_rows(ad.slice_rows(h, start, start + length))
        for start, length in offsets
    ]
    pooled = ad.concat_rows(readouts)
    logits = ad.add_bias(ad.matmul(pooled, leaves["dense_weight"]), leaves["dense_bias"])
    return ad.row_softmax(logits)


def _leaves(params: ModelParams) -> dict[str, Tensor]:
    return {name: Tensor(value) for name, value in params.as_dict().items()}


def forward(batch: BatchedGraphs, params: ModelParams) -> np.ndarray:
    """Class probabilities for every graph in the batch (M x 2).

    Column 1 is the probability that the post is misleading.
    """
    if batch.node_features.shape[1] != params.input_dim:
        raise ValueError(
            f"feature dimension {batch.node_features.shape[1]} does not match "
            f"model input dimension {params.input_dim}"
        )
    return _forward_tensor(batch, _leaves(params), params).value


def batch_loss(
    batch: BatchedGraphs, params: ModelParams
) -> tuple[Tensor, np.ndarray, dict[str, Tensor]]:
    """Cross-entropy of the batch plus the leaf tensors holding gradients.

    Returns (loss tensor, probability matrix, parameter leaves); call
    ``autodiff.backward`` on the loss, then read ``leaves[name].grad``.
    """
    if batch.labels is None:
        raise ValueError("batch has no labels; build it with labels to compute a loss")
    if batch.node_features.shape[1] != params.input_dim:
        raise ValueError(
            f"feature dimension {batch.node_features.shape[1]} does not match "
            f"model input dimension {params.input_dim}"
        )
    leaves = _leaves(params)
    probs = _forward_tensor(batch, leaves, params)
    positive = ad.slice_cols(probs, 1, 2)
    loss = ad.cross_entropy_loss(positive, batch.labels)
    return loss, probs.value, leaves


# --- independent dense re-computation -------------------------------------


def _mm(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            aik = a[i][k]
            if aik == 0.0:
                continue
            row_b = b[k]
            row_o = out[i]
            for j in range(cols):
                row_o[j] += aik * row_b[j]
    return out


def _transpose_list(a: list[list[float]]) -> list[list[float]]:
    return [list(col) for col in zip(*a)]


def _relu_list(a: list[list[float]]) -> list[list[float]]:
    return [[x if x > 0.0 else 0.0 for x in row] for row in a]


def _softmax_rows_list(a: list[list[float]]) -> list[list[float]]:
    out = []
    for row in a:
        peak = max(row)
        exps = [math.exp(x - peak) for x in row]
        total = sum(exps)
        out.append([e / total for e in exps])
    return out


def dense_forward_oracle(
    graph: CommentGraph,
    features: np.ndarray,
    params: ModelParams,
    symmetrize: bool = True,
) -> np.ndarray:
    """Forward pass for one graph, recomputed with naive dense loops.

    Builds the dense normalized propagation matrix from the raw edges and
    walks the same conv / pool / conv / readout / head pipeline using plain
    Python arithmetic. Shares nothing with the sparse or tape code paths.
    """
    v = graph.node_count
    adj = [[0.0] * v for _ in range(v)]
    for i, j in graph.edges:
        adj[i][j] = 1.0
        if symmetrize:
            adj[j][i] = 1.0
    for i in range(v):
        adj[i][i] += 1.0
    degree = [sum(row) for row in adj]
    prop = [
        [adj[i][j] / math.sqrt(degree[i] * degree[j]) for j in range(v)]
        for i in range(v)
    ]

    h = [[float(x) for x in row] for row in np.asarray(features)]
    stages, per_stage, _ = params.architecture()
    weights = [w.tolist() for w in params.conv_weights]
    assigns = [w.tolist() for w in params.assign_weights]

    layer = 0
    for stage in range(stages):
        for _ in range(per_stage):
            h = _relu_list(_mm(_mm(prop, h), weights[layer]))
            layer += 1
        assign = _softmax_rows_list(_relu_list(_mm(_mm(prop, h), assigns[stage])))
        assign_t = _transpose_list(assign)
        prop = _mm(assign_t, _mm(prop, assign))
        h = _mm(assign_t, h)
    for _ in range(per_stage):
        h = _relu_list(_mm(_mm(prop, h), weights[layer]))
        layer += 1

    cols = len(h[0])
    readout = [[sum(row[j] for row in h) / len(h) for j in range(cols)]]
    logits = _mm(readout, params.dense_weight.tolist())
    bias = params.dense_bias.tolist()[0]
    logits = [[logits[0][0] + bias[0], logits[0][1] + bias[1]]]
    return np.array(_softmax_rows_list(logits), dtype=np.float64)
