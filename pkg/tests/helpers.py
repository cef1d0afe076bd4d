"""Shared test utilities: post builders, random graphs, numeric oracles."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from fauxnet.comment_graph import (
    CommentGraph,
    CommentRecord,
    Platform,
    PostRecord,
    SparseAdjacency,
)

POST_TIME = 1_700_000_000


def comment(
    cid: str,
    parent: Optional[str] = None,
    text: str = "hello",
    likes: int = 0,
    offset: int = 60,
    dislikes: Optional[int] = None,
    retweets: Optional[int] = None,
) -> CommentRecord:
    return CommentRecord(
        comment_id=cid,
        author_id=f"author-{cid}",
        text=text,
        likes=likes,
        created_at=POST_TIME + offset,
        parent_id=parent,
        dislikes=dislikes,
        retweets=retweets,
    )


def post(
    comments: Sequence[CommentRecord] = (),
    platform: Platform = Platform.REDDIT,
    label: Optional[bool] = None,
    post_id: str = "post-1",
) -> PostRecord:
    return PostRecord(
        post_id=post_id,
        platform=platform,
        created_at=POST_TIME,
        comments=tuple(comments),
        label=label,
    )


def random_tree_graph(rng: np.random.Generator, nodes: int) -> CommentGraph:
    """Random reply tree rooted at the post node, as build_graph would make."""
    edges = []
    for v in range(1, nodes):
        parent = int(rng.integers(0, v))
        edges.append((parent, v))
    return CommentGraph(
        node_count=nodes,
        node_ids=tuple(f"n{v}" for v in range(nodes)),
        edges=tuple(edges),
        post_ref="n0",
    )


def permute_sparse(adj: SparseAdjacency, perm: np.ndarray) -> SparseAdjacency:
    """Relabel node i as perm[i]."""
    entries = [(int(perm[i]), int(perm[j]), v) for i, j, v in adj.entries()]
    return SparseAdjacency.from_entries(adj.dim, entries)


def random_params(cfg, rng: np.random.Generator):
    """Fully random weights (head included), for gradient and oracle tests.

    ``init_params`` zeroes the dense head, which would make every lower
    gradient vanish and every probability exactly 0.5; tests that probe the
    computation need a generic point in parameter space instead.
    """
    from fauxnet.model import ModelParams

    conv = []
    in_dim = cfg.input_dim
    for _ in range(cfg.pooling_stages + 1):
        for _ in range(cfg.conv_layers_per_stage):
            conv.append(rng.uniform(-0.5, 0.5, size=(in_dim, cfg.hidden_dim)))
            in_dim = cfg.hidden_dim
    assign = [
        rng.uniform(-0.5, 0.5, size=(cfg.hidden_dim, cfg.clusters))
        for _ in range(cfg.pooling_stages)
    ]
    return ModelParams(
        conv_weights=conv,
        assign_weights=assign,
        dense_weight=rng.uniform(-0.5, 0.5, size=(cfg.hidden_dim, 2)),
        dense_bias=rng.uniform(-0.5, 0.5, size=(1, 2)),
    )


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def finite_difference(
    evaluate: Callable[[], float], arrays: Sequence[np.ndarray], h: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient of ``evaluate`` w.r.t. arrays, in place."""
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat, flat_grad = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = evaluate()
            flat[i] = original - h
            lower = evaluate()
            flat[i] = original
            flat_grad[i] = (upper - lower) / (2.0 * h)
        grads.append(grad)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, 1e-6).

    The 1e-6 floor keeps near-zero gradients (whose finite differences sit
    at the roundoff floor ~1e-11) from blowing up the ratio.
    """
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))
