"""Reply networks of social-media posts.

A post and the comments it received form a small directed graph: node 0
stands for the post itself, and every comment node carries an edge from the
node it replied to. These graphs, together with a sparse binary adjacency,
are the only structural input the downstream classifier sees; the post's own
image and text are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np

__all__ = [
    "Platform",
    "CommentRecord",
    "PostRecord",
    "CommentGraph",
    "SparseAdjacency",
    "build_graph",
    "adjacency",
    "filter_by_window",
]


class Platform(str, Enum):
    REDDIT = "reddit"
    TWITTER = "twitter"


@dataclass(frozen=True)
class CommentRecord:
    """One raw comment as ingested, before any graph construction.

    ``parent_id`` is absent for comments made directly on the post. Dislike
    and retweet counts exist only on some platforms and stay ``None`` when the
    source did not provide them.
    """

    comment_id: str
    author_id: str
    text: str
    likes: int
    created_at: int
    parent_id: Optional[str] = None
    dislikes: Optional[int] = None
    retweets: Optional[int] = None

    def __post_init__(self) -> None:
        if self.likes < 0:
            raise ValueError(f"comment {self.comment_id!r}: likes must be >= 0")
        if self.dislikes is not None and self.dislikes < 0:
            raise ValueError(f"comment {self.comment_id!r}: dislikes must be >= 0")
        if self.retweets is not None and self.retweets < 0:
            raise ValueError(f"comment {self.comment_id!r}: retweets must be >= 0")


@dataclass(frozen=True)
class PostRecord:
    """A post plus its ordered comment thread and optional ground truth.

    ``label`` is True for posts judged misleading (image and text together
    convey a false impression), False for benign posts, None when unknown.
    """

    post_id: str
    platform: Platform
    created_at: int
    comments: tuple[CommentRecord, ...] = ()
    label: Optional[bool] = None


@dataclass(frozen=True)
class CommentGraph:
    """Directed reply graph of one post.

    Node 0 is the post node; nodes 1..V-1 are the comments in input order.
    An edge (i, j) means node j replies to node i, so edges always point from
    parent to child.
    """

    node_count: int
    node_ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    post_ref: str


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Square sparse matrix in canonical coordinate form.

    Entries are sorted row-major with no duplicates and strictly positive
    values. ``rows``/``cols`` are int64 arrays, ``vals`` float64.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @staticmethod
    def from_entries(
        dim: int, entries: Iterable[tuple[int, int, float]]
    ) -> "SparseAdjacency":
        items = list(entries)
        rows = np.array([e[0] for e in items], dtype=np.int64)
        cols = np.array([e[1] for e in items], dtype=np.int64)
        vals = np.array([e[2] for e in items], dtype=np.float64)
        return SparseAdjacency._canonical(dim, rows, cols, vals)

    @staticmethod
    def _canonical(
        dim: int,
        rows: np.ndarray,
        cols: np.ndarray,
        vals: np.ndarray,
        coalesce: bool = False,
    ) -> "SparseAdjacency":
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if rows.size:
            if rows.min() < 0 or rows.max() >= dim or cols.min() < 0 or cols.max() >= dim:
                raise ValueError(f"entry index out of range for dim {dim}")
            if np.any(vals <= 0.0):
                raise ValueError("entry values must be > 0")
            order = np.lexsort((cols, rows))
            rows, cols, vals = rows[order], cols[order], vals[order]
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                if not coalesce:
                    k = int(np.flatnonzero(dup)[0])
                    raise ValueError(
                        f"duplicate entry at ({rows[k]}, {cols[k]})"
                    )
                keep = np.concatenate(([True], ~dup))
                group = np.cumsum(keep) - 1
                merged = np.zeros(int(group[-1]) + 1, dtype=np.float64)
                np.add.at(merged, group, vals)
                rows, cols, vals = rows[keep], cols[keep], merged
        return SparseAdjacency(dim=dim, rows=rows, cols=cols, vals=vals)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for i, j, v in zip(self.rows, self.cols, self.vals):
            yield int(i), int(j), float(v)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.dim, self.dim), dtype=np.float64)
        dense[self.rows, self.cols] = self.vals
        return dense

    def is_symmetric(self) -> bool:
        if self.nnz == 0:
            return True
        order = np.lexsort((self.rows, self.cols))
        return (
            np.array_equal(self.cols[order], self.rows)
            and np.array_equal(self.rows[order], self.cols)
            and np.array_equal(self.vals[order], self.vals)
        )


def build_graph(post: PostRecord) -> CommentGraph:
    """Build the reply graph of one post.

    Comments are numbered 1..V-1 in input order; each contributes exactly one
    edge from its parent. Replies whose parent is missing from the post
    (deleted comments), self-references, and reply cycles from malformed data
    are all reattached to the post node, so every node stays reachable from
    node 0 and the build never fails on messy threads.
    """
    index: dict[str, int] = {}
    for pos, comment in enumerate(post.comments, start=1):
        if comment.comment_id in index:
            raise ValueError(
                f"duplicate comment_id {comment.comment_id!r} in post {post.post_id!r}"
            )
        index[comment.comment_id] = pos

    node_count = len(post.comments) + 1
    parent = [0] * node_count
    for pos, comment in enumerate(post.comments, start=1):
        if comment.parent_id is None or comment.parent_id == comment.comment_id:
            parent[pos] = 0
        else:
            parent[pos] = index.get(comment.parent_id, 0)

    _reattach_unreachable(parent)

    edges = tuple((parent[v], v) for v in range(1, node_count))
    node_ids = (post.post_id,) + tuple(c.comment_id for c in post.comments)
    return CommentGraph(
        node_count=node_count, node_ids=node_ids, edges=edges, post_ref=post.post_id
    )


def _reattach_unreachable(parent: list[int]) -> None:
    """Repoint reply cycles at the post node, in place.

    Valid threads are trees rooted at node 0; a cycle can only appear when
    parent pointers are corrupt. The lowest-index node of each unreachable
    component becomes a direct reply to the post.
    """
    n = len(parent)
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        children[parent[v]].append(v)

    seen = [False] * n
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for child in children[node]:
            if not seen[child]:
                seen[child] = True
                stack.append(child)

    for v in range(1, n):
        if not seen[v]:
            parent[v] = 0
            seen[v] = True
            stack = [v]
            while stack:
                node = stack.pop()
                for child in children[node]:
                    if not seen[child]:
                        seen[child] = True
                        stack.append(child)


def adjacency(graph: CommentGraph, symmetrize: bool = True) -> SparseAdjacency:
    """Binary adjacency of the reply graph.

    With ``symmetrize`` (the default) each reply contributes entries in both
    directions, which the degree-normalized propagation downstream assumes.
    ``symmetrize=False`` keeps the raw reply direction for ablation. The
    diagonal stays empty; self-loops are added by the normalization step.
    """
    pairs = set(graph.edges)
    if symmetrize:
        pairs |= {(j, i) for (i, j) in pairs}
    entries = [(i, j, 1.0) for (i, j) in sorted(pairs)]
    return SparseAdjacency.from_entries(graph.node_count, entries)


def filter_by_window(post: PostRecord, window_seconds: int) -> PostRecord:
    """Copy of ``post`` keeping only comments within the time window.

    A comment survives when its timestamp is at most ``window_seconds`` after
    the post (timestamps before the post, a platform clock-skew artifact, are
    clamped to the post time). A surviving comment whose parent was dropped
    becomes a direct reply to the post.
    """
    if window_seconds < 0:
        raise ValueError(f"window_seconds must be >= 0, got {window_seconds}")
    cutoff = post.created_at + window_seconds
    kept = [
        c for c in post.comments if max(c.created_at, post.created_at) <= cutoff
    ]
    original_ids = {c.comment_id for c in post.comments}
    kept_ids = {c.comment_id for c in kept}
    out = []
    for c in kept:
        if c.parent_id is not None and c.parent_id in original_ids and c.parent_id not in kept_ids:
            out.append(replace(c, parent_id=None))
        else:
            out.append(c)
    return replace(post, comments=tuple(out))
