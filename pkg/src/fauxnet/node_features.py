"""Per-comment feature extraction.

Each comment becomes a fixed-length float64 vector: a hashed bag-of-words
over its text, a lexicon sentiment score, an endorsement value, and six
shallow metadata counts, followed by an indicator column that is 1 only on
the post node. The post node carries no content features at all; the
classifier is content-free by construction.

Column layout for ``hash_buckets = B``::

    [0, B)      signed hashed bag-of-words, L2-normalized
    B           sentiment in [-1, 1]
    B + 1       endorsement (sign-log scaled by default)
    B + 2 .. B + 7   metadata counts (words, verity terms, image terms,
                     question marks, exclamation marks, URLs)
    B + 8       post-node indicator
"""

from __future__ import annotations

import hashlib
import math
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .comment_graph import CommentGraph, CommentRecord, Platform, PostRecord

__all__ = [
    "Lexicons",
    "tokenize",
    "is_url_token",
    "linguistic_vector",
    "sentiment_score",
    "endorsement_value",
    "metadata_features",
    "assemble_feature_matrix",
    "feature_dim",
    "source_flag_column",
    "METADATA_DIM",
]

METADATA_DIM = 6
_URL_PREFIXES = ("http://", "https://")
_HASH_PERSON = b"bow-hash-v1"


def feature_dim(hash_buckets: int) -> int:
    """Total feature-vector length for a given bag-of-words width."""
    return hash_buckets + 1 + 1 + METADATA_DIM + 1


def source_flag_column(hash_buckets: int) -> int:
    return feature_dim(hash_buckets) - 1


@dataclass(frozen=True)
class Lexicons:
    """Term lists used by the lexical features; immutable and shareable."""

    verity_terms: frozenset[str]
    image_terms: frozenset[str]
    sentiment: Mapping[str, float]

    def __post_init__(self) -> None:
        for name, terms in (
            ("verity_terms", self.verity_terms),
            ("image_terms", self.image_terms),
            ("sentiment", self.sentiment),
        ):
            if not terms:
                raise ValueError(f"lexicon {name} must be non-empty")
            if any(t != t.lower() for t in terms):
                raise ValueError(f"lexicon {name} entries must be lowercase")
        for token, polarity in self.sentiment.items():
            if not -1.0 <= polarity <= 1.0:
                raise ValueError(f"sentiment polarity for {token!r} outside [-1, 1]")

    @staticmethod
    def load(verity_path: Path, image_path: Path, sentiment_path: Path) -> "Lexicons":
        return Lexicons(
            verity_terms=frozenset(_read_terms(Path(verity_path).read_text("utf-8"))),
            image_terms=frozenset(_read_terms(Path(image_path).read_text("utf-8"))),
            sentiment=_read_sentiment(Path(sentiment_path).read_text("utf-8")),
        )

    @staticmethod
    def default() -> "Lexicons":
        global _DEFAULT
        if _DEFAULT is None:
            base = resources.files(__package__) / "lexicons"
            _DEFAULT = Lexicons(
                verity_terms=frozenset(
                    _read_terms((base / "verity_terms.txt").read_text("utf-8"))
                ),
                image_terms=frozenset(
                    _read_terms((base / "image_terms.txt").read_text("utf-8"))
                ),
                sentiment=_read_sentiment((base / "sentiment.txt").read_text("utf-8")),
            )
        return _DEFAULT


_DEFAULT: Lexicons | None = None


def _read_terms(text: str) -> list[str]:
    terms = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line.lower())
    return terms


def _read_sentiment(text: str) -> dict[str, float]:
    table: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        token, _, value = line.partition("\t")
        table[token.strip().lower()] = float(value)
    return table


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens with URLs kept intact.

    Any ``http(s)://`` substring starts a URL token that runs to the next
    whitespace. Other tokens get trailing punctuation stripped; tokens that
    were punctuation only are dropped. Punctuation itself is not lost: the
    metadata features count it on the raw string.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        rest = chunk
        while rest:
            positions = [rest.find(p) for p in _URL_PREFIXES]
            positions = [p for p in positions if p >= 0]
            if not positions:
                word = rest.rstrip(string.punctuation)
                if word:
                    tokens.append(word)
                break
            cut = min(positions)
            if cut == 0:
                tokens.append(rest)
                break
            word = rest[:cut].rstrip(string.punctuation)
            if word:
                tokens.append(word)
            rest = rest[cut:]
    return tokens


def is_url_token(token: str) -> bool:
    return token.startswith(_URL_PREFIXES)


def linguistic_vector(text: str, buckets: int = 64) -> np.ndarray:
    """Signed hashed bag-of-words over the non-URL tokens.

    Buckets come from a fixed 64-bit hash (bucket = hash mod ``buckets``,
    sign from the top hash bit), so the encoding is deterministic across
    processes. The vector is L2-normalized unless it is all zero.
    """
    if buckets < 1:
        raise ValueError(f"buckets must be >= 1, got {buckets}")
    vec = np.zeros(buckets, dtype=np.float64)
    for token in tokenize(text):
        if is_url_token(token):
            continue
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, person=_HASH_PERSON
        ).digest()
        h = int.from_bytes(digest, "big")
        vec[h % buckets] += 1.0 if (h >> 63) & 1 else -1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def sentiment_score(text: str, lex: Lexicons) -> float:
    """Mean lexicon polarity of the comment's tokens, clamped to [-1, 1].

    0.0 when no token appears in the sentiment lexicon.
    """
    values = [lex.sentiment[t] for t in tokenize(text) if t in lex.sentiment]
    if not values:
        return 0.0
    return min(1.0, max(-1.0, sum(values) / len(values)))


def endorsement_value(
    comment: CommentRecord, platform: Platform, scaled: bool = True
) -> float:
    """Aggregated audience approval of one comment.

    Raw value is likes minus dislikes on Reddit and likes plus retweets on
    Twitter; missing counts are treated as 0. By default the raw count is
    compressed to sign(raw) * ln(1 + |raw|), since hub comments can sit
    orders of magnitude above the median; ``scaled=False`` gives the raw
    count.
    """
    if platform is Platform.REDDIT:
        raw = comment.likes - (comment.dislikes or 0)
    else:
        raw = comment.likes + (comment.retweets or 0)
    if not scaled:
        return float(raw)
    if raw == 0:
        return 0.0
    return math.copysign(math.log1p(abs(raw)), raw)


def metadata_features(text: str, lex: Lexicons) -> np.ndarray:
    """Shallow per-comment counts, in fixed order.

    [word count (URL tokens included), verity terms, image terms, question
    marks, exclamation marks, URLs]. Term membership is tested on non-URL
    tokens; punctuation is counted over the raw string.
    """
    tokens = tokenize(text)
    words = [t for t in tokens if not is_url_token(t)]
    return np.array(
        [
            len(tokens),
            sum(t in lex.verity_terms for t in words),
            sum(t in lex.image_terms for t in words),
            text.count("?"),
            text.count("!"),
            len(tokens) - len(words),
        ],
        dtype=np.float64,
    )


def assemble_feature_matrix(
    graph: CommentGraph,
    post: PostRecord,
    lex: Lexicons,
    hash_buckets: int = 64,
    scaled_endorsement: bool = True,
) -> np.ndarray:
    """Stack per-node feature vectors into the V x K matrix the model eats.

    Row 0 (the post node) is all zero except the indicator column; row v
    holds the features of comment v. No normalization happens here; training
    owns column standardization.
    """
    if graph.post_ref != post.post_id or graph.node_count != len(post.comments) + 1:
        raise ValueError(
            f"graph ({graph.post_ref!r}, {graph.node_count} nodes) does not match "
            f"post ({post.post_id!r}, {len(post.comments)} comments)"
        )
    width = feature_dim(hash_buckets)
    matrix = np.zeros((graph.node_count, width), dtype=np.float64)
    matrix[0, -1] = 1.0
    for v, comment in enumerate(post.comments, start=1):
        if graph.node_ids[v] != comment.comment_id:
            raise ValueError(
                f"graph node {v} is {graph.node_ids[v]!r}, post has {comment.comment_id!r}"
            )
        matrix[v, :hash_buckets] = linguistic_vector(comment.text, hash_buckets)
        matrix[v, hash_buckets] = sentiment_score(comment.text, lex)
        matrix[v, hash_buckets + 1] = endorsement_value(
            comment, post.platform, scaled=scaled_endorsement
        )
        matrix[v, hash_buckets + 2 : hash_buckets + 2 + METADATA_DIM] = (
            metadata_features(comment.text, lex)
        )
    return matrix
