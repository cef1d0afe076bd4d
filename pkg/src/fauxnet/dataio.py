"""Dataset files, synthetic corpus generation, and model persistence.

Datasets are JSON lines, one post per line; the field names mirror what the
platform crawlers emit. Model files are JSON with full-precision decimal
floats so a load reproduces predictions bit for bit. The synthetic
generator exists because no labeled real corpus ships with the package: it
produces two planted comment-behavior profiles (misleading posts draw
debunking, hub endorsement, and flat reply fan-out; benign posts draw
deeper, calmer threads) that the end-to-end tests train against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .comment_graph import CommentRecord, Platform, PostRecord
from .model import ModelConfig, ModelParams
from .training import FeatureStats, PipelineConfig

__all__ = [
    "DataError",
    "ParseReport",
    "parse_posts",
    "write_posts",
    "ClassProfile",
    "SyntheticConfig",
    "generate_synthetic",
    "LoadedModel",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1


class DataError(ValueError):
    """Bad input data: unparseable files, impossible values, bad versions."""


# --- dataset files ---------------------------------------------------------

_POST_FIELDS = {"post_id", "platform", "created_at", "label", "comments"}
_COMMENT_FIELDS = {
    "comment_id",
    "parent_id",
    "author_id",
    "text",
    "likes",
    "dislikes",
    "retweets",
    "created_at",
}


@dataclass
class ParseReport:
    malformed_lines: list[tuple[int, str]] = field(default_factory=list)
    unknown_fields: int = 0
    clamped_timestamps: int = 0

    @property
    def ok(self) -> bool:
        return not self.malformed_lines


def _need(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise ValueError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where}: field {key!r} must be an integer")
    elif not isinstance(value, kind):
        raise ValueError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _parse_comment(obj: dict, where: str, report: ParseReport) -> CommentRecord:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: comment must be an object")
    report.unknown_fields += len(set(obj) - _COMMENT_FIELDS)
    parent = obj.get("parent_id")
    if parent is not None and not isinstance(parent, str):
        raise ValueError(f"{where}: parent_id must be a string")
    dislikes = obj.get("dislikes")
    retweets = obj.get("retweets")
    for name, value in (("dislikes", dislikes), ("retweets", retweets)):
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise ValueError(f"{where}: {name} must be an integer")
    return CommentRecord(
        comment_id=_need(obj, "comment_id", str, where),
        author_id=_need(obj, "author_id", str, where),
        text=_need(obj, "text", str, where),
        likes=_need(obj, "likes", int, where),
        created_at=_need(obj, "created_at", int, where),
        parent_id=parent,
        dislikes=dislikes,
        retweets=retweets,
    )


def _parse_post(obj: dict, where: str, report: ParseReport) -> PostRecord:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: post must be an object")
    report.unknown_fields += len(set(obj) - _POST_FIELDS)
    platform_raw = _need(obj, "platform", str, where).lower()
    try:
        platform = Platform(platform_raw)
    except ValueError:
        raise ValueError(f"{where}: unknown platform {platform_raw!r}") from None
    label = obj.get("label")
    if label is not None and not isinstance(label, bool):
        raise ValueError(f"{where}: label must be a boolean")
    created_at = _need(obj, "created_at", int, where)
    raw_comments = obj.get("comments", [])
    if not isinstance(raw_comments, list):
        raise ValueError(f"{where}: comments must be an array")
    comments = []
    for c in raw_comments:
        comment = _parse_comment(c, where, report)
        if comment.created_at < created_at:
            # platform clock skew: comments cannot precede their post
            report.clamped_timestamps += 1
            comment = CommentRecord(
                comment_id=comment.comment_id,
                author_id=comment.author_id,
                text=comment.text,
                likes=comment.likes,
                created_at=created_at,
                parent_id=comment.parent_id,
                dislikes=comment.dislikes,
                retweets=comment.retweets,
            )
        comments.append(comment)
    return PostRecord(
        post_id=_need(obj, "post_id", str, where),
        platform=platform,
        created_at=created_at,
        comments=tuple(comments),
        label=label,
    )


def parse_posts(path: Path | str) -> tuple[list[PostRecord], ParseReport]:
    """Read a JSONL dataset; malformed lines are reported, not fatal.

    Raises DataError when the file ends up with zero valid posts.
    """
    report = ParseReport()
    posts: list[PostRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"line {lineno}"
            try:
                obj = json.loads(line)
                posts.append(_parse_post(obj, where, report))
            except (json.JSONDecodeError, ValueError) as exc:
                report.malformed_lines.append((lineno, str(exc)))
    if not posts:
        raise DataError(f"no valid posts in {path}")
    return posts, report


def _comment_to_obj(comment: CommentRecord) -> dict:
    obj: dict = {
        "comment_id": comment.comment_id,
        "author_id": comment.author_id,
        "text": comment.text,
        "likes": comment.likes,
        "created_at": comment.created_at,
    }
    if comment.parent_id is not None:
        obj["parent_id"] = comment.parent_id
    if comment.dislikes is not None:
        obj["dislikes"] = comment.dislikes
    if comment.retweets is not None:
        obj["retweets"] = comment.retweets
    return obj


def _post_to_obj(post: PostRecord) -> dict:
    obj: dict = {
        "post_id": post.post_id,
        "platform": post.platform.value,
        "created_at": post.created_at,
        "comments": [_comment_to_obj(c) for c in post.comments],
    }
    if post.label is not None:
        obj["label"] = post.label
    return obj


def write_posts(posts: Sequence[PostRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for post in posts:
            handle.write(json.dumps(_post_to_obj(post), ensure_ascii=False))
            handle.write("\n")


# --- synthetic corpus ------------------------------------------------------


@dataclass(frozen=True)
class ClassProfile:
    """Comment-behavior profile for one class of posts."""

    direct_reply_prob: float
    mean_comments: float
    hub_prob: float
    hub_likes: tuple[int, int]
    base_likes: tuple[int, int]
    verity_term_prob: float
    image_term_prob: float
    negative_prob: float
    positive_prob: float
    url_prob: float
    question_prob: float
    exclaim_prob: float
    reply_gap_seconds: float


# Misleading posts: flat direct-reply fan-out, a few heavily endorsed
# debunking comments, frequent truth/image vocabulary, negative tone.
FAUX_PROFILE = ClassProfile(
    direct_reply_prob=0.85,
    mean_comments=16.0,
    hub_prob=0.15,
    hub_likes=(150, 900),
    base_likes=(0, 6),
    verity_term_prob=0.55,
    image_term_prob=0.35,
    negative_prob=0.5,
    positive_prob=0.08,
    url_prob=0.25,
    question_prob=0.3,
    exclaim_prob=0.35,
    reply_gap_seconds=6.0 * 3600.0,
)

# Benign posts: deeper reply chains, spread-out endorsement, calmer tone.
GENUINE_PROFILE = ClassProfile(
    direct_reply_prob=0.3,
    mean_comments=16.0,
    hub_prob=0.0,
    hub_likes=(0, 1),
    base_likes=(0, 40),
    verity_term_prob=0.05,
    image_term_prob=0.04,
    negative_prob=0.08,
    positive_prob=0.4,
    url_prob=0.05,
    question_prob=0.12,
    exclaim_prob=0.1,
    reply_gap_seconds=6.0 * 3600.0,
)

_FILLER_WORDS = (
    "the this that it they look see here there just what when who how why "
    "now then because maybe still got made said went came people news story "
    "post thread source city day night year old new big small friend street "
    "crowd report area morning team event local"
).split()
_NEGATIVE_WORDS = "fake hoax wrong awful terrible lie misleading suspicious stupid sad angry doubt".split()
_POSITIVE_WORDS = "great good beautiful nice love amazing agree cool interesting funny thanks wow".split()
_VERITY_WORDS = "fake false hoax photoshopped debunked misleading".split()
_IMAGE_WORDS = "photo image picture photoshop pic".split()
_URL_POOL = (
    "https://example.com/evidence",
    "https://archive.example.org/item",
    "http://news.example.net/story",
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_posts: int
    class_balance: float = 0.5
    seed: int = 0
    faux: ClassProfile = FAUX_PROFILE
    genuine: ClassProfile = GENUINE_PROFILE

    def __post_init__(self) -> None:
        if self.n_posts < 2:
            raise ValueError(f"n_posts must be >= 2, got {self.n_posts}")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError(
                f"class_balance must be in (0, 1), got {self.class_balance}"
            )
        for profile in (self.faux, self.genuine):
            for name in (
                "direct_reply_prob",
                "hub_prob",
                "verity_term_prob",
                "image_term_prob",
                "negative_prob",
                "positive_prob",
                "url_prob",
                "question_prob",
                "exclaim_prob",
            ):
                value = getattr(profile, name)
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"profile {name} must be in [0, 1], got {value}")


def _comment_text(rng: np.random.Generator, profile: ClassProfile) -> str:
    count = int(rng.integers(3, 10))
    words = [str(w) for w in rng.choice(_FILLER_WORDS, size=count)]
    if rng.random() < profile.verity_term_prob:
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(_VERITY_WORDS)))
    if rng.random() < profile.image_term_prob:
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(_IMAGE_WORDS)))
    roll = rng.random()
    if roll < profile.negative_prob:
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(_NEGATIVE_WORDS)))
    elif roll < profile.negative_prob + profile.positive_prob:
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(_POSITIVE_WORDS)))
    if rng.random() < profile.url_prob:
        words.append(str(rng.choice(_URL_POOL)))
    text = " ".join(words)
    if rng.random() < profile.question_prob:
        text += "?"
    if rng.random() < profile.exclaim_prob:
        text += "!"
    return text


def generate_synthetic(cfg: SyntheticConfig) -> list[PostRecord]:
    """Seeded corpus of labeled posts following the two class profiles."""
    rng = np.random.default_rng(cfg.seed)
    posts: list[PostRecord] = []
    for index in range(cfg.n_posts):
        label = bool(rng.random() < cfg.class_balance)
        profile = cfg.faux if label else cfg.genuine
        platform = Platform.REDDIT if rng.random() < 0.5 else Platform.TWITTER
        post_time = 1_600_000_000 + index * 86_400
        count = max(2, int(rng.poisson(profile.mean_comments)))

        comments: list[CommentRecord] = []
        offset = 0.0
        for j in range(count):
            offset += float(rng.exponential(profile.reply_gap_seconds))
            parent: Optional[str] = None
            if j > 0 and rng.random() >= profile.direct_reply_prob:
                parent = comments[int(rng.integers(0, j))].comment_id
            if rng.random() < profile.hub_prob:
                likes = int(rng.integers(profile.hub_likes[0], profile.hub_likes[1] + 1))
            else:
                likes = int(rng.integers(profile.base_likes[0], profile.base_likes[1] + 1))
            dislikes = retweets = None
            if platform is Platform.REDDIT:
                dislikes = int(rng.integers(0, likes // 3 + 2))
            else:
                retweets = int(rng.integers(0, likes // 2 + 2))
            comments.append(
                CommentRecord(
                    comment_id=f"p{index:05d}c{j:03d}",
                    author_id=f"u{int(rng.integers(0, 100_000)):06d}",
                    text=_comment_text(rng, profile),
                    likes=likes,
                    created_at=post_time + int(offset) + 1,
                    parent_id=parent,
                    dislikes=dislikes,
                    retweets=retweets,
                )
            )
        posts.append(
            PostRecord(
                post_id=f"p{index:05d}",
                platform=platform,
                created_at=post_time,
                comments=tuple(comments),
                label=label,
            )
        )
    return posts


# --- model files -----------------------------------------------------------


@dataclass
class LoadedModel:
    params: ModelParams
    model_cfg: ModelConfig
    pipeline: PipelineConfig
    stats: Optional[FeatureStats]
    seed: int


def save_model(
    path: Path | str,
    params: ModelParams,
    model_cfg: ModelConfig,
    pipeline: PipelineConfig,
    stats: Optional[FeatureStats],
    seed: int,
) -> None:
    """Write a versioned model file; floats keep full round-trip precision."""
    obj = {
        "format_version": MODEL_FORMAT_VERSION,
        "model": {
            "input_dim": model_cfg.input_dim,
            "hidden_dim": model_cfg.hidden_dim,
            "clusters": model_cfg.clusters,
            "conv_layers_per_stage": model_cfg.conv_layers_per_stage,
            "pooling_stages": model_cfg.pooling_stages,
            "seed": model_cfg.seed,
        },
        "features": {
            "hash_buckets": pipeline.hash_buckets,
            "symmetrize": pipeline.symmetrize,
            "scaled_endorsement": pipeline.scaled_endorsement,
        },
        "standardization": stats.to_jsonable() if stats is not None else None,
        "params": {
            "conv_weights": [w.tolist() for w in params.conv_weights],
            "assign_weights": [w.tolist() for w in params.assign_weights],
            "dense_weight": params.dense_weight.tolist(),
            "dense_bias": params.dense_bias.tolist(),
        },
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=1)
        handle.write("\n")


def load_model(path: Path | str) -> LoadedModel:
    """Read a model file back; corrupt or future-versioned files are errors."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt model file {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise DataError(f"corrupt model file {path}: not an object")
    version = obj.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"model file {path} has format_version {version!r}; "
            f"this build reads version {MODEL_FORMAT_VERSION}"
        )
    try:
        model_cfg = ModelConfig(**obj["model"])
        feats = obj["features"]
        pipeline = PipelineConfig(
            hash_buckets=int(feats["hash_buckets"]),
            symmetrize=bool(feats["symmetrize"]),
            scaled_endorsement=bool(feats["scaled_endorsement"]),
        )
        raw = obj["params"]
        params = ModelParams(
            conv_weights=[np.asarray(w, dtype=np.float64) for w in raw["conv_weights"]],
            assign_weights=[np.asarray(w, dtype=np.float64) for w in raw["assign_weights"]],
            dense_weight=np.asarray(raw["dense_weight"], dtype=np.float64),
            dense_bias=np.asarray(raw["dense_bias"], dtype=np.float64),
        )
        params.architecture()
        stats_obj = obj.get("standardization")
        stats = FeatureStats.from_jsonable(stats_obj) if stats_obj is not None else None
        seed = int(obj["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt model file {path}: {exc}") from None
    return LoadedModel(
        params=params, model_cfg=model_cfg, pipeline=pipeline, stats=stats, seed=seed
    )
