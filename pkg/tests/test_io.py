import json
import math

import numpy as np
import pytest

from fauxnet.comment_graph import Platform
from fauxnet.dataio import (
    DataError,
    SyntheticConfig,
    generate_synthetic,
    load_model,
    parse_posts,
    save_model,
    write_posts,
)
from fauxnet.model import ModelConfig
from fauxnet.node_features import Lexicons, endorsement_value
from fauxnet.training import (
    PipelineConfig,
    TrainConfig,
    build_examples,
    score_examples,
    train,
)

from helpers import comment, post


class TestDatasetRoundTrip:
    def test_round_trip_preserves_structure(self, tmp_path):
        posts = [
            post(
                [
                    comment("c1", text="Unicode ☃ text", likes=3, dislikes=1),
                    comment("c2", parent="c1", text="reply!", likes=0),
                ],
                label=True,
                post_id="p-a",
            ),
            post([], platform=Platform.TWITTER, label=False, post_id="p-b"),
            post([comment("c3", likes=2, retweets=5)], post_id="p-c"),  # no label
        ]
        path = tmp_path / "posts.jsonl"
        write_posts(posts, path)
        loaded, report = parse_posts(path)
        assert loaded == posts
        assert report.ok and report.unknown_fields == 0

    def test_optional_fields_stay_absent(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_posts([post([comment("c", likes=1)])], path)
        obj = json.loads(path.read_text().splitlines()[0])
        assert "label" not in obj
        assert "dislikes" not in obj["comments"][0]
        assert "parent_id" not in obj["comments"][0]


class TestParsePosts:
    def write_lines(self, tmp_path, lines):
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def good_line(self, pid="p1"):
        return json.dumps(
            {
                "post_id": pid,
                "platform": "reddit",
                "created_at": 100,
                "label": False,
                "comments": [],
            }
        )

    def test_malformed_line_is_isolated(self, tmp_path):
        lines = [self.good_line(f"p{i}") for i in range(9)]
        lines.insert(4, "{ not json")
        posts, report = parse_posts(self.write_lines(tmp_path, lines))
        assert len(posts) == 9
        assert [lineno for lineno, _ in report.malformed_lines] == [5]

    def test_missing_required_field_reported(self, tmp_path):
        bad = json.dumps({"platform": "reddit", "created_at": 1, "comments": []})
        posts, report = parse_posts(self.write_lines(tmp_path, [self.good_line(), bad]))
        assert len(posts) == 1
        assert "post_id" in report.malformed_lines[0][1]

    def test_unknown_platform_reported(self, tmp_path):
        bad = json.dumps(
            {"post_id": "x", "platform": "myspace", "created_at": 1, "comments": []}
        )
        _, report = parse_posts(self.write_lines(tmp_path, [self.good_line(), bad]))
        assert "platform" in report.malformed_lines[0][1]

    def test_negative_likes_rejected(self, tmp_path):
        bad = json.dumps(
            {
                "post_id": "x",
                "platform": "reddit",
                "created_at": 1,
                "comments": [
                    {
                        "comment_id": "c",
                        "author_id": "a",
                        "text": "t",
                        "likes": -1,
                        "created_at": 2,
                    }
                ],
            }
        )
        _, report = parse_posts(self.write_lines(tmp_path, [self.good_line(), bad]))
        assert len(report.malformed_lines) == 1

    def test_unknown_fields_counted_not_fatal(self, tmp_path):
        obj = json.loads(self.good_line())
        obj["extra_field"] = 1
        obj["comments"] = [
            {
                "comment_id": "c",
                "author_id": "a",
                "text": "t",
                "likes": 0,
                "created_at": 101,
                "score_hidden": True,
            }
        ]
        posts, report = parse_posts(self.write_lines(tmp_path, [json.dumps(obj)]))
        assert len(posts) == 1
        assert report.unknown_fields == 2

    def test_pre_post_timestamps_clamped(self, tmp_path):
        obj = json.loads(self.good_line())
        obj["comments"] = [
            {
                "comment_id": "c",
                "author_id": "a",
                "text": "t",
                "likes": 0,
                "created_at": 50,  # before the post at 100
            }
        ]
        posts, report = parse_posts(self.write_lines(tmp_path, [json.dumps(obj)]))
        assert posts[0].comments[0].created_at == 100
        assert report.clamped_timestamps == 1

    def test_missing_dislikes_means_zero_endorsement_effect(self, tmp_path):
        obj = json.loads(self.good_line())
        obj["comments"] = [
            {
                "comment_id": "c",
                "author_id": "a",
                "text": "t",
                "likes": 4,
                "created_at": 101,
            }
        ]
        posts, _ = parse_posts(self.write_lines(tmp_path, [json.dumps(obj)]))
        parsed = posts[0].comments[0]
        assert parsed.dislikes is None
        assert endorsement_value(parsed, Platform.REDDIT, scaled=False) == 4.0

    def test_zero_valid_lines_is_an_error(self, tmp_path):
        with pytest.raises(DataError, match="no valid posts"):
            parse_posts(self.write_lines(tmp_path, ["{ nope"]))

    def test_unreadable_file_raises(self, tmp_path):
        with pytest.raises(OSError):
            parse_posts(tmp_path / "does-not-exist.jsonl")


class TestGenerateSynthetic:
    def test_deterministic(self):
        cfg = SyntheticConfig(n_posts=30, seed=12)
        assert generate_synthetic(cfg) == generate_synthetic(cfg)

    def test_class_balance_within_binomial_bounds(self):
        posts = generate_synthetic(SyntheticConfig(n_posts=1000, class_balance=0.5, seed=0))
        positives = sum(1 for p in posts if p.label)
        assert 450 <= positives <= 550
        sigma = math.sqrt(1000 * 0.25)
        assert abs(positives - 500) <= 3 * sigma

    def test_structural_validity(self):
        posts = generate_synthetic(SyntheticConfig(n_posts=40, seed=1))
        for p in posts:
            ids = {c.comment_id for c in p.comments}
            assert len(ids) == len(p.comments)
            for c in p.comments:
                assert c.created_at >= p.created_at
                assert c.parent_id is None or c.parent_id in ids
                assert c.likes >= 0

    def test_direct_reply_fraction_separates_classes(self):
        posts = generate_synthetic(SyntheticConfig(n_posts=200, seed=2))
        fractions = {True: [], False: []}
        for p in posts:
            direct = sum(1 for c in p.comments if c.parent_id is None)
            fractions[bool(p.label)].append(direct / len(p.comments))
        assert np.mean(fractions[True]) > np.mean(fractions[False])

    def test_config_validation(self):
        with pytest.raises(ValueError, match="n_posts"):
            SyntheticConfig(n_posts=1)
        with pytest.raises(ValueError, match="class_balance"):
            SyntheticConfig(n_posts=10, class_balance=1.5)


@pytest.fixture(scope="module")
def trained():
    pipe = PipelineConfig(hash_buckets=8)
    posts = generate_synthetic(SyntheticConfig(n_posts=30, seed=4))
    examples = build_examples(posts, Lexicons.default(), pipe)
    model_cfg = ModelConfig(input_dim=pipe.input_dim, hidden_dim=8, clusters=2, seed=0)
    result = train(examples, model_cfg, TrainConfig(epochs=2, batch_size=8, seed=0))
    return pipe, model_cfg, result, examples


class TestModelPersistence:
    def test_round_trip_predictions_are_bitwise_equal(self, trained, tmp_path):
        pipe, model_cfg, result, examples = trained
        path = tmp_path / "model.json"
        save_model(path, result.params, model_cfg, pipe, result.stats, seed=0)
        loaded = load_model(path)
        before = score_examples(result.params, examples[:20], result.stats)
        after = score_examples(loaded.params, examples[:20], loaded.stats)
        assert np.array_equal(before, after)
        assert loaded.model_cfg == model_cfg
        assert loaded.pipeline == pipe

    def test_truncated_file_is_structured_error(self, trained, tmp_path):
        pipe, model_cfg, result, _ = trained
        path = tmp_path / "model.json"
        save_model(path, result.params, model_cfg, pipe, result.stats, seed=0)
        blob = path.read_text()
        path.write_text(blob[: len(blob) // 2])
        with pytest.raises(DataError, match="corrupt model file"):
            load_model(path)

    def test_future_version_names_both_versions(self, trained, tmp_path):
        pipe, model_cfg, result, _ = trained
        path = tmp_path / "model.json"
        save_model(path, result.params, model_cfg, pipe, result.stats, seed=0)
        obj = json.loads(path.read_text())
        obj["format_version"] = 99
        path.write_text(json.dumps(obj))
        with pytest.raises(DataError, match=r"99.*version 1"):
            load_model(path)

    def test_missing_section_is_corrupt(self, trained, tmp_path):
        pipe, model_cfg, result, _ = trained
        path = tmp_path / "model.json"
        save_model(path, result.params, model_cfg, pipe, result.stats, seed=0)
        obj = json.loads(path.read_text())
        del obj["params"]
        path.write_text(json.dumps(obj))
        with pytest.raises(DataError, match="corrupt model file"):
            load_model(path)

    def test_stats_round_trip_without_standardization(self, trained, tmp_path):
        pipe, model_cfg, result, _ = trained
        path = tmp_path / "model.json"
        save_model(path, result.params, model_cfg, pipe, None, seed=3)
        loaded = load_model(path)
        assert loaded.stats is None and loaded.seed == 3
