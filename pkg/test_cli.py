"""
End-to-end tests for the command-line surface and the layered run configuration.
"""

import json
from collections import Counter

import pytest

from cli import build_parser, run_command
from config import resolve_config, write_resolved_config
from models import ConfigError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("IMB_SEED", "IMB_LOG_LEVEL", "IMB_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def small_fixture(tmp_path):
    """A 60-document synthetic corpus with embeddings, written through the synth subcommand."""
    data = tmp_path / "data"
    code = run_command(["synth", "--ratio", "3:2:1", "--n", "60", "--dim", "4", "--separation", "4",
                        "--out", str(data), "--quiet"])
    assert code == 0
    return data / "corpus.jsonl", data / "embeddings.jsonl"


def train_args(corpus, embeddings, out, *extra):
    return ["train", "--corpus", str(corpus), "--features", f"embeddings:{embeddings}", "--task", "T1",
            "--k", "3", "--epochs", "2", "--patience", "1", "--hidden", "8", "--lr", "0.01",
            "--out", str(out), "--quiet", *extra]


class TestSynth:
    def test_default_ratio_gives_exact_counts(self, tmp_path):
        assert run_command(["synth", "--out", str(tmp_path), "--quiet"]) == 0
        with open(tmp_path / "corpus.jsonl", encoding="utf-8") as handle:
            counts = Counter(json.loads(line)["labels_t1"] for line in handle)
        assert counts == {"class0": 878, "class1": 269, "class2": 87}
        with open(tmp_path / "embeddings.jsonl", encoding="utf-8") as handle:
            assert len(json.loads(handle.readline())["vector"]) == 16

    def test_correlated_fixture_has_all_tasks(self, tmp_path):
        assert run_command(["synth", "--correlated", "--n", "30", "--out", str(tmp_path), "--quiet"]) == 0
        with open(tmp_path / "corpus.jsonl", encoding="utf-8") as handle:
            record = json.loads(handle.readline())
        assert {"labels_t1", "labels_t2", "paragraphs"} <= set(record)


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert run_command(["bogus"]) == 2

    def test_unknown_flag(self, tmp_path):
        assert run_command(["stats", "--no-such-flag", "--out", str(tmp_path)]) == 2

    def test_ensemble_size_is_not_configurable(self, tmp_path):
        assert run_command(["predict", "--top-k", "5", "--out", str(tmp_path)]) == 2
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"top_k": 5}}), encoding="utf-8")
        with pytest.raises(ConfigError, match="train.top_k"):
            resolve_config(config_path=path, environ={})

    def test_invalid_config_names_the_field(self, tmp_path, capsys):
        code = run_command(["folds", "--k", "1", "--corpus", "x.jsonl", "--out", str(tmp_path)])
        assert code == 1
        assert "train.k" in capsys.readouterr().err

    def test_missing_corpus_file(self, tmp_path, capsys):
        code = run_command(["stats", "--corpus", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_k_larger_than_corpus(self, small_fixture, tmp_path):
        corpus, _ = small_fixture
        assert run_command(["folds", "--corpus", str(corpus), "--k", "100", "--out", str(tmp_path / "f")]) == 1


class TestCommands:
    def test_stats(self, small_fixture, tmp_path, capsys):
        corpus, _ = small_fixture
        out = tmp_path / "stats"
        assert run_command(["stats", "--corpus", str(corpus), "--out", str(out), "--quiet"]) == 0
        stats = json.loads((out / "stats.json").read_text(encoding="utf-8"))
        assert stats["T1"]["n_units"] == 60
        assert "T1" in capsys.readouterr().out
        assert (out / "resolved_config.json").exists()
        assert (out / "run.log").exists()

    def test_folds(self, small_fixture, tmp_path):
        corpus, _ = small_fixture
        out = tmp_path / "folds"
        assert run_command(["folds", "--corpus", str(corpus), "--k", "3", "--out", str(out), "--quiet"]) == 0
        plan = json.loads((out / "folds.json").read_text(encoding="utf-8"))
        assert plan["k"] == 3
        assert len(plan["assignment"]) == 60

    def test_train_then_predict(self, small_fixture, tmp_path):
        corpus, embeddings = small_fixture
        run = tmp_path / "run"
        assert run_command(train_args(corpus, embeddings, run, "--by-language")) == 0
        report = json.loads((run / "cv_report.json").read_text(encoding="utf-8"))
        assert report["T1"]["k"] == 3
        assert len(report["T1"]["fold_scores"]) == 3
        assert (run / "by_language.txt").exists()
        manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
        assert len(manifest["tasks"]["T1"]) == 3

        out = tmp_path / "predicted"
        code = run_command(["predict", "--run", str(run), "--corpus", str(corpus), "--task", "T1",
                            "--features", f"embeddings:{embeddings}", "--out", str(out), "--quiet"])
        assert code == 0
        lines = (out / "predictions.jsonl").read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines]
        assert len(records) == 60
        assert all(len(r["labels"]) == 1 and r["labels"][0].startswith("class") for r in records)

    def test_repeated_runs_are_byte_identical(self, small_fixture, tmp_path):
        corpus, embeddings = small_fixture
        first, second = tmp_path / "a", tmp_path / "b"
        assert run_command(train_args(corpus, embeddings, first)) == 0
        assert run_command(train_args(corpus, embeddings, second)) == 0
        for name in ("cv_report.json", "predictions.jsonl", "folds.json", "T1/0/best.ckpt"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_ablate(self, small_fixture, tmp_path):
        corpus, embeddings = small_fixture
        out = tmp_path / "ablate"
        args = train_args(corpus, embeddings, out)
        args[0] = "ablate"
        assert run_command(args) == 0
        report = json.loads((out / "ablation.json").read_text(encoding="utf-8"))
        assert sorted(report["rows"]) == sorted(["full", "w/o cw", "w/o sw", "w/o td"])

    def test_monolingual_strategy(self, small_fixture, tmp_path):
        corpus, _ = small_fixture
        out = tmp_path / "mono"
        code = run_command(["train", "--corpus", str(corpus), "--strategy", "monolingual", "--k", "2",
                            "--epochs", "2", "--patience", "1", "--lr", "0.05", "--out", str(out), "--quiet"])
        assert code == 0
        report = json.loads((out / "monolingual_report.json").read_text(encoding="utf-8"))
        assert set(report) == {"de", "en", "fr", "it", "po", "ru"}


class TestResolveConfig:
    def test_defaults(self):
        config = resolve_config(environ={})
        assert config.train.k == 10
        assert config.train.hidden == 128

    def test_precedence(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"seed_base": 5, "k": 4}}), encoding="utf-8")
        parser = build_parser()

        from_file = resolve_config(parser.parse_args(["train", "--config", str(path)]), environ={})
        assert from_file.train.seed_base == 5
        from_env = resolve_config(parser.parse_args(["train", "--config", str(path)]), environ={"IMB_SEED": "7"})
        assert from_env.train.seed_base == 7
        assert from_env.train.k == 4
        from_flag = resolve_config(parser.parse_args(["train", "--config", str(path), "--seed", "3"]),
                                   environ={"IMB_SEED": "7"})
        assert from_flag.train.seed_base == 3

    def test_hidden_zero_means_trunkless(self):
        args = build_parser().parse_args(["train", "--hidden", "0"])
        assert resolve_config(args, environ={}).train.hidden is None

    def test_unknown_key_names_its_path(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"bogus": 1}}), encoding="utf-8")
        with pytest.raises(ConfigError) as excinfo:
            resolve_config(config_path=path, environ={})
        assert excinfo.value.field_path == "train.bogus"

    def test_wrong_type(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"epochs_max": "ten"}}), encoding="utf-8")
        with pytest.raises(ConfigError, match="train.epochs_max"):
            resolve_config(config_path=path, environ={})

    def test_bad_environment_seed(self):
        with pytest.raises(ConfigError, match="seed_base"):
            resolve_config(environ={"IMB_SEED": "abc"})

    def test_resolved_config_reproduces_itself(self, tmp_path):
        args = build_parser().parse_args(["train", "--k", "3", "--lr", "0.01", "--hidden", "0", "--task", "all"])
        config = resolve_config(args, environ={})
        path = write_resolved_config(config, tmp_path)
        assert resolve_config(config_path=path, environ={}) == config
