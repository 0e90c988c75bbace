import csv
import json

import pytest

from sigdrawdown.cli import (EXIT_CONFIG, EXIT_DATA, config_hash, int_list, labelled_paths,
                             main, read_config_file)


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A short training run shared by the generate and report tests."""
    out = tmp_path_factory.mktemp("train")
    assert run("train", "--out", out, "--train-blocks", 400, "--steps", 3, "--m", 3) == 0
    return out


class TestParsing:
    def test_int_list(self):
        assert int_list("1..6") == (1, 2, 3, 4, 5, 6)
        assert int_list("1,5") == (1, 5)

    def test_labelled_paths(self):
        assert labelled_paths("a=x.json,b.json") == (("a", "x.json"), ("b", "b.json"))

    def test_config_file(self, tmp_path):
        f = tmp_path / "c.txt"
        f.write_text("# comment\nk = 100\np-test = 0.2  # trailing\n\n")
        assert read_config_file(f) == {"k": "100", "p_test": "0.2"}

    def test_hash_ignores_out(self):
        assert config_hash("fit", {"out": "a", "m": 3}) == config_hash("fit", {"out": "b", "m": 3})
        assert config_hash("fit", {"m": 3}) != config_hash("fit", {"m": 4})


class TestFbmStudy:
    def test_rows_and_rerun(self, tmp_path):
        args = ["fbm-study", "--h", "0.4,0.7", "--m", "1..2", "--k", "100", "--folds", 3,
                "--seed", 7]
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        a = (tmp_path / "a" / "fbm_study.csv").read_bytes()
        assert a == (tmp_path / "b" / "fbm_study.csv").read_bytes()
        rows = list(csv.DictReader(open(tmp_path / "a" / "fbm_study.csv")))
        assert len(rows) == 2 * 2 * 1 * 2

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "study.txt"
        cfg.write_text("h = 0.5\nm = 1..2\nk = 100\nfolds = 3\n")
        assert run("--config", cfg, "fbm-study", "--m", "1", "--out", tmp_path / "o") == 0
        rows = list(csv.DictReader(open(tmp_path / "o" / "fbm_study.csv")))
        assert {r["M"] for r in rows} == {"1"}
        assert {r["H"] for r in rows} == {"0.5"}
        man = json.load(open(tmp_path / "o" / "manifest.json"))
        entry = man["runs"]["fbm-study"]
        assert entry["artifacts"][0]["path"] == "fbm_study.csv"
        assert entry["artifacts"][0]["config_hash"] == entry["config_hash"]

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("hurst = 0.5\n")
        assert run("--config", cfg, "fbm-study", "--out", tmp_path) == EXIT_CONFIG

    def test_bad_values(self, tmp_path):
        assert run("fbm-study", "--m", "a..b", "--out", tmp_path) == EXIT_CONFIG
        assert run("fbm-study", "--h", "1.5", "--k", "100", "--out", tmp_path) == EXIT_CONFIG


class TestFit:
    def test_fit_bundled(self, tmp_path):
        assert run("fit", "--m", 3, "--train-blocks", 500, "--out", tmp_path) == 0
        doc = json.load(open(tmp_path / "drawdown_model.json"))
        assert doc["M"] == 3 and doc["tau"] == 20
        assert (tmp_path / "cv_table.csv").exists()

    def test_refuses_small_tau(self, tmp_path):
        assert run("fit", "--tau", 1, "--out", tmp_path) == EXIT_CONFIG

    def test_missing_prices(self, tmp_path):
        assert run("fit", "--prices", tmp_path / "none.csv", "--out", tmp_path) == EXIT_DATA

    def test_bad_weights(self, tmp_path):
        assert run("fit", "--weights", "0.5,0.6,0,0", "--out", tmp_path) == EXIT_CONFIG


class TestTrainGenerate:
    def test_train_outputs(self, trained):
        assert (trained / "generator.json").exists()
        rows = list(csv.DictReader(open(trained / "loss_history.csv")))
        assert {r["split"] for r in rows} == {"train", "validation"}

    def test_plain_vae(self, tmp_path):
        assert run("train", "--alpha", 0, "--out", tmp_path, "--train-blocks", 300,
                   "--steps", 2, "--m", 2) == 0
        doc = json.load(open(tmp_path / "generator.json"))
        assert doc["config"]["alpha"] == 0.0

    def test_generate(self, trained, tmp_path):
        assert run("generate", "--model", trained / "generator.json", "--n", 1000,
                   "--out", tmp_path) == 0
        lines = (tmp_path / "samples.csv").read_text().splitlines()
        assert len(lines) == 1001

    def test_generate_checks_tau(self, trained, tmp_path):
        assert run("generate", "--model", trained / "generator.json", "--tau", 10,
                   "--out", tmp_path) == EXIT_CONFIG

    def test_report_two_models(self, trained, tmp_path):
        model = trained / "generator.json"
        assert run("report", "--models", f"vae={model},xivae={model}", "--train-blocks", 400,
                   "--holdout-blocks", 300, "--n", 300, "--out", tmp_path) == 0
        ks = list(csv.DictReader(open(tmp_path / "ks.csv")))
        assert [r["model"] for r in ks] == ["vae", "xivae", "bm"]
        tails = list(csv.DictReader(open(tmp_path / "tails.csv")))
        assert sorted({r["q"] for r in tails}) == ["0.9", "0.95", "0.99"]
        for name in ("qq_vae.csv", "scatter_xivae.csv", "histogram.csv"):
            assert (tmp_path / name).exists()

    def test_report_needs_models(self, tmp_path):
        assert run("report", "--out", tmp_path) == EXIT_CONFIG
