import json
import warnings

import numpy as np
import pytest

from sigdrawdown.approximator import (FULL_H_GRID, FULL_K_GRID, FULL_M_GRID, DrawdownModel,
                                      StudyConfig, approximate_drawdown,
                                      fit_drawdown_approximator, load_model, mean_rmse_by,
                                      model_from_dict, model_to_dict, run_fbm_study,
                                      run_portfolio_study, save_model, train_test_gap,
                                      write_report_csv)
from sigdrawdown.errors import DataError, DomainError, SizeError
from sigdrawdown.ingest import random_weights
from sigdrawdown.paths import FbmConfig, generate_fbm_paths
from sigdrawdown.regression import CVConfig, ElasticNetModel, fit_scaler
from sigdrawdown.signature import batch_features, num_terms


@pytest.fixture(scope="module")
def fbm_blocks():
    return generate_fbm_paths(FbmConfig(0.5, 20, 600, sigma=0.01, seed=1))


@pytest.fixture(scope="module")
def model(fbm_blocks):
    return fit_drawdown_approximator(fbm_blocks, 3, seed=0)


class TestFit:
    def test_monotone_blocks_give_zero(self):
        rng = np.random.default_rng(0)
        blocks = 1 + np.cumsum(rng.uniform(0, 0.01, size=(50, 10)), axis=1)
        m = fit_drawdown_approximator(blocks, 2)
        assert abs(m.net.intercept) < 1e-12
        assert np.allclose(m.predict(blocks), 0.0, atol=1e-12)

    def test_noiseless_linear_target(self, fbm_blocks, monkeypatch):
        # target built from known weights on the M = 2 features
        feats = batch_features(fbm_blocks, 2)
        w = np.random.default_rng(2).normal(size=feats.shape[1])
        target = 0.1 + feats @ w
        import sigdrawdown.approximator as ap

        monkeypatch.setattr(ap, "drawdown_target", lambda b, k: 0.1 + batch_features(b, 2) @ w)
        cv = CVConfig(grid=((0.0, 0.0),), tol=1e-14, max_iter=200000)
        m = fit_drawdown_approximator(fbm_blocks[:500], 2, cv=cv)
        assert np.sqrt(np.mean((m.predict(fbm_blocks[500:]) - target[500:]) ** 2)) < 1e-6
        assert np.max(np.abs(m.predict(fbm_blocks[:500]) - target[:500])) < 1e-6

    def test_too_few_blocks(self, fbm_blocks):
        with pytest.raises(SizeError):
            fit_drawdown_approximator(fbm_blocks[:5], 2)

    def test_predict_length_check(self, model):
        with pytest.raises(SizeError):
            model.predict(np.ones(10))

    def test_zero_weights_predict_intercept(self, fbm_blocks):
        p = num_terms(2, 2)
        scaler = fit_scaler(batch_features(fbm_blocks, 2))
        m = DrawdownModel(scaler, ElasticNetModel(0.42, np.zeros(p), 0, 0), 2, 2, 20, "maximum")
        assert approximate_drawdown(m, fbm_blocks[0]) == 0.42
        assert approximate_drawdown(m, fbm_blocks[7]) == 0.42

    def test_weight_size_checked(self, fbm_blocks):
        scaler = fit_scaler(batch_features(fbm_blocks, 2))
        with pytest.raises(SizeError):
            DrawdownModel(scaler, ElasticNetModel(0.0, np.zeros(3), 0, 0), 2, 2, 20, "maximum")

    def test_gradient_matches_finite_differences(self, model, fbm_blocks):
        v = fbm_blocks[3]
        g = model.gradient(v)[0]
        h = 1e-6
        num = np.array([(approximate_drawdown(model, v + h * e) -
                         approximate_drawdown(model, v - h * e)) / (2 * h)
                        for e in np.eye(v.size)])
        assert np.abs(num - g).max() <= 1e-5 * np.abs(g).max()


class TestPersistence:
    def test_round_trip_bit_equal(self, model, fbm_blocks, tmp_path):
        path = tmp_path / "m.json"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(back.predict(fbm_blocks), model.predict(fbm_blocks))
        assert back.target == model.target and back.M == model.M

    def test_rejects_foreign_files(self, model, tmp_path):
        doc = model_to_dict(model)
        for key, value in (("format", "x"), ("version", 99), ("word_order", "lex")):
            with pytest.raises(DataError):
                model_from_dict({**doc, key: value})
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(DataError):
            load_model(bad)

    def test_file_is_text(self, model, tmp_path):
        path = tmp_path / "m.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        assert doc["d"] == 2 and len(doc["weights"]) == num_terms(2, 3)


class TestStudies:
    def test_full_grid_constants(self):
        assert FULL_H_GRID == (0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7)
        assert FULL_M_GRID == tuple(range(1, 11))
        assert FULL_K_GRID == (1000, 5000, 10000, 20000, 50000)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            StudyConfig(p_test=1.0)
        with pytest.raises(DomainError):
            StudyConfig(m_grid=(0, 1))
        with pytest.raises(ValueError):
            StudyConfig(target="median")

    def test_small_study_shape_and_determinism(self, tmp_path):
        cfg = StudyConfig(h_grid=(0.4, 0.7), m_grid=(1, 2), k_grid=(100,), seed=3,
                          cv=CVConfig(folds=3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rows = run_fbm_study(cfg)
            again = run_fbm_study(cfg)
        assert len(rows) == 2 * 2 * 1 * 2
        assert rows == again
        keys = [(r["H"], r["M"], r["K"]) for r in rows]
        assert keys == sorted(keys)
        write_report_csv(rows, tmp_path / "a.csv")
        write_report_csv(again, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert set(mean_rmse_by(rows, "M", "train")) == {1, 2}
        assert set(train_test_gap(rows, "K")) == {100}

    def test_portfolio_study_rows(self, prices):
        rows = run_portfolio_study(prices, random_weights(4, 1, 0), m_grid=(2,),
                                   cv=CVConfig(folds=3, temporal=True), target="maximum",
                                   rebase=True)
        assert [r["split"] for r in rows] == ["train", "test"]
        assert all(r["rmse"] > 0 for r in rows)
