import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import eigh_pca, normal_equations, rank_k_reconstruction
from mealmeter.errors import DataError, PipelineFormatError
from mealmeter.features import FeatureMatrix
from mealmeter.model import (
    apply_standardizer,
    fit_pca,
    fit_pipeline,
    fit_regression,
    fit_standardizer,
    load_pipeline,
    pipeline_to_dict,
    predict,
    save_pipeline,
    split_train_test,
    transform,
)


def matrix(n, p=96, seed=0):
    rng = np.random.default_rng(seed)
    keys = [("S01", 1_700_000_000.0 + 60 * i) for i in range(n)]
    cols = [f"HR_F{j}" for j in range(p)]
    X = rng.normal(size=(n, p)) @ rng.normal(size=(p, p))
    Y = np.abs(rng.normal(50, 20, size=(n, 3)))
    return FeatureMatrix(keys, cols, ["HR"] * p, X, Y)


class TestSplit:
    @pytest.mark.parametrize("n,seed,n_train", [(15, 7, 12), (180, 0, 144), (5, 1, 4), (11, 3, 9)])
    def test_ceil_rule(self, n, seed, n_train):
        train, test = split_train_test(matrix(n, 4), 0.8, seed)
        assert (len(train), len(test)) == (n_train, n - n_train)
        assert sorted(train.keys + test.keys) == sorted(matrix(n, 4).keys)

    def test_deterministic(self):
        a = split_train_test(matrix(30, 4), 0.8, 42)
        b = split_train_test(matrix(30, 4), 0.8, 42)
        assert a[0].keys == b[0].keys and a[1].keys == b[1].keys

    def test_seed_matters(self):
        assert split_train_test(matrix(30, 4), 0.8, 1)[1].keys != split_train_test(matrix(30, 4), 0.8, 2)[1].keys

    def test_too_few(self):
        with pytest.raises(DataError):
            split_train_test(matrix(4, 4))


class TestStandardizer:
    def test_hand(self):
        s = fit_standardizer([[1.0], [3.0]])
        assert s.mu.tolist() == [2] and s.sigma.tolist() == [1]
        assert apply_standardizer(s, [[5.0]]).tolist() == [[3.0]]

    def test_constant_flagged(self):
        s = fit_standardizer([[4.0, 1.0], [4.0, 2.0]])
        assert s.constant_columns.tolist() == [0]
        assert apply_standardizer(s, [[123.0, 1.5]])[0, 0] == 0

    def test_train_moments(self):
        X = matrix(40, 10).X
        Z = apply_standardizer(fit_standardizer(X), X)
        assert np.allclose(Z.mean(axis=0), 0, atol=1e-9)
        assert np.allclose(Z.std(axis=0), 1, atol=1e-9)

    def test_uses_train_only(self):
        train, test = split_train_test(matrix(40, 6), 0.8, 0)
        s = fit_standardizer(train.X)
        assert np.allclose(s.mu, train.X.mean(axis=0))


class TestPca:
    def test_line(self):
        t = np.linspace(-1, 1, 30)
        X = np.column_stack([t, 2 * t])
        X = X - X.mean(axis=0)
        pca = fit_pca(X, 2)
        assert np.allclose(np.abs(pca.W[:, 0]), np.array([1, 2]) / np.sqrt(5))
        assert pca.explained_variance[1] == pytest.approx(0, abs=1e-12)

    def test_isotropic_orthonormal(self):
        X = np.vstack([np.eye(5), -np.eye(5)])
        W = fit_pca(X, 3).W
        assert np.allclose(W.T @ W, np.eye(3), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_against_eigh(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(10, 4)) * [5, 3, 1, 0.2]
        Xs = apply_standardizer(fit_standardizer(X), X)
        pca = fit_pca(Xs, 3)
        V, vals = eigh_pca(Xs, 3)
        assert np.allclose(pca.W.T @ pca.W, np.eye(3), atol=1e-8)
        assert np.allclose(pca.explained_variance, vals, rtol=1e-8, atol=1e-10)
        assert np.allclose(rank_k_reconstruction(Xs, pca.W), rank_k_reconstruction(Xs, V), atol=1e-6)

    def test_scores_uncorrelated(self):
        X = matrix(50, 12).X
        Xs = apply_standardizer(fit_standardizer(X), X)
        Z = transform(fit_pca(Xs, 3), Xs)
        C = np.cov(Z, rowvar=False)
        assert np.all(np.abs(C - np.diag(np.diag(C))) <= 1e-8)

    def test_sign_convention(self):
        X = matrix(30, 8).X
        Xs = apply_standardizer(fit_standardizer(X), X)
        for col in fit_pca(Xs, 3).W.T:
            assert col[np.argmax(np.abs(col))] > 0

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            fit_pca(np.zeros((2, 5)), 3)


class TestRegression:
    def test_exact_linear(self):
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(30, 3))
        y = 4.0 + Z @ [1.5, -2.0, 0.25]
        m = fit_regression(Z, y)
        assert np.max(np.abs(m.predict_raw(Z) - y)) <= 1e-8
        assert m.intercept == pytest.approx(4.0)

    def test_constant_target(self):
        Z = np.random.default_rng(1).normal(size=(20, 3))
        m = fit_regression(Z, np.full(20, 50.0))
        assert m.intercept == pytest.approx(50) and np.allclose(m.coef, 0, atol=1e-12)

    def test_noisy_recovery_and_oracle(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(50, 3))
        beta = np.array([3.0, -1.0, 0.5])
        y = 10 + Z @ beta + rng.normal(0, 0.5, 50)
        m = fit_regression(Z, y)
        ref = normal_equations(Z, y)
        assert np.allclose(np.r_[m.intercept, m.coef], ref, atol=1e-10)
        A = np.column_stack([np.ones(50), Z])
        resid = y - A @ ref
        se = np.sqrt(np.diag(np.linalg.inv(A.T @ A)) * (resid @ resid) / (50 - 4))
        assert np.all(np.abs(m.coef - beta) <= 3 * se[1:])

    def test_residuals_orthogonal(self):
        rng = np.random.default_rng(3)
        Z = rng.normal(size=(40, 3))
        Y = rng.normal(size=(40, 3))
        r = Y - fit_regression(Z, Y).predict_raw(Z)
        A = np.column_stack([np.ones(40), Z])
        assert np.max(np.abs(A.T @ r)) <= 1e-8

    def test_needs_rows(self):
        with pytest.raises(DataError):
            fit_regression(np.zeros((4, 3)), np.zeros(4))


class TestPipeline:
    def test_fitted_value_definition(self):
        train = matrix(40, 20)
        p = fit_pipeline(train)
        z = p.scores(train.X[:1])
        manual = p.regression.intercept + z @ p.regression.coef
        assert np.array_equal(predict(p, train.take([0])).raw, manual)

    def test_constant_row_predicts_intercept(self):
        train = matrix(40, 20)
        p = fit_pipeline(train)
        row = train.take([0])
        row.X[:] = p.standardizer.mu
        pred = predict(p, row)
        assert np.allclose(pred.raw[0], p.regression.intercept)
        assert np.array_equal(pred.clamped[0], np.maximum(p.regression.intercept, 0))

    def test_clamped_at_zero(self):
        train = matrix(40, 20)
        p = fit_pipeline(train)
        row = train.take([0])
        row.X[:] = p.standardizer.mu - 1e3 * p.pca.W[:, 0] * np.where(p.standardizer.sigma > 0, p.standardizer.sigma, 1)
        pred = predict(p, row)
        assert np.all(pred.clamped >= 0)
        assert np.array_equal(pred.was_clamped, pred.raw < 0)

    def test_schema_mismatch(self):
        p = fit_pipeline(matrix(40, 20))
        with pytest.raises(DataError):
            predict(p, matrix(5, 19))


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        train = matrix(40, 96)
        p = fit_pipeline(train, config={"seed": "0"})
        save_pipeline(p, tmp_path / "m.json")
        q = load_pipeline(tmp_path / "m.json")
        assert np.array_equal(predict(p, train).raw, predict(q, train).raw)

    def test_counts(self):
        d = pipeline_to_dict(fit_pipeline(matrix(40, 96)))
        assert len(d["standardizer"]["mu"]) == len(d["standardizer"]["sigma"]) == 96
        assert np.array(d["pca"]["W"]).shape == (96, 3)

    def test_truncated(self, tmp_path):
        save_pipeline(fit_pipeline(matrix(40, 10)), tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text()
        (tmp_path / "m.json").write_text(text[: len(text) // 2])
        with pytest.raises(PipelineFormatError):
            load_pipeline(tmp_path / "m.json")

    def test_version_mismatch(self, tmp_path):
        d = pipeline_to_dict(fit_pipeline(matrix(40, 10)))
        d["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(d))
        with pytest.raises(PipelineFormatError, match="version"):
            load_pipeline(tmp_path / "m.json")

    def test_wrong_shape(self, tmp_path):
        d = pipeline_to_dict(fit_pipeline(matrix(40, 10)))
        d["standardizer"]["mu"] = d["standardizer"]["mu"][:-1]
        (tmp_path / "m.json").write_text(json.dumps(d))
        with pytest.raises(PipelineFormatError):
            load_pipeline(tmp_path / "m.json")
