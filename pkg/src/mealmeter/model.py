"""Z-score -> PCA -> least-squares regression, one coefficient set per target.

Every fitted quantity (column means/SDs, loadings, coefficients) comes from
the training rows only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError, PipelineFormatError
from .features import TARGETS, FeatureMatrix

FORMAT_NAME = "mealmeter-pipeline"
FORMAT_VERSION = 1


def split_train_test(rows: FeatureMatrix, ratio: float = 0.8, seed: int = 0):
    """Seeded shuffle; the first ``ceil(ratio * n)`` rows train, the rest test."""
    n = len(rows)
    if n < 5:
        raise DataError(f"need at least 5 rows to split, got {n}")
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil(ratio * n - 1e-9)
    return rows.take(np.sort(order[:n_train])), rows.take(np.sort(order[n_train:]))


@dataclass(frozen=True)
class Standardizer:
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def constant_columns(self) -> np.ndarray:
        return np.flatnonzero(self.sigma == 0)

    def apply(self, X) -> np.ndarray:
        return apply_standardizer(self, X)


def fit_standardizer(X) -> Standardizer:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot standardize an empty training matrix")
    mu = X.mean(axis=0)
    sigma = np.sqrt(((X - mu) ** 2).mean(axis=0))
    # columns that are constant up to rounding of the mean
    sigma[np.ptp(X, axis=0) == 0] = 0.0
    return Standardizer(mu, sigma)


def apply_standardizer(s: Standardizer, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != s.mu.size:
        raise DataError(f"expected {s.mu.size} columns, got {X.shape[1]}")
    safe = np.where(s.sigma > 0, s.sigma, 1.0)
    out = (X - s.mu) / safe
    out[:, s.sigma == 0] = 0.0
    return out


@dataclass(frozen=True)
class PcaLoadings:
    W: np.ndarray  # p x K, columns are loading vectors
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.W.shape[1]

    def transform(self, X_scaled) -> np.ndarray:
        return transform(self, X_scaled)


def fit_pca(X_scaled, n_components: int = 3) -> PcaLoadings:
    """Top right-singular vectors of the (centered) scaled training matrix.

    Each loading vector is signed so that its largest-magnitude entry is
    positive.
    """
    X = np.asarray(X_scaled, dtype=float)
    n, p = X.shape
    if n < n_components:
        raise DataError(f"PCA with {n_components} components needs at least that many rows, got {n}")
    if n_components > p:
        raise DataError(f"PCA with {n_components} components needs at least that many columns, got {p}")
    try:
        _, s, vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    W = vt[:n_components].T.copy()
    for k in range(n_components):
        if W[np.argmax(np.abs(W[:, k])), k] < 0:
            W[:, k] = -W[:, k]
    ev = s[:n_components] ** 2 / max(n - 1, 1)
    return PcaLoadings(W, ev)


def transform(pca: PcaLoadings, X_scaled) -> np.ndarray:
    return np.atleast_2d(np.asarray(X_scaled, dtype=float)) @ pca.W


@dataclass(frozen=True)
class RegressionModel:
    """``intercept[t]`` and ``coef[:, t]`` for each target ``t``."""

    intercept: np.ndarray
    coef: np.ndarray  # K x T

    def predict_raw(self, Z) -> np.ndarray:
        return self.intercept + np.atleast_2d(Z) @ self.coef


def fit_regression(Z, Y) -> RegressionModel:
    """Least squares on ``[1 | Z]`` for every column of ``Y``.

    Uses an SVD-based solver, so rank-deficient designs get the minimum-norm
    solution.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.asarray(Y, dtype=float)
    one_d = Y.ndim == 1
    Y = Y.reshape(Z.shape[0], -1)
    n, k = Z.shape
    if n <= k + 1:
        raise DataError(f"regression on {k} scores needs more than {k + 1} rows, got {n}")
    A = np.column_stack([np.ones(n), Z])
    try:
        beta, *_ = np.linalg.lstsq(A, Y, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"least squares failed: {exc}") from exc
    if not np.all(np.isfinite(beta)):
        raise NumericalError("least squares produced non-finite coefficients")
    intercept, coef = beta[0], beta[1:]
    if one_d:
        intercept, coef = intercept[0], coef[:, 0]
    return RegressionModel(np.asarray(intercept), coef)


@dataclass(frozen=True)
class FittedPipeline:
    columns: list
    column_signals: list
    standardizer: Standardizer
    pca: PcaLoadings
    regression: RegressionModel
    targets: tuple = TARGETS
    scope: str = "pooled"
    subject_id: str | None = None
    split_seed: int = 0
    config: dict = field(default_factory=dict)

    def scores(self, X) -> np.ndarray:
        return transform(self.pca, apply_standardizer(self.standardizer, X))

    def predict_raw(self, X) -> np.ndarray:
        return self.regression.predict_raw(self.scores(X))


def fit_pipeline(train: FeatureMatrix, n_components: int = 3, *, scope: str = "pooled",
                 subject_id: str | None = None, split_seed: int = 0, config=None) -> FittedPipeline:
    std = fit_standardizer(train.X)
    Xs = apply_standardizer(std, train.X)
    pca = fit_pca(Xs, n_components)
    reg = fit_regression(transform(pca, Xs), train.Y)
    return FittedPipeline(list(train.columns), list(train.column_signals), std, pca, reg,
                          TARGETS, scope, subject_id, split_seed, dict(config or {}))


@dataclass(frozen=True)
class Prediction:
    raw: np.ndarray  # n x T, before clamping
    clamped: np.ndarray

    @property
    def was_clamped(self) -> np.ndarray:
        return self.raw < 0


def predict(pipeline: FittedPipeline, rows: FeatureMatrix) -> Prediction:
    """Per-target estimates in grams, clamped at 0."""
    if list(rows.columns) != list(pipeline.columns):
        raise DataError("feature columns do not match the fitted pipeline schema")
    raw = pipeline.predict_raw(rows.X).reshape(len(rows), -1)
    return Prediction(raw, np.maximum(raw, 0.0))


# --------------------------------------------------------------------------
# persistence

def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def pipeline_to_dict(p: FittedPipeline) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "scope": p.scope,
        "subject_id": p.subject_id,
        "split_seed": p.split_seed,
        "targets": list(p.targets),
        "config": p.config,
        "columns": list(p.columns),
        "column_signals": list(p.column_signals),
        "n_columns": len(p.columns),
        "n_components": p.pca.n_components,
        "standardizer": {"mu": _floats(p.standardizer.mu), "sigma": _floats(p.standardizer.sigma)},
        "pca": {"W": _floats(p.pca.W), "explained_variance": _floats(p.pca.explained_variance)},
        "regression": {"intercept": _floats(p.regression.intercept), "coef": _floats(p.regression.coef)},
    }


def pipeline_from_dict(d: dict) -> FittedPipeline:
    if d.get("format") != FORMAT_NAME:
        raise PipelineFormatError("not a mealmeter pipeline file")
    if d.get("version") != FORMAT_VERSION:
        raise PipelineFormatError(f"unsupported pipeline version {d.get('version')} (expected {FORMAT_VERSION})")
    try:
        p, k = d["n_columns"], d["n_components"]
        mu = np.array(d["standardizer"]["mu"], dtype=float)
        sigma = np.array(d["standardizer"]["sigma"], dtype=float)
        W = np.array(d["pca"]["W"], dtype=float).reshape(p, k)
        ev = np.array(d["pca"]["explained_variance"], dtype=float)
        intercept = np.array(d["regression"]["intercept"], dtype=float)
        coef = np.array(d["regression"]["coef"], dtype=float).reshape(k, -1)
        if mu.size != p or sigma.size != p or len(d["columns"]) != p:
            raise ValueError("column count mismatch")
        return FittedPipeline(
            list(d["columns"]), list(d["column_signals"]), Standardizer(mu, sigma), PcaLoadings(W, ev),
            RegressionModel(intercept, coef), tuple(d["targets"]), d["scope"], d["subject_id"],
            d["split_seed"], d["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineFormatError(f"corrupted pipeline file: {exc}") from None


def save_pipeline(p: FittedPipeline, path) -> None:
    """JSON artifact; floats are written with shortest round-trip repr."""
    Path(path).write_text(json.dumps(pipeline_to_dict(p), indent=1) + "\n")


def load_pipeline(path) -> FittedPipeline:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PipelineFormatError(f"{path}: unreadable pipeline file ({exc})") from None
    if not isinstance(d, dict):
        raise PipelineFormatError(f"{path}: not a pipeline file")
    return pipeline_from_dict(d)
