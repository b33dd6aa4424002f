"""Gaussian-kernel AUC features of the post-meal glucose curve with a linear head.

Stand-in for the kernel-AUC baseline: five Gaussian kernels at equidistant
centres over the post-meal window weight the glucose trace, and the weighted
areas feed the same least-squares backend as the main pipeline (no PCA).
Outputs are labelled "huo" / "Huo-style features + linear head".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import FeatureMatrix
from .model import RegressionModel, fit_regression
from .preprocess import SignalName

METHOD_LABEL = "Huo-style features + linear head"


@dataclass(frozen=True)
class KernelBank:
    """Kernel centres and bandwidth, in seconds from the start of the window."""

    centers: np.ndarray
    bandwidth: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("need at least one kernel centre")
        if c.size > 1:
            steps = np.diff(c)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("kernel centres must be strictly increasing and equidistant")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "centers", c)

    @classmethod
    def for_window(cls, n_samples: int, rate: float, n_kernels: int = 5,
                   bandwidth: float | None = None) -> "KernelBank":
        """Centres at the midpoints of ``n_kernels`` equal slices of the sampled span.

        The default bandwidth is half the centre spacing.
        """
        span = (n_samples - 1) / rate
        spacing = span / n_kernels
        centers = (np.arange(n_kernels) + 0.5) * spacing
        return cls(centers, spacing / 2 if bandwidth is None else bandwidth)


def kernel_weights(bank: KernelBank, n_samples: int, rate: float) -> np.ndarray:
    """``(n_kernels, n_samples)`` matrix of kernel values times trapezoid weights."""
    t = np.arange(n_samples) / rate
    K = np.exp(-0.5 * ((t[None, :] - bank.centers[:, None]) / bank.bandwidth) ** 2)
    dt = np.full(n_samples, 1.0 / rate)
    dt[0] = dt[-1] = 0.5 / rate
    return K * dt


def gaussian_auc_features(bgl_post, bank: KernelBank, rate: float = 8.0,
                          expected_len: int | None = None) -> np.ndarray:
    g = np.asarray(bgl_post, dtype=float)
    if expected_len is not None and g.size != expected_len:
        raise DataError(f"post-meal glucose segment has {g.size} samples, expected {expected_len}")
    if g.size < 2:
        raise DataError("post-meal glucose segment too short")
    return kernel_weights(bank, g.size, rate) @ g


def build_baseline_matrix(windows, rate: float = 8.0, bank: KernelBank | None = None,
                          expected_len: int | None = None) -> FeatureMatrix:
    windows = sorted(windows, key=lambda w: (w.meal.subject_id, w.meal.timestamp))
    if not windows:
        raise DataError("no meal windows to featurize")
    n = expected_len or windows[0].segments[SignalName.BGL_POST].size
    bank = bank or KernelBank.for_window(n, rate)
    weights = kernel_weights(bank, n, rate)
    X = np.zeros((len(windows), bank.centers.size))
    for i, w in enumerate(windows):
        seg = np.asarray(w.segments[SignalName.BGL_POST], dtype=float)
        if seg.size != n:
            raise DataError(f"post-meal glucose segment has {seg.size} samples, expected {n}")
        X[i] = weights @ seg
    cols = [f"BGL_POST_GAUSS_AUC_{m + 1}" for m in range(bank.centers.size)]
    keys = [(w.meal.subject_id, w.meal.timestamp) for w in windows]
    Y = np.array([w.meal.targets for w in windows], dtype=float)
    meta = {"method": "huo", "centers_s": bank.centers.tolist(), "bandwidth_s": bank.bandwidth}
    return FeatureMatrix(keys, cols, [SignalName.BGL_POST.value] * len(cols), X, Y, meta)


def fit_baseline(train: FeatureMatrix) -> RegressionModel:
    return fit_regression(train.X, train.Y)


def predict_baseline(model: RegressionModel, rows: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """``(raw, clamped)`` per-target estimates."""
    raw = model.predict_raw(rows.X).reshape(len(rows), -1)
    return raw, np.maximum(raw, 0.0)
