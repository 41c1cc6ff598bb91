"""Canonical HRF, BOLD regressors, and the T x 6 session design matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

from .errors import MrvoxError, RankDeficientDesignError

if TYPE_CHECKING:
    from .dataset import BlockDesign


@dataclass(frozen=True)
class HrfSpec:
    """Double-gamma impulse response (SPM canonical parameterization)."""

    peak_shape: float = 6.0
    undershoot_shape: float = 16.0
    peak_scale: float = 1.0
    undershoot_scale: float = 1.0
    undershoot_ratio: float = 1.0 / 6.0
    support_seconds: float = 32.0

    def __post_init__(self):
        vals = (self.peak_shape, self.undershoot_shape, self.peak_scale,
                self.undershoot_scale, self.undershoot_ratio, self.support_seconds)
        if any(v <= 0 for v in vals):
            raise MrvoxError("HrfSpec fields must be positive")
        if self.peak_shape >= self.undershoot_shape:
            raise MrvoxError("peak shape must precede undershoot shape")


@dataclass(frozen=True)
class Regressors:
    """Task and rest BOLD regressors over the scan grid."""

    x1: np.ndarray
    x2: np.ndarray


def canonical_hrf(tr_seconds: float, spec: HrfSpec | None = None) -> np.ndarray:
    """Sample the double-gamma HRF at 0, tr, 2*tr, ... up to its support.

    The response is a gamma density minus a scaled undershoot gamma density,
    normalized so its maximum is 1.
    """
    if tr_seconds <= 0:
        raise MrvoxError("tr_seconds must be positive")
    spec = spec or HrfSpec()
    t = np.arange(0.0, spec.support_seconds + 1e-9, tr_seconds)
    h = (stats.gamma.pdf(t, spec.peak_shape, scale=spec.peak_scale)
         - spec.undershoot_ratio
         * stats.gamma.pdf(t, spec.undershoot_shape, scale=spec.undershoot_scale))
    return h / np.max(h)


def bold_regressor(h: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Causal truncated convolution of the HRF with a stimulus indicator.

    x(t) = sum_{k=0}^{t-1} h(k) s(t-k), all indices within the scan axis.
    """
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.convolve(s, h)[: s.size]


def design_matrix(design: "BlockDesign", hrf: np.ndarray) -> np.ndarray:
    """Build the T x 6 design matrix for a three-session block experiment.

    Columns: intercept, session-1 indicator, session-2 indicator (session 3
    is the baseline), within-session time scaled to [0, 1), task regressor
    X1, rest regressor X2.
    """
    T = design.n_scans
    if len(design.sessions) != 3:
        raise MrvoxError("design_matrix expects exactly three sessions")
    X = np.zeros((T, 6))
    X[:, 0] = 1.0
    for k, (start, end) in enumerate(design.sessions):
        idx = np.arange(start - 1, end)
        if k < 2:
            X[idx, 1 + k] = 1.0
        X[idx, 3] = (idx - (start - 1)) / float(end - start + 1)
    s1 = np.asarray(design.task_indicator, dtype=float)
    X[:, 4] = bold_regressor(hrf, s1)
    X[:, 5] = bold_regressor(hrf, 1.0 - s1)
    if np.linalg.matrix_rank(X) < 6:
        raise RankDeficientDesignError("design matrix is rank deficient")
    return X
