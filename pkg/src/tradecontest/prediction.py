"""Prediction stage: window features, utility forecasts, rank IC tooling.

Features are summary statistics of an agent's recent score window. A
predictor maps them to the expected mean and dispersion of the score over
the next few days; utility is the clipped ratio of the two. The module
also houses Spearman rank correlation and the short-versus-long window
momentum validation used to justify the whole approach.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientCrossSectionError,
    InsufficientHistoryError,
    TrainingError,
    UndefinedCorrelationError,
)
from .gbdt import GradientBoostedRegressor
from .market import business_days
from .scoring import ScoreSeries
from .seeding import stream

SIGMA_FLOOR = 1e-4
UTILITY_CLIP = 10.0
MIN_TRAIN_PAIRS = 30


@dataclass(frozen=True)
class FeatureVector:
    """Summary of a trailing score window."""

    mean_m: float
    std_m: float
    last: float
    slope: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_m, self.std_m, self.last, self.slope])


@dataclass(frozen=True)
class UtilityPrediction:
    mu_hat: float
    sigma_hat: float
    utility: float

    def __post_init__(self):
        if self.sigma_hat < SIGMA_FLOOR:
            raise ValueError(f"sigma_hat must be >= {SIGMA_FLOOR}")


def clipped_utility(mu_hat: float, sigma_hat: float) -> UtilityPrediction:
    sigma = max(sigma_hat, SIGMA_FLOOR)
    utility = max(-UTILITY_CLIP, min(UTILITY_CLIP, mu_hat / sigma))
    return UtilityPrediction(mu_hat=mu_hat, sigma_hat=sigma, utility=utility)


def extract_features(series: ScoreSeries, t: dt.date, m: int) -> FeatureVector:
    """Mean, population std, last value and least-squares slope of the
    m-entry window ending at t."""
    if m < 2:
        raise ValueError("window length m must be >= 2")
    values = series.values_until(t)
    if len(values) < m:
        raise InsufficientHistoryError(
            f"{series.agent_id}: need {m} scores at or before {t}, have {len(values)}"
        )
    window = np.asarray(values[-m:], dtype=np.float64)
    return features_from_window(window)


def features_from_window(window: np.ndarray) -> FeatureVector:
    m = window.size
    x = np.arange(m, dtype=np.float64)
    xc = x - x.mean()
    slope = float(np.dot(xc, window - window.mean()) / np.dot(xc, xc))
    return FeatureVector(
        mean_m=float(window.mean()),
        std_m=float(window.std()),
        last=float(window[-1]),
        slope=slope,
    )


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "baseline"  # baseline | gbdt
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("baseline", "gbdt"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.n_trees > 50 or self.n_trees < 1:
            raise ValueError("n_trees must be in [1, 50]")
        if self.max_depth > 3 or self.max_depth < 1:
            raise ValueError("max_depth must be in [1, 3]")


@dataclass
class PredictorModel:
    """Trained utility predictor.

    ``baseline`` is the closed-form window-momentum rule (mu = window
    mean, sigma = window std); ``gbdt`` holds two boosted ensembles, one
    per target. The optional extra feature columns beyond the four window
    statistics are passed straight to the ensembles and ignored by the
    baseline.
    """

    kind: str
    train_window: int = 0
    mu_model: GradientBoostedRegressor | None = None
    sigma_model: GradientBoostedRegressor | None = None

    def predict(self, features: np.ndarray) -> tuple[float, float]:
        mu, sigma = self.predict_batch(np.asarray(features, dtype=np.float64).reshape(1, -1))
        return float(mu[0]), float(sigma[0])

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == "baseline":
            return X[:, 0].copy(), X[:, 1].copy()
        return self.mu_model.predict(X), self.sigma_model.predict(X)

    def to_json(self) -> str:
        payload = {"kind": self.kind, "train_window": self.train_window}
        if self.kind == "gbdt":
            payload["mu_model"] = self.mu_model.to_dict()
            payload["sigma_model"] = self.sigma_model.to_dict()
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "PredictorModel":
        payload = json.loads(blob)
        model = cls(kind=payload["kind"], train_window=int(payload.get("train_window", 0)))
        if model.kind == "gbdt":
            model.mu_model = GradientBoostedRegressor.from_dict(payload["mu_model"])
            model.sigma_model = GradientBoostedRegressor.from_dict(payload["sigma_model"])
        return model


def baseline_model() -> PredictorModel:
    """The untrained closed-form predictor (no fitting required)."""
    return PredictorModel(kind="baseline")


def train(model_spec: PredictorSpec, history) -> PredictorModel:
    """Fit a predictor on (features, (future mean, future std)) pairs.

    ``history`` is a sequence of (FeatureVector | array, (mu, sigma))
    pairs collected from the training period.
    """
    pairs = list(history)
    if len(pairs) < MIN_TRAIN_PAIRS:
        raise TrainingError(
            f"need >= {MIN_TRAIN_PAIRS} training pairs, got {len(pairs)}"
        )
    if model_spec.kind == "baseline":
        return PredictorModel(kind="baseline", train_window=len(pairs))
    X = np.vstack([
        f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=np.float64)
        for f, _ in pairs
    ])
    y_mu = np.array([target[0] for _, target in pairs], dtype=np.float64)
    y_sigma = np.array([target[1] for _, target in pairs], dtype=np.float64)
    mu_model = GradientBoostedRegressor(
        n_trees=model_spec.n_trees, max_depth=model_spec.max_depth,
        learning_rate=model_spec.learning_rate,
    ).fit(X, y_mu)
    sigma_model = GradientBoostedRegressor(
        n_trees=model_spec.n_trees, max_depth=model_spec.max_depth,
        learning_rate=model_spec.learning_rate,
    ).fit(X, y_sigma)
    return PredictorModel(kind="gbdt", train_window=len(pairs),
                          mu_model=mu_model, sigma_model=sigma_model)


def predict_utility(model: PredictorModel, x) -> UtilityPrediction:
    """Risk-adjusted utility forecast from a feature vector."""
    arr = x.as_array() if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    mu, sigma = model.predict(arr)
    return clipped_utility(mu, sigma)


# --- rank IC ----------------------------------------------------------------


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_ic(xs, ys) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("rank correlation undefined for constant input")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


@dataclass(frozen=True)
class MomentumReport:
    """Cross-sectional rank IC of trailing versus forward window means."""

    m: int
    n: int
    M: int
    N: int
    ric_short: float
    ric_long: float
    difference: float
    days_short: int
    days_long: int
    skipped_undefined: int


def _window_ric(scores: np.ndarray, m: int, n: int) -> tuple[list[float], int]:
    """Per-day cross-sectional rank ICs between trailing-m and forward-n
    mean scores. ``scores`` is (agents, days)."""
    n_agents, n_days = scores.shape
    ics: list[float] = []
    skipped = 0
    for i in range(m, n_days - n + 1):
        trailing = scores[:, i - m: i].mean(axis=1)
        forward = scores[:, i: i + n].mean(axis=1)
        try:
            ics.append(rank_ic(trailing, forward))
        except UndefinedCorrelationError:
            skipped += 1
    return ics, skipped


def validate_momentum(series_set: list[ScoreSeries], m: int, n: int,
                      M: int, N: int) -> MomentumReport:
    """Compare short-window and long-window score predictability.

    Builds the (agents, days) score panel on the common dates, computes
    mean cross-sectional rank IC between trailing and forward window
    means for (m, n) and for (M, N), and reports both plus the gap.
    """
    if len(series_set) < 2:
        raise InsufficientCrossSectionError(
            f"need >= 2 score series for cross-sectional ranks, got {len(series_set)}"
        )
    common = set.intersection(*(set(d for d, _ in s.entries) for s in series_set))
    if not common:
        raise InsufficientHistoryError("score series share no dates")
    dates = sorted(common)
    panel = np.array([
        [dict(s.entries)[d] for d in dates] for s in series_set
    ], dtype=np.float64)
    if panel.shape[1] < max(m + n, M + N):
        raise InsufficientHistoryError(
            f"need {max(m + n, M + N)} common days, have {panel.shape[1]}"
        )
    short_ics, short_skip = _window_ric(panel, m, n)
    long_ics, long_skip = _window_ric(panel, M, N)
    if not short_ics or not long_ics:
        raise InsufficientHistoryError("no valid rank IC days in one of the windows")
    ric_short = float(np.mean(short_ics))
    ric_long = float(np.mean(long_ics))
    return MomentumReport(
        m=m, n=n, M=M, N=N,
        ric_short=ric_short, ric_long=ric_long,
        difference=ric_short - ric_long,
        days_short=len(short_ics), days_long=len(long_ics),
        skipped_undefined=short_skip + long_skip,
    )


def ar1_score_panel(n_agents: int, n_days: int, phi: float, seed: int,
                    noise_scale: float = 1.0,
                    start: dt.date = dt.date(2024, 1, 2)) -> list[ScoreSeries]:
    """Independent AR(1) score series per agent, for momentum validation."""
    days = business_days(start, n_days)
    out = []
    for a in range(n_agents):
        rng = stream(seed, "panel", a)
        eps = rng.standard_normal(n_days) * noise_scale
        series = ScoreSeries(agent_id=f"agent{a:03d}")
        q = 0.0
        for i, d in enumerate(days):
            q = phi * q + eps[i]
            series.append(d, float(q))
        out.append(series)
    return out
