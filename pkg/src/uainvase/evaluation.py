"""
Query-rate evaluation: ranking metrics, query strategies, corrected-metric
curves, gain tables and the plot-ready exports for uncertainty bands and
the bias-versus-log-variance scatter.

A *query* hands one test sample to an error-free expert. Its score is then
replaced by the true label, so the sample stays in the metric with zero error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError, UsageError
from .invase import predict

STRATEGIES = ("oracle", "random", "uncertainty")
STRATEGY_LABELS = {"oracle": "Oracle", "random": "w/o Uncertainty", "uncertainty": "Ours"}
METRICS = ("bias", "auc_roc", "auc_pr")
TABLE_RATES = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
DEFAULT_RATES = (0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5,
                 0.6, 0.7, 0.8, 0.9, 1.0)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC-ROC needs both classes")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Average precision over positives ranked by descending score.

    Equal scores keep their original order (lower index ranks first).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = (labels[order] == 1).astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits == 1].sum() / n_pos)


def mean_squared_bias(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    return float(np.mean((np.asarray(labels) - scores) ** 2))


METRIC_FUNCTIONS = {"bias": mean_squared_bias, "auc_roc": auc_roc, "auc_pr": auc_pr}


@dataclass(frozen=True)
class PredictionSet:
    score: np.ndarray
    uncertainty: np.ndarray
    labels: np.ndarray
    resample: int = 0

    def __post_init__(self):
        n = len(self.labels)
        if len(self.score) != n or len(self.uncertainty) != n:
            raise UsageError("score, uncertainty and labels must have equal length")
        if not (np.all(np.isfinite(self.score)) and np.all(np.isfinite(self.uncertainty))):
            raise UsageError("predictions must be finite")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise UsageError("labels must be 0 or 1")
        if np.any(self.uncertainty <= 0):
            raise UsageError("uncertainty scores must be positive")

    @property
    def n(self) -> int:
        return len(self.labels)

    @classmethod
    def from_model(cls, model, dataset, resample: int = 0) -> "PredictionSet":
        pred = predict(model, dataset.features)
        return cls(pred.score, pred.uncertainty, dataset.labels, resample)


def query_order(strategy: str, predset: PredictionSet, rng=None):
    """Permutation of test indices in the order they are queried."""
    if predset.n == 0:
        raise UsageError("cannot order an empty prediction set")
    if strategy == "oracle":
        key = (predset.labels - predset.score) ** 2
    elif strategy == "uncertainty":
        key = predset.uncertainty
    elif strategy == "random":
        return np.random.default_rng(rng).permutation(predset.n)
    else:
        raise UsageError(f"unknown strategy {strategy!r}")
    return np.argsort(-key, kind="stable")


def query_count(rate: float, n: int) -> int:
    # round away float noise such as 0.07 * 100 = 7.000000000000001
    return min(n, math.ceil(round(rate * n, 9)))


@dataclass(frozen=True)
class QueryCurve:
    strategy: str
    metric: str
    rates: np.ndarray
    values: np.ndarray  # (runs, rates)

    @property
    def mean(self):
        return self.values.mean(axis=0)

    @property
    def std(self):
        return self.values.std(axis=0)

    def at(self, rate: float) -> float:
        hits = np.flatnonzero(np.isclose(self.rates, rate, rtol=0, atol=1e-12))
        if len(hits) == 0:
            raise UsageError(f"rate {rate} not on this curve")
        return float(self.mean[hits[0]])


def _check_rates(rates):
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim != 1 or np.any(rates < 0) or np.any(rates > 1):
        raise UsageError("rates must be a list of values in [0, 1]")
    return rates


def query_curve(predset: PredictionSet, order, rates, metric: str, strategy: str = "") -> QueryCurve:
    """Metric after correcting the first ``ceil(q * n)`` samples of ``order``."""
    rates = _check_rates(rates)
    fn = METRIC_FUNCTIONS[metric]
    values = []
    for q in rates:
        corrected = predset.score.copy()
        queried = order[: query_count(q, predset.n)]
        corrected[queried] = predset.labels[queried]
        values.append(fn(corrected, predset.labels))
    return QueryCurve(strategy, metric, rates, np.array([values]))


def strategy_curve(strategy, predset, rates, metric, rng=None, n_random=10) -> QueryCurve:
    """One-run curve for ``strategy``; random curves average ``n_random`` shuffles."""
    if strategy != "random":
        return query_curve(predset, query_order(strategy, predset), rates, metric, strategy)
    rng = np.random.default_rng(rng)
    runs = [
        query_curve(predset, query_order("random", predset, rng), rates, metric).values[0]
        for _ in range(n_random)
    ]
    return QueryCurve("random", metric, _check_rates(rates), np.mean(runs, axis=0, keepdims=True))


def stack_curves(curves) -> QueryCurve:
    """Merge per-resample curves of one strategy and metric."""
    first = curves[0]
    for c in curves[1:]:
        if c.strategy != first.strategy or c.metric != first.metric or not np.array_equal(c.rates, first.rates):
            raise UsageError("curves to stack must share strategy, metric and rates")
    return QueryCurve(first.strategy, first.metric, first.rates,
                      np.vstack([c.values for c in curves]))


def evaluate(predsets, rates=DEFAULT_RATES, strategies=STRATEGIES, metrics=METRICS,
             seed: int = 0, n_random: int = 10) -> dict:
    """Curves for every ``(strategy, metric)`` pair across prediction sets.

    Random shuffles for resample ``k`` are seeded with ``(seed, k)``.
    """
    out = {}
    for metric in metrics:
        for strategy in strategies:
            runs = [
                strategy_curve(strategy, ps, rates, metric,
                               rng=np.random.default_rng([seed, ps.resample]), n_random=n_random)
                for ps in predsets
            ]
            out[strategy, metric] = stack_curves(runs)
    return out


@dataclass(frozen=True)
class GainTable:
    metric: str
    strategies: tuple
    rates: tuple
    gains: np.ndarray  # percentage points, (strategies, rates)
    base_value: float

    def gain(self, strategy: str, rate: float) -> float:
        i = self.strategies.index(strategy)
        j = int(np.flatnonzero(np.isclose(self.rates, rate, rtol=0, atol=1e-12))[0])
        return float(self.gains[i, j])

    def rows(self):
        header = ["method"] + [f"{100 * r:g}%" for r in self.rates]
        body = [
            [STRATEGY_LABELS.get(s, s)] + [f"{g:.2f}" for g in self.gains[i]]
            for i, s in enumerate(self.strategies)
        ]
        return header, body

    def to_csv(self, path) -> None:
        header, body = self.rows()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(body)

    def to_json(self, path) -> None:
        doc = {
            "metric": self.metric,
            "base_value_percent": 100 * self.base_value,
            "rates": list(self.rates),
            "gains": {s: self.gains[i].tolist() for i, s in enumerate(self.strategies)},
        }
        Path(path).write_text(json.dumps(doc, indent=2))


def gain_table(curves, rates=TABLE_RATES) -> GainTable:
    """Mean gain over resamples, in percentage points, relative to rate 0.

    For AUC metrics the gain is ``metric(q) - metric(0)``; for the bias it is
    the reduction ``bias(0) - bias(q)``. Curves must share metric and rates and
    include rate 0.
    """
    curves = list(curves)
    first = curves[0]
    for c in curves[1:]:
        if c.metric != first.metric or not np.array_equal(c.rates, first.rates):
            raise UsageError("curves in one table must share metric and rates")
    sign = -1.0 if first.metric == "bias" else 1.0
    zero = first.at(0.0)
    gains = []
    for c in curves:
        base = c.values[:, np.flatnonzero(c.rates == 0)[0]]
        row = []
        for q in rates:
            j = np.flatnonzero(np.isclose(c.rates, q, rtol=0, atol=1e-12))
            if len(j) == 0:
                raise UsageError(f"rate {q} missing from the curves")
            row.append(100.0 * sign * float(np.mean(c.values[:, j[0]] - base)))
        gains.append(row)
    return GainTable(first.metric, tuple(c.strategy for c in curves), tuple(rates),
                     np.array(gains), zero)


def write_curves_csv(curves, path) -> None:
    """Long-format curve file: ``strategy, metric, rate, mean, std``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "metric", "rate", "mean", "std"])
        for c in curves:
            for r, m, s in zip(c.rates, c.mean, c.std):
                writer.writerow([c.strategy, c.metric, repr(float(r)), repr(float(m)), repr(float(s))])


BAND_COLUMNS = ("kind", "feature_value", "mu", "lower", "upper", "sigma", "label")


def uncertainty_band_export(model, test, feature_index: int, train=None, scale=None):
    """Rows for a mean +- one-sigma band along one feature.

    Test rows are sorted by feature value and carry ``mu``, ``mu - sigma``,
    ``mu + sigma`` and ``sigma``. Training rows (``kind == "train"``) give the
    label scatter for the same feature. ``scale=(means, stds)`` maps
    standardized values back to raw units.
    """
    if not 0 <= feature_index < test.d:
        raise UsageError(f"feature index {feature_index} outside [0, {test.d})")

    def raw(values):
        if scale is None:
            return values
        means, stds = scale
        return values * (stds[feature_index] if stds[feature_index] > 0 else 1.0) + means[feature_index]

    pred = predict(model, test.features)
    sigma = np.sqrt(pred.uncertainty)
    x = raw(test.features[:, feature_index])
    rows = []
    for i in np.argsort(x, kind="stable"):
        mu = float(pred.score[i])
        rows.append(("test", float(x[i]), mu, mu - sigma[i], mu + sigma[i], float(sigma[i]),
                     float(test.labels[i])))
    if train is not None:
        xt = raw(train.features[:, feature_index])
        for i in np.argsort(xt, kind="stable"):
            rows.append(("train", float(xt[i]), None, None, None, None, float(train.labels[i])))
    return rows


def mixed_label_region(values, labels):
    """Interval where both classes occur: overlap of the per-class ranges."""
    values = np.asarray(values)
    labels = np.asarray(labels)
    a, b = values[labels == 0], values[labels == 1]
    return max(a.min(), b.min()), min(a.max(), b.max())


def bias_vs_logvar_export(model, test):
    """``(logvar, squared bias)`` per test sample."""
    pred = predict(model, test.features)
    sq_bias = (test.labels - pred.score) ** 2
    return [(float(lv), float(b)) for lv, b in zip(pred.gaussian.logvar, sq_bias)]


def pearson(rows) -> float:
    a = np.asarray(rows, dtype=np.float64)
    if a[:, 0].std() == 0 or a[:, 1].std() == 0:
        return 0.0
    return float(np.corrcoef(a[:, 0], a[:, 1])[0, 1])


def write_rows_csv(rows, header, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
