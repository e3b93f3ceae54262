import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import auc_pr_ranks, auc_roc_pairs, best_k_bias
from uainvase.data import gen_synthetic, standardize
from uainvase.errors import UndefinedMetricError, UsageError
from uainvase.evaluation import (
    PredictionSet,
    QueryCurve,
    auc_pr,
    auc_roc,
    bias_vs_logvar_export,
    evaluate,
    gain_table,
    mixed_label_region,
    pearson,
    query_count,
    query_curve,
    query_order,
    strategy_curve,
    uncertainty_band_export,
    write_rows_csv,
    BAND_COLUMNS,
)
from uainvase.invase import LOGVAR_MAX, LOGVAR_MIN, TrainingConfig, train


def predset(score, labels, unc=None, resample=0):
    score = np.asarray(score, dtype=float)
    unc = np.ones_like(score) if unc is None else np.asarray(unc, dtype=float)
    return PredictionSet(score, unc, np.asarray(labels, dtype=float), resample)


class TestAucRoc:
    def test_perfect(self):
        assert auc_roc([0.1, 0.9], [0, 1]) == 1.0

    def test_inverted(self):
        assert auc_roc([0.9, 0.1], [0, 1]) == 0.0

    def test_pairwise_example(self):
        assert auc_roc([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == 0.75
        assert auc_roc_pairs([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == 0.75

    def test_all_tied(self):
        assert auc_roc([0.3, 0.3, 0.3], [0, 1, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc_roc([0.1, 0.2], [1, 1])


class TestAucPr:
    def test_top_positive(self):
        assert auc_pr([0.1, 0.9], [0, 1]) == 1.0

    def test_all_positive(self):
        assert auc_pr([0.3, -2.0, 7.0], [1, 1, 1]) == 1.0

    def test_rank_example(self):
        assert auc_pr([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)
        assert auc_pr_ranks([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == pytest.approx(0.8333, abs=1e-4)

    def test_ties_broken_by_index(self):
        # index 0 (negative) outranks index 1 (positive) on a tie
        assert auc_pr([0.5, 0.5], [0, 1]) == 0.5
        assert auc_pr([0.5, 0.5], [1, 0]) == 1.0

    def test_no_positive(self):
        with pytest.raises(UndefinedMetricError):
            auc_pr([0.1, 0.2], [0, 0])


def random_instances(count, seed, max_size=8):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, max_size + 1))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[int(rng.integers(n))] ^= 1
        # coarse grid forces plenty of ties
        scores = rng.integers(0, 4, n) / 4.0
        yield scores, labels


def test_metrics_match_brute_force():
    for scores, labels in random_instances(1000, seed=0):
        assert auc_roc(scores, labels) == auc_roc_pairs(scores, labels)
        assert auc_pr(scores, labels) == pytest.approx(auc_pr_ranks(scores, labels), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_metrics_property(data):
    n = data.draw(st.integers(2, 8))
    labels = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < n))
    scores = data.draw(st.lists(st.sampled_from([-1.0, 0.0, 0.25, 0.5, 1.0, 3.0]), min_size=n, max_size=n))
    assert auc_roc(scores, labels) == auc_roc_pairs(scores, labels)
    assert auc_pr(scores, labels) == pytest.approx(auc_pr_ranks(scores, labels), abs=1e-15)


class TestQueryOrder:
    def test_oracle(self):
        ps = predset([0.9, 0.1, 0.5], [0, 0, 1])
        assert query_order("oracle", ps).tolist() == [0, 2, 1]

    def test_uncertainty(self):
        ps = predset([0, 0, 0], [0, 1, 0], unc=[3, 1, 2])
        assert query_order("uncertainty", ps).tolist() == [0, 2, 1]

    def test_uncertainty_ties_by_index(self):
        ps = predset([0, 0, 0, 0], [0, 1, 0, 1], unc=[1, 2, 2, 1])
        assert query_order("uncertainty", ps).tolist() == [1, 2, 0, 3]

    def test_random_seeded(self):
        ps = predset(np.zeros(20), np.arange(20) % 2)
        a = query_order("random", ps, np.random.default_rng(4))
        b = query_order("random", ps, np.random.default_rng(4))
        assert a.tolist() == b.tolist()
        assert sorted(a.tolist()) == list(range(20))

    def test_unknown(self):
        with pytest.raises(UsageError):
            query_order("greedy", predset([0.1], [1]))


class TestQueryCurve:
    def test_count_rounds_up(self):
        assert query_count(0.001, 114) == 1
        assert query_count(0.07, 100) == 7
        assert query_count(0.2, 114) == 23
        assert query_count(0.0, 5) == 0
        assert query_count(1.0, 5) == 5

    def test_rate_zero_is_raw(self):
        ps = predset([0.2, 0.7, 0.4], [0, 1, 1])
        order = query_order("oracle", ps)
        for metric, expected in [
            ("bias", np.mean([0.04, 0.09, 0.36])),
            ("auc_roc", auc_roc(ps.score, ps.labels)),
            ("auc_pr", auc_pr(ps.score, ps.labels)),
        ]:
            curve = query_curve(ps, order, [0.0], metric)
            assert curve.values[0, 0] == pytest.approx(expected, abs=1e-15)

    def test_rate_one_saturates(self):
        ps = predset([0.9, 0.2, 0.6, 0.3], [0, 1, 0, 1])
        order = query_order("random", ps, 0)
        assert query_curve(ps, order, [1.0], "bias").values[0, 0] == 0.0
        assert query_curve(ps, order, [1.0], "auc_roc").values[0, 0] == 1.0
        assert query_curve(ps, order, [1.0], "auc_pr").values[0, 0] == 1.0

    def test_bad_rates(self):
        ps = predset([0.5], [1])
        with pytest.raises(UsageError):
            query_curve(ps, [0], [1.5], "bias")

    def test_exhaustive_small_predsets(self):
        """Monotone bias for every strategy; oracle hits the best-k optimum."""
        rng = np.random.default_rng(0)
        grid = np.array([0.0, 0.3, 0.5, 1.0])
        for n in range(1, 7):
            for _ in range(40):
                labels = rng.integers(0, 2, n)
                score = rng.choice(grid, n)
                unc = rng.choice([0.5, 1.0, 2.0], n)
                ps = predset(score, labels, unc)
                rates = np.arange(n + 1) / n
                curves = {
                    s: query_curve(ps, query_order(s, ps, rng), rates, "bias").values[0]
                    for s in ("oracle", "random", "uncertainty")
                }
                for values in curves.values():
                    assert np.all(np.diff(values) <= 1e-15)
                for k, rate in enumerate(rates):
                    assert curves["oracle"][k] == pytest.approx(best_k_bias(labels, score, query_count(rate, n)), abs=1e-12)
                    assert curves["oracle"][k] <= min(curves["random"][k], curves["uncertainty"][k]) + 1e-15

    def test_uncertainty_vs_random_reported(self):
        # empirical only: informative uncertainty usually beats random
        rng = np.random.default_rng(1)
        wins = 0
        for _ in range(200):
            labels = rng.integers(0, 2, 6)
            noise = rng.uniform(0, 0.6, 6)
            score = np.abs(labels - noise)
            ps = predset(score, labels, unc=noise**2 + 1e-3)
            u = query_curve(ps, query_order("uncertainty", ps), [0.5], "bias").values[0, 0]
            r = strategy_curve("random", ps, [0.5], "bias", rng=rng).values[0, 0]
            wins += u <= r + 1e-15
        print(f"uncertainty <= random on {wins}/200 predsets")
        assert wins == 200  # uncertainty equals squared error here


def test_random_strategy_averages_shuffles():
    ps = predset([0.0, 1.0, 0.0, 1.0], [1, 1, 0, 0])
    one = strategy_curve("random", ps, [0.5], "bias", rng=0, n_random=1).values
    many = strategy_curve("random", ps, [0.5], "bias", rng=0, n_random=200).values
    assert many.shape == (1, 1)
    assert abs(many[0, 0] - 0.25) < 0.05  # expected residual is half the errors
    assert one[0, 0] in (0.0, 0.25, 0.5)


class TestGainTable:
    def curves(self):
        rates = np.array([0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0])
        rng = np.random.default_rng(2)
        sets = []
        for k in range(3):
            labels = rng.integers(0, 2, 40)
            labels[:2] = [0, 1]
            score = np.clip(labels + rng.normal(0, 0.4, 40), -0.5, 1.5)
            sets.append(predset(score, labels, unc=rng.uniform(0.1, 1, 40), resample=k))
        return evaluate(sets, rates=rates, seed=0, n_random=3)

    def test_zero_rate_gain(self):
        c = self.curves()
        for metric in ("auc_roc", "auc_pr", "bias"):
            table = gain_table([c[s, metric] for s in ("oracle", "random", "uncertainty")], rates=[0.0, 0.5])
            np.testing.assert_array_equal(table.gains[:, 0], 0.0)

    def test_saturation_identity(self):
        c = self.curves()
        for metric in ("auc_roc", "auc_pr"):
            table = gain_table([c["oracle", metric]], rates=[1.0])
            assert table.gain("oracle", 1.0) == pytest.approx(100 * (1 - table.base_value), abs=1e-12)

    def test_oracle_saturates_before_rate_one(self):
        # 2 of 10 scores are wrong, so correcting the worst 20% already ranks perfectly
        labels = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1], dtype=float)
        score = np.array([0.1, 0.2, 0.9, 0.1, 0.3, 0.8, 0.7, 0.2, 0.9, 0.6])
        ps = PredictionSet(score, np.ones(10), labels, 0)
        c = evaluate([ps], rates=(0.0, 0.1, 0.2, 0.5), strategies=("oracle",))
        for metric in ("auc_roc", "auc_pr"):
            table = gain_table([c["oracle", metric]], rates=[0.1, 0.2, 0.5])
            assert table.base_value < 1
            assert table.gain("oracle", 0.1) < 100 * (1 - table.base_value)
            assert table.gain("oracle", 0.2) == pytest.approx(100 * (1 - table.base_value), abs=1e-12)
            assert table.gain("oracle", 0.5) == table.gain("oracle", 0.2)

    def test_bias_gain_non_decreasing(self):
        c = self.curves()
        rates = (0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0)
        table = gain_table([c[s, "bias"] for s in ("oracle", "random", "uncertainty")], rates=rates)
        assert np.all(np.diff(table.gains, axis=1) >= -1e-12)

    def test_mismatched(self):
        c = self.curves()
        with pytest.raises(UsageError):
            gain_table([c["oracle", "auc_roc"], c["oracle", "auc_pr"]])

    def test_csv_layout(self, tmp_path):
        c = self.curves()
        table = gain_table([c[s, "auc_roc"] for s in ("oracle", "random", "uncertainty")])
        path = tmp_path / "t.csv"
        table.to_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["method", "0.1%", "0.5%", "1%", "5%", "10%", "50%"]
        assert [r[0] for r in rows[1:]] == ["Oracle", "w/o Uncertainty", "Ours"]


def test_curve_mean_and_std():
    c = QueryCurve("oracle", "bias", np.array([0.0, 1.0]), np.array([[1.0, 0.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(c.mean, [2.0, 0.0])
    np.testing.assert_array_equal(c.std, [1.0, 0.0])
    assert c.at(0.0) == 2.0


@pytest.fixture(scope="module")
def fitted():
    raw = gen_synthetic(300, 4, {0}, noise_std=0.5, seed=0)
    tr, te = raw.subset(np.arange(240)), raw.subset(np.arange(240, 300))
    tr, te, means, stds = standardize(tr, te)
    model = train(tr, TrainingConfig(iterations=300, hidden=16))
    return model, tr, te, (means, stds)


class TestExports:

    def test_band_rows(self, fitted):
        model, tr, te, scale = fitted
        rows = uncertainty_band_export(model, te, 0, train=tr, scale=scale)
        test_rows = [r for r in rows if r[0] == "test"]
        assert len(test_rows) == te.n
        assert len(rows) == te.n + tr.n
        xs = [r[1] for r in test_rows]
        assert xs == sorted(xs)
        for _, _, mu, lo, hi, sigma, _ in test_rows:
            assert hi - mu == pytest.approx(sigma) and mu - lo == pytest.approx(sigma)

    def test_band_sigma_is_sqrt_variance(self, fitted):
        model, _, te, _ = fitted
        from uainvase.invase import predict

        rows = uncertainty_band_export(model, te, 2)
        pred = predict(model, te.features)
        order = np.argsort(te.features[:, 2], kind="stable")
        np.testing.assert_allclose([r[5] for r in rows], np.sqrt(pred.uncertainty[order]))

    def test_band_deterministic(self, fitted, tmp_path):
        model, tr, te, scale = fitted
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_rows_csv(uncertainty_band_export(model, te, 1, tr, scale), BAND_COLUMNS, a)
        write_rows_csv(uncertainty_band_export(model, te, 1, tr, scale), BAND_COLUMNS, b)
        assert a.read_bytes() == b.read_bytes()

    def test_band_bad_index(self, fitted):
        model, _, te, _ = fitted
        with pytest.raises(UsageError):
            uncertainty_band_export(model, te, 4)

    def test_bias_vs_logvar(self, fitted):
        model, _, te, _ = fitted
        rows = bias_vs_logvar_export(model, te)
        assert len(rows) == te.n
        assert all(LOGVAR_MIN <= lv <= LOGVAR_MAX for lv, _ in rows)
        assert -1 <= pearson(rows) <= 1


def test_mixed_label_region():
    lo, hi = mixed_label_region([1, 2, 3, 4, 5, 6], [0, 0, 1, 0, 1, 1])
    assert (lo, hi) == (3, 4)


def test_predictionset_validation():
    with pytest.raises(UsageError):
        predset([0.1, 0.2], [0, 2])
    with pytest.raises(UsageError):
        predset([0.1], [1], unc=[0.0])
