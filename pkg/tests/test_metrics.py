import numpy as np
import pytest

from dlrgrid import metrics
from dlrgrid.errors import EmptyCosts, LevelOutOfRange, ZeroNormalizer


def loop_ace(lower, upper, truth, alpha):
    n = 0
    hits = 0
    for i in range(truth.shape[0]):
        for t in range(truth.shape[1]):
            n += 1
            if lower[i, t] <= truth[i, t] <= upper[i, t]:
                hits += 1
    return abs(hits / n - (1 - alpha)) * 100


def loop_pinaw(lower, upper, norm):
    vals = []
    for i in range(lower.shape[0]):
        for t in range(lower.shape[1]):
            vals.append((upper[i, t] - lower[i, t]) / norm[i])
    return float(np.mean(vals)) * 100


def loop_interval_score(lower, upper, truth, alpha, norm):
    vals = []
    for i in range(truth.shape[0]):
        for t in range(truth.shape[1]):
            w = -2 * alpha * (upper[i, t] - lower[i, t])
            if truth[i, t] < lower[i, t]:
                w -= 4 * (lower[i, t] - truth[i, t])
            elif truth[i, t] > upper[i, t]:
                w -= 4 * (truth[i, t] - upper[i, t])
            vals.append(w / norm[i])
    return float(np.mean(vals)) * 100


def loop_quantile_score(values, levels, truth, norm):
    vals = []
    for j, q in enumerate(levels):
        for i in range(truth.shape[0]):
            for t in range(truth.shape[1]):
                err = truth[i, t] - values[i, t, j]
                pin = q * err if err >= 0 else (1 - q) * (-err)
                vals.append(pin / norm[i])
    return float(np.mean(vals)) * 100


def random_instance(rng, n=5, t=4):
    truth = rng.uniform(50, 150, (n, t))
    lower = truth - rng.uniform(0, 30, (n, t))
    upper = truth + rng.uniform(0, 30, (n, t))
    # push some truths outside the band
    mask = rng.random((n, t)) < 0.3
    truth = np.where(mask, upper + rng.uniform(0, 10, (n, t)), truth)
    return lower, upper, truth


def test_ace_trivial_cases():
    lower = np.zeros((2, 5))
    upper = np.full((2, 5), 10.0)
    truth = np.full((2, 5), 5.0)
    iv = metrics.IntervalSet(lower, upper, alpha=0.1)
    assert metrics.ace(iv, truth) == pytest.approx(10.0)
    # exactly 90% inside
    truth10 = np.full((1, 10), 5.0)
    truth10[0, 0] = 99.0
    iv10 = metrics.IntervalSet(np.zeros((1, 10)), np.full((1, 10), 10.0), alpha=0.1)
    assert metrics.ace(iv10, truth10) == pytest.approx(0.0)


def test_ace_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        lower, upper, truth = random_instance(rng)
        iv = metrics.IntervalSet(lower, upper, alpha=0.2)
        assert metrics.ace(iv, truth) == pytest.approx(loop_ace(lower, upper, truth, 0.2), abs=1e-12)


def test_pinaw_trivial_and_oracle():
    same = np.full((2, 3), 7.0)
    iv = metrics.IntervalSet(same, same, alpha=0.1)
    norm = np.array([3.0, 5.0])
    assert metrics.pinaw(iv, norm) == 0.0

    iv2 = metrics.IntervalSet(np.zeros((2, 3)), np.tile(norm[:, None], (1, 3)), alpha=0.1)
    assert metrics.pinaw(iv2, norm) == pytest.approx(100.0)

    rng = np.random.default_rng(1)
    lower, upper, truth = random_instance(rng)
    normr = metrics.per_line_normalizer(truth)
    ivr = metrics.IntervalSet(lower, upper, alpha=0.1)
    assert metrics.pinaw(ivr, normr) == pytest.approx(loop_pinaw(lower, upper, normr), abs=1e-12)


def test_pinaw_zero_normalizer():
    iv = metrics.IntervalSet(np.zeros((1, 2)), np.ones((1, 2)), alpha=0.1)
    with pytest.raises(ZeroNormalizer):
        metrics.pinaw(iv, np.array([0.0]))


def test_interval_score_three_cases_by_hand():
    # inside: alpha=0.2, width=1 -> -0.4
    iv = metrics.IntervalSet(np.array([[0.0]]), np.array([[1.0]]), alpha=0.2)
    pts = metrics.interval_score_points(iv, np.array([[0.5]]))
    assert pts[0, 0] == pytest.approx(-0.4)
    # below lower by 0.5 -> -0.4 - 2.0
    pts = metrics.interval_score_points(iv, np.array([[-0.5]]))
    assert pts[0, 0] == pytest.approx(-2.4)
    # above upper by 0.25 -> -0.4 - 1.0
    pts = metrics.interval_score_points(iv, np.array([[1.25]]))
    assert pts[0, 0] == pytest.approx(-1.4)


def test_interval_score_matches_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        lower, upper, truth = random_instance(rng)
        norm = metrics.per_line_normalizer(truth)
        iv = metrics.IntervalSet(lower, upper, alpha=0.2)
        assert metrics.interval_score(iv, truth, norm) == pytest.approx(
            loop_interval_score(lower, upper, truth, 0.2, norm), abs=1e-12)


def test_widening_covering_interval_only_adds_width_penalty():
    truth = np.array([[5.0]])
    narrow = metrics.IntervalSet(np.array([[4.0]]), np.array([[6.0]]), alpha=0.2)
    wide = metrics.IntervalSet(np.array([[3.0]]), np.array([[7.0]]), alpha=0.2)
    assert metrics.interval_score_points(wide, truth)[0, 0] < \
        metrics.interval_score_points(narrow, truth)[0, 0]


def test_quantile_score_trivial_and_oracle():
    truth = np.full((2, 3), 10.0)
    perfect = np.repeat(truth[:, :, None], 3, axis=2)
    norm = metrics.per_line_normalizer(truth)
    assert metrics.quantile_score(perfect, [0.1, 0.5, 0.9], truth, norm) == 0.0

    # single median level: half the normalized MAE
    rng = np.random.default_rng(3)
    truth = rng.uniform(50, 100, (3, 6))
    pred = truth + rng.normal(0, 5, truth.shape)
    norm = metrics.per_line_normalizer(truth)
    got = metrics.quantile_score(pred[:, :, None], [0.5], truth, norm)
    mae_norm = float((np.abs(pred - truth) / norm[:, None]).mean()) * 100
    assert got == pytest.approx(0.5 * mae_norm, abs=1e-12)

    values = np.stack([truth - 5, truth + 1, truth + 4], axis=2)
    levels = [0.1, 0.5, 0.9]
    assert metrics.quantile_score(values, levels, truth, norm) == pytest.approx(
        loop_quantile_score(values, levels, truth, norm), abs=1e-12)


def test_quantile_score_shares_pinball_kernel():
    rng = np.random.default_rng(4)
    pred = rng.uniform(0, 10, (4, 5))
    truth = rng.uniform(0, 10, (4, 5))
    a = metrics.pinball_values(pred, truth, 0.3)
    b = np.where(pred <= truth, 0.3 * (truth - pred), 0.7 * (pred - truth))
    np.testing.assert_allclose(a, b, atol=1e-15)
    with pytest.raises(LevelOutOfRange):
        metrics.pinball_values(pred, truth, 0.0)


def test_cvar_cases():
    assert metrics.cvar(np.arange(1.0, 11.0), beta=0.1) == pytest.approx(10.0)
    assert metrics.cvar(np.full(7, 3.5), beta=0.25) == pytest.approx(3.5)
    assert metrics.cvar(np.arange(1.0, 101.0), beta=0.1) == pytest.approx(95.5)
    with pytest.raises(EmptyCosts):
        metrics.cvar([])


def test_cvar_at_least_mean():
    rng = np.random.default_rng(5)
    costs = rng.exponential(100.0, 500)
    assert metrics.cvar(costs, 0.1) >= costs.mean()


def test_bounds_invariants():
    rng = np.random.default_rng(6)
    lower, upper, truth = random_instance(rng)
    norm = metrics.per_line_normalizer(truth)
    iv = metrics.IntervalSet(lower, upper, alpha=0.1)
    assert 0.0 <= metrics.ace(iv, truth) <= 100 * max(0.1, 0.9)
    assert metrics.pinaw(iv, norm) >= 0
    values = np.stack([lower, upper], axis=2)
    assert metrics.quantile_score(values, [0.1, 0.9], truth, norm) >= 0


def test_forecast_metrics_report_shape():
    rng = np.random.default_rng(7)
    truth = rng.uniform(80, 120, (3, 24))
    levels = [0.01, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99]
    spread = np.array([-30, -20, -12, 0, 12, 20, 30], dtype=float)
    values = truth[:, :, None] + spread[None, None, :]
    report = metrics.forecast_metrics(values, levels, truth,
                                      {"80": (0.1, 0.9), "90": (0.05, 0.95), "98": (0.01, 0.99)})
    assert set(report) == {"80", "90", "98"}
    for block in report.values():
        assert set(block) == {"ace", "pinaw", "interval_score", "quantile_score"}
