import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spgd import (
    ConfigurationError,
    ConsistencyError,
    DataCompletenessError,
    DomainError,
    InputError,
    UndefinedRatioError,
)
from spgd.diagnostics import (
    Ball,
    Box,
    MaximalInterval,
    NeighborhoodPair,
    accumulation_estimate,
    chunk_drift_sums,
    closure_inside,
    compute_diagnostics,
    drift_ratio,
    find_maximal_intervals,
    interval_subdivision,
    long_interval_series,
    lyapunov_series,
    oscillation_ratio,
    travel_times,
    trend_summary,
    windowed_drift_sup,
    windowed_noise_sup,
    windowed_sum_sup,
)
from spgd.engine import Trajectory, run_spgd
from spgd.problems import builtin_problem
from spgd.schedule import NoiseModel, Schedule

from oracles import lasso_diag_solution, maximal_intervals_loop

ABS = builtin_problem("abs1d")
NB = NeighborhoodPair(Ball([0.0], 0.2), Ball([0.0], 1.0))


def fabricate(x0, gamma, w, eta=None):
    """Trajectory whose steps follow ``x_{n+1} = x_n - gamma w + gamma eta`` exactly."""
    gamma = np.asarray(gamma, dtype=float)
    w = np.asarray(w, dtype=float).reshape(gamma.size, -1)
    eta = np.zeros_like(w) if eta is None else np.asarray(eta, dtype=float).reshape(w.shape)
    d = w.shape[1]
    x = np.empty((gamma.size, d))
    cur = np.asarray(x0, dtype=float).reshape(d)
    for i in range(gamma.size):
        x[i] = cur
        cur = cur - gamma[i] * w[i] + gamma[i] * eta[i]
    x_next = np.vstack((x[1:], cur[None, :]))
    tau = np.concatenate(([0.0], np.cumsum(gamma)[:-1]))
    fg = np.abs(x).sum(axis=1)
    return Trajectory(np.arange(gamma.size), x, gamma, w, eta, x_next, x_next, w, tau, fg,
                      cur, float(gamma.sum()), float(np.abs(cur).sum()), gamma.size)


def _abs_run(n=5000, sigma=0.3, seed=0, x0=2.3):
    return run_spgd(ABS, Schedule.power(1, 0.7), NoiseModel.gaussian(sigma), [x0], n, seed=seed,
                    override=True)


# --- regions ----------------------------------------------------------------


def test_neighborhood_closure_required():
    with pytest.raises(ConfigurationError):
        NeighborhoodPair(Ball([0.0], 0.5), Ball([0.0], 0.5))
    assert closure_inside(Ball([0.0], 0.4), Ball([0.0], 0.5))
    assert closure_inside(Box([-1, -1], [1, 1]), Ball([0, 0], 1.5))
    assert not closure_inside(Box([-1, -1], [1, 1]), Ball([0, 0], 1.4))


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_u_membership_implies_v(a, b):
    nb = NeighborhoodPair(Box([-0.5, -0.5], [0.5, 0.5]), Ball([0, 0], 0.8))
    p = np.array([a, b])
    if nb.U.contains(p):
        assert nb.V.contains(p)


# --- maximal intervals ------------------------------------------------------


def test_hand_traced_intervals():
    ivs = find_maximal_intervals([5, 0.3, 0.1, 0.4, 5, 0.2, 5], NB)
    assert [(iv.n1, iv.n2) for iv in ivs] == [(1, 3), (5, 5)]
    assert all(iv.boundary_kind == "entered_from_outside" for iv in ivs)


def test_all_inside_is_one_truncated_interval():
    ivs = find_maximal_intervals(np.zeros(11), NB)
    assert len(ivs) == 1
    assert (ivs[0].n1, ivs[0].n2) == (0, 10) and ivs[0].truncated


def test_never_in_v():
    ivs = find_maximal_intervals([3.0, 4.0, -2.0], NB)
    assert list(ivs) == [] and ivs.discarded == 0


def test_non_touching_excursions_counted():
    ivs = find_maximal_intervals([5, 0.5, 5, 0.1, 5], NB)
    assert [(iv.n1, iv.n2) for iv in ivs] == [(3, 3)]
    assert ivs.discarded == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=60))
def test_intervals_match_loop_and_partition(xs):
    ivs = find_maximal_intervals(xs, NB)
    expect = maximal_intervals_loop(xs, lambda x: abs(x) <= 0.2, lambda x: abs(x) <= 1.0)
    assert [(iv.n1, iv.n2) for iv in ivs] == expect
    for a, b in zip(ivs[:-1], ivs[1:]):
        assert a.n2 < b.n1
        gap = xs[a.n2 + 1: b.n1]
        assert any(abs(x) > 1.0 for x in gap) or not any(abs(x) <= 0.2 for x in gap)
    for iv in ivs:
        assert all(abs(x) <= 1.0 for x in xs[iv.n1: iv.n2 + 1])
        if not iv.truncated:
            outside_before = iv.n1 == 0 or abs(xs[iv.n1 - 1]) > 1.0
            assert outside_before and abs(xs[iv.n2 + 1]) > 1.0


def test_intervals_on_trajectory_use_taus():
    t = _abs_run()
    ivs = find_maximal_intervals(t, NB)
    assert ivs
    for iv in ivs:
        assert iv.duration == pytest.approx(t.taus[iv.n2] - t.taus[iv.n1])


def test_thinned_without_v_refused():
    t = run_spgd(ABS, Schedule.power(1, 0.7), NoiseModel.zero(), [2.3], 1000, thinning=10,
                 keep_regions=(Ball([1.2], 0.2),))
    with pytest.raises(DataCompletenessError):
        find_maximal_intervals(t, NB)


def test_durations_and_trend():
    ivs = find_maximal_intervals([5, 0.3, 0.1, 0.4, 5, 0.2, 5], NB)
    lis = long_interval_series(ivs, Schedule.constant(1))
    assert lis.durations == [2, 0]
    assert lis.trend["status"] == "insufficient data"
    one = long_interval_series(ivs[:1], Schedule.constant(1))
    assert one.durations == [2] and one.trend["status"] == "insufficient data"


def test_trend_summary_growth():
    t = trend_summary([1, 2, 3, 4, 5, 6, 7, 8])
    assert t["spearman"] == pytest.approx(1.0)
    assert t["quartile_ratio"] == pytest.approx(7.5 / 1.5)


# --- oscillation ------------------------------------------------------------


def test_drift_ratio_examples():
    np.testing.assert_array_equal(drift_ratio([0.3, 0.3], [1.0, -1.0]), [0.0])
    np.testing.assert_array_equal(drift_ratio([0.5], [2.0]), [2.0])
    with pytest.raises(UndefinedRatioError):
        drift_ratio([0.5, 0.5], [1.0, 1.0], mask=[False, False])


def test_oscillation_ratio_on_fabricated_run():
    t = fabricate([0.0], [0.3, 0.3, 0.5], [1.0, -1.0, 2.0])
    ivs = [MaximalInterval(0, 1, 0.3), MaximalInterval(2, 3, 0.5, boundary_kind="truncated_at_trajectory_end")]
    rep = oscillation_ratio(t, ivs)
    np.testing.assert_allclose(rep.u_at(1), [0.0], atol=1e-15)
    np.testing.assert_allclose(rep.u_at(2), [1.0 / 1.1])
    assert list(rep.b) == pytest.approx([0.6, 1.1])
    np.testing.assert_array_equal(rep.prefix_index, [0, 1, 2])


def test_oscillation_ratio_final_iterate_has_no_step():
    t = fabricate([0.0], [0.3, 0.3], [1.0, -1.0])
    rep = oscillation_ratio(t, [MaximalInterval(2, 2, 0.0, boundary_kind="truncated_at_trajectory_end")])
    with pytest.raises(UndefinedRatioError):
        rep.u_at(1)


def test_oscillation_denominators_monotone():
    t = _abs_run(20000, sigma=3.0)
    ivs = find_maximal_intervals(t, NeighborhoodPair(Ball([0.5], 0.1), Ball([0.5], 0.3)))
    assert len(ivs) >= 3
    rep = oscillation_ratio(t, ivs, nb=NB, T=1.0)
    assert np.all(np.diff(rep.b) >= 0)
    assert np.all(rep.b > 0)
    assert np.all(np.isfinite(rep.norms))
    assert len(rep.counts) == len(ivs)
    d = rep.to_dict()
    assert d["interval_count"] == len(ivs)
    json.dumps(d, allow_nan=False)


def test_upto_n_too_large():
    t = _abs_run(200)
    with pytest.raises(InputError):
        oscillation_ratio(t, [], upto_N=1)


# --- windowed sums ----------------------------------------------------------


def test_windowed_zero_drift():
    t = fabricate([0.0], [0.5] * 10, [0.0] * 10)
    assert windowed_drift_sup(t, 2.0, 0) == 0.0
    assert windowed_noise_sup(t, 2.0, 3) == 0.0


def test_windowed_hand_example():
    t = fabricate([0.0], [1.0] * 4, [1.0, -1.0, 1.0, 0.0])
    assert windowed_drift_sup(t, 2.0, 0) == 1.0
    assert windowed_sum_sup([1, 1, 1], [1, -1, 1]) == 1.0


def test_windowed_noise_single_step():
    assert windowed_sum_sup([0.1], [[3.0, 4.0]]) == pytest.approx(0.5)
    t = fabricate([0.0, 0.0], [0.1, 1.0, 1.0], [[0, 0]] * 3, [[3, 4], [0, 0], [0, 0]])
    assert windowed_noise_sup(t, 0.1, 0) == pytest.approx(0.5)


def test_window_past_end():
    t = fabricate([0.0], [1.0] * 3, [0.0] * 3)
    with pytest.raises(DomainError):
        windowed_drift_sup(t, 10.0, 0)


def test_consistency_failure_detected():
    t = fabricate([0.0], [1.0] * 4, [1.0, -1.0, 1.0, 0.0])
    t.w = t.w.copy()
    t.w[1] += 1e-3
    with pytest.raises(ConsistencyError):
        windowed_drift_sup(t, 2.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3), st.floats(0.05, 3), st.integers(0, 2000))
def test_windowed_sup_monotone_in_T(T1, T2, n):
    t = _abs_run(4000, seed=3)
    T1, T2 = sorted((T1, T2))
    assert windowed_drift_sup(t, T1, n) <= windowed_drift_sup(t, T2, n)
    assert windowed_noise_sup(t, T1, n) <= windowed_noise_sup(t, T2, n)


def test_update_identity_holds_on_real_runs():
    t = run_spgd(builtin_problem("lasso", {"A": np.diag([1.0, 2.0]), "b": [1.0, -3.0], "lam": 0.5}),
                 Schedule.power(1, 0.7), NoiseModel.gaussian(0.5), [0.0, 0.0], 3000, seed=2)
    for n in (0, 10, 500, 2000):
        windowed_drift_sup(t, 1.0, n)


# --- travel times -----------------------------------------------------------


def test_travel_immediate_transitions():
    xs = [0.0, 10.0] * 10
    tt = travel_times(xs, Ball([0.0], 1.0), Ball([10.0], 1.0), Schedule.constant(1))
    assert tt.times == [1.0] * 10 and not tt.empty


def test_travel_no_arrival():
    tt = travel_times([0.0] * 20, Ball([0.0], 1.0), Ball([10.0], 1.0), Schedule.constant(1))
    assert tt.times == [] and tt.empty


def test_travel_greedy_matching():
    xs = [0, 0, 5, 10, 10, 0, 5, 5, 10]
    tt = travel_times(xs, Ball([0.0], 1.0), Ball([10.0], 1.0))
    assert tt.pairs == [(0, 3), (5, 8)]


def test_travel_requires_disjoint():
    with pytest.raises(InputError):
        travel_times([0.0], Ball([0.0], 1.0), Ball([1.5], 1.0))


# --- lyapunov and accumulation ----------------------------------------------


def test_lyapunov_hand_series():
    t = run_spgd(ABS, Schedule.constant(0.4), NoiseModel.zero(), [1.0], 6, override=True)
    np.testing.assert_allclose(lyapunov_series(t).values, [1.0, 0.6, 0.2, 0.2, 0.2, 0.2, 0.2], atol=1e-15)


def test_lyapunov_constant_series():
    t = run_spgd(ABS, Schedule.power(1, 0.7), NoiseModel.zero(), [0.0], 50)
    s = lyapunov_series(t)
    assert np.all(s.values == 0.0) and s.tail_std == 0.0


def test_accumulation_constant_tail():
    pts = np.vstack((np.linspace(3, 1, 100)[:, None], np.full((100, 1), 0.7)))
    cl = accumulation_estimate(pts, 0.5, 0.05)
    assert len(cl) == 1
    np.testing.assert_array_equal(cl[0].center, [0.7])
    assert cl[0].mass == 1.0


def test_accumulation_alternating():
    pts = np.array([[0.0, 0.0], [1.0, 1.0]] * 100)
    cl = accumulation_estimate(pts, 0.5, 0.1)
    assert len(cl) == 2
    assert sorted(c.mass for c in cl) == [0.5, 0.5]


def test_accumulation_needs_enough_points():
    with pytest.raises(InputError):
        accumulation_estimate(np.zeros((50, 1)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.02, 0.5))
def test_accumulation_is_eps_net(seed, eps):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 2))
    cl = accumulation_estimate(pts, 0.5, eps)
    tail = pts[-150:]
    centers = np.array([c.center for c in cl])
    gaps = np.linalg.norm(tail[:, None, :] - centers[None, :, :], axis=2)
    assert np.all(gaps.min(axis=1) <= eps)
    assert np.all(gaps.min(axis=0) <= 1e-15)
    assert sum(c.mass for c in cl) == pytest.approx(1.0)


@pytest.mark.slow
def test_lasso_centers_are_critical():
    a, b, lam = [1.0, 2.0], [1.0, -3.0], 0.5
    p = builtin_problem("lasso", {"A": np.diag(a), "b": b, "lam": lam})
    t = run_spgd(p, Schedule.power(1, 0.7), NoiseModel.gaussian(0.1), [0.0, 0.0], 10**5, seed=7)
    cl = accumulation_estimate(t, 0.1, 0.05)
    star = lasso_diag_solution(a, b, lam)
    for c in cl:
        assert p.stationarity(c.center) <= 0.05
        assert np.linalg.norm(c.center - star) <= 0.05
    assert lyapunov_series(t, 0.1).tail_std <= 1e-3


# --- subdivision ------------------------------------------------------------


def test_subdivision_constant():
    bp, K = interval_subdivision((0, 10), Schedule.constant(1), 3)
    assert bp == [0, 3, 6, 9, 10] and K == 4


def test_subdivision_zero_duration():
    bp, K = interval_subdivision((4, 4), Schedule.constant(1), 3)
    assert K == 1 and bp == [4, 4]


def test_subdivision_harmonic():
    bp, K = interval_subdivision((1, 5), Schedule.power(1, 1), 1)
    assert bp == [1, 4, 5] and K == 2


def test_chunk_sums_add_up():
    t = _abs_run(3000, seed=5)
    bp, _ = interval_subdivision((100, 2500), Schedule.power(1, 0.7), 1.0)
    chunks = chunk_drift_sums(t, bp)
    total = np.sum(t.gamma[100:2500, None] * t.w[100:2500], axis=0)
    np.testing.assert_allclose(chunks.sum(axis=0), total, rtol=1e-12, atol=1e-12)


# --- report -----------------------------------------------------------------


def test_compute_diagnostics_report(tmp_path):
    t = _abs_run(5000, sigma=3.0)
    blocks = [
        {"kind": "intervals", "name": "osc", "U": {"kind": "ball", "center": [0.0], "radius": 0.1},
         "V": {"kind": "ball", "center": [0.0], "radius": 0.5}, "T": 1.0},
        {"kind": "windowed", "T": 1.0, "n": [10, 4999]},
        {"kind": "travel_times", "from": {"kind": "ball", "center": [0.4], "radius": 0.1},
         "to": {"kind": "ball", "center": [0.0], "radius": 0.2}},
        {"kind": "lyapunov", "tail_fraction": 0.1},
        {"kind": "accumulation", "tail_fraction": 0.1, "eps": 0.05},
    ]
    rep = compute_diagnostics(t, ABS, Schedule.power(1, 0.7), blocks)
    d = rep.to_dict()
    assert set(d) == {"osc", "windowed_1", "travel_times_2", "lyapunov_3", "accumulation_4"}
    assert "error" in d["windowed_1"]["values"][1]
    assert d["travel_times_2"]["times"]
    rep.write_json(tmp_path / "d.json")
    json.loads((tmp_path / "d.json").read_text())
    files = rep.write_series_csv(tmp_path, "series")
    assert all(f.exists() for f in files)
    assert (tmp_path / "series.lyapunov_3.values.csv").read_text().startswith("index,v0\n")
