import pytest
import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import trapezoid
from poolcast.calendar import ServiceCalendar
from poolcast.flow_model import FlowSeries
from poolcast.inference import McmcConfig, PosteriorDraws
from poolcast.waiting_model import (IntervalGrid, WaitParams, RequestLog, pseudo_waits_from_events,
                                    wait_log_likelihood, beta_log_posterior,
                                    beta_conjugate_posterior, estimate_nu, fit_waits, WaitPosterior,
                                    simulate_waits, predict_wait_given_flow, predict_wait_marginal,
                                    predict_wait_matrix, perceived_from_pseudo)
from poolcast.exceptions import (RangeError, DomainError, DataError, SchemaError, UnidentifiedError,
                                 ImproperPosteriorError, InfeasibleConditioningError)


def _one_interval(flows, per_day, waits, S=8):
    """ log with `per_day` requests per day, all inside interval 1 """
    cal = ServiceCalendar("2018-01-08", ["ORD"] * len(flows))
    day = np.repeat(np.arange(1, len(flows) + 1), per_day)
    times = np.tile(np.arange(per_day) * 0.1, len(flows))
    return FlowSeries(cal, flows), RequestLog(cal, day, times, waits), IntervalGrid(S)


# --- interval grid

def test_grid():
    grid = IntervalGrid(8)
    assert grid.bounds(1) == (0.0, 180.0)
    assert grid.interval_of(0) == 1
    assert grid.interval_of(179.99) == 1
    assert grid.interval_of(180) == 2
    assert grid.interval_of(1439.99) == 8
    with pytest.raises(RangeError):
        grid.interval_of(1440)
    with pytest.raises(RangeError):
        grid.bounds(9)

def test_grid_sizes():
    for S in (8, 24, 96):
        assert IntervalGrid(S).width * S == 1440
    with pytest.raises(DomainError):
        IntervalGrid(7)
    with pytest.raises(DomainError):
        IntervalGrid(0)


# --- events

def test_pseudo_waits_examples():
    pseudo, perceived = pseudo_waits_from_events([0, 1], [3, 5])
    assert pseudo.tolist() == [3, 2]
    assert perceived.tolist() == [3, 4]
    pseudo, perceived = pseudo_waits_from_events([0, 10], [3, 12])
    assert pseudo.tolist() == [3, 2]
    assert perceived.tolist() == [3, 2]
    pseudo, _ = pseudo_waits_from_events([], [])
    assert pseudo.size == 0

def test_pseudo_waits_reject_early_arrival():
    with pytest.raises(DataError) as e:
        pseudo_waits_from_events([0, 1], [3, 3])
    assert e.value.details["index"] == 2
    with pytest.raises(DataError):
        pseudo_waits_from_events([5], [4])

def test_pseudo_waits_reject_duplicate_requests():
    with pytest.raises(DataError) as e:
        pseudo_waits_from_events([0, 1, 1], [3, 5, 8])
    assert "strictly increasing" in e.value.message
    with pytest.raises(DataError):
        pseudo_waits_from_events([0, 2, 1], [3, 5, 8])

def test_pseudo_waits_random_fifo():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = rng.integers(1, 12)
        t = np.cumsum(rng.exponential(5.0, n))
        a = np.empty(n)
        for j in range(n):
            a[j] = max(t[j], a[j - 1] if j else t[j]) + rng.exponential(3.0) + 1e-6
        pseudo, perceived = pseudo_waits_from_events(t, a)
        assert np.all(pseudo > 0)
        assert np.all(pseudo <= perceived + 1e-12)
        assert pseudo[0] == perceived[0]
        free = np.concatenate([[True], a[:-1] <= t[1:]])
        assert np.allclose(pseudo[free], perceived[free])


# --- request log

def test_request_log_sorts_and_checks():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 3)
    log = RequestLog(cal, [2, 1, 1], [5.0, 9.0, 1.0], [1.0, 2.0, 3.0])
    assert log.day.tolist() == [1, 1, 2]
    assert log.pseudo_wait.tolist() == [3.0, 2.0, 1.0]
    assert log.days.tolist() == [1, 2]
    with pytest.raises(DataError):
        RequestLog(cal, [1, 1], [5.0, 5.0], [1.0, 2.0])
    with pytest.raises(DataError):
        RequestLog(cal, [1], [5.0], [0.0])
    with pytest.raises(RangeError):
        RequestLog(cal, [4], [5.0], [1.0])

def test_wait_cube_layout():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 3)
    grid = IntervalGrid(8)
    W = np.random.default_rng(1).gamma(2.0, 1.0, size=(4, 3, 8))
    log = RequestLog.from_wait_cube(cal, W, grid)
    assert len(log) == 96
    assert np.all(log.intervals(grid) == np.tile(np.repeat(np.arange(1, 9), 4), 3))
    cube = log.to_cube(grid)
    assert cube.shape == (3, 8, 4)
    assert np.array_equal(cube, W.transpose(1, 2, 0))
    assert log.cell(2, 5, grid).tolist() == W[:, 1, 4].tolist()

def test_from_frame_cross_checks_arrivals():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 2)
    df = pd.DataFrame({
        "date": ["2018-01-08", "2018-01-08"],
        "request_time": ["08:00:00", "08:01:00"],
        "pseudo_wait_min": [3.0, 2.0],
        "arrival_time": ["08:03:00", "08:05:00"]
    })
    log = RequestLog.from_frame(df, cal)
    assert log.perceived_wait.tolist() == pytest.approx([3.0, 4.0])
    df.loc[1, "pseudo_wait_min"] = 4.0
    with pytest.raises(SchemaError) as e:
        RequestLog.from_frame(df, cal)
    assert e.value.details["row"] == 3

def test_from_frame_rejects_bad_rows():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 2)
    df = pd.DataFrame({"date": ["2018-01-08", "2018-01-20"], "request_time": ["08:00:00", "08:00:00"],
                       "pseudo_wait_min": [3.0, 2.0]})
    with pytest.raises(SchemaError) as e:
        RequestLog.from_frame(df, cal)
    assert e.value.details["row"] == 3
    with pytest.raises(SchemaError):
        RequestLog.from_frame(df.drop(columns=["pseudo_wait_min"]), cal)

def test_log_slice_reindexes():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 5)
    log = RequestLog(cal, [1, 2, 3, 4, 5], [1.0] * 5, [1.0, 2.0, 3.0, 4.0, 5.0])
    sub = log.slice("2018-01-10", "2018-01-11")
    assert len(sub.calendar) == 2
    assert sub.day.tolist() == [1, 2]
    assert sub.pseudo_wait.tolist() == [3.0, 4.0]
    assert log.drop_days([1, 2]).pseudo_wait.tolist() == [3.0, 4.0, 5.0]


# --- likelihood

def test_single_observation_log_likelihood():
    flows, log, grid = _one_interval([1.0], 1, [1.0])
    wp = WaitParams(1.0, [1.0] + [0.0] * 7)
    assert wait_log_likelihood(wp, flows, log, grid) == pytest.approx(-1.0)

def test_log_likelihood_scipy_oracle():
    rng = np.random.default_rng(3)
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 3)
    flows = FlowSeries(cal, [20.0, 35.0, 27.0])
    day = np.repeat([1, 2, 3], 4)
    times = np.tile([10.0, 300.0, 700.0, 1300.0], 3)
    w = rng.gamma(3.0, 2.0, size=12)
    log = RequestLog(cal, day, times, w)
    grid = IntervalGrid(8)
    beta = np.array([0.01, 0.02, 0.03, 0.015, 0.02, 0.025, 0.03, 0.035])
    nu = 2.5
    s = grid.intervals_of(times) - 1
    y = flows.flows[day - 1]
    expected = stats.gamma.logpdf(w, a=nu, scale=1.0 / (beta[s] * y)).sum()
    assert wait_log_likelihood(WaitParams(nu, beta), flows, log, grid) == pytest.approx(expected, abs=1e-10)

    # the likelihood factorises over intervals
    wp = WaitParams(nu, beta)
    parts = sum(wait_log_likelihood(wp, flows, RequestLog(cal, day[s == k], times[s == k], w[s == k]), grid)
                for k in np.unique(s))
    assert parts == pytest.approx(expected)

def test_zero_beta_with_data():
    flows, log, grid = _one_interval([10.0], 2, [1.0, 2.0])
    assert wait_log_likelihood(WaitParams(2.0, [0.0] * 8), flows, log, grid) == -np.inf

def test_flat_posterior():
    flows, log, grid = _one_interval([10.0], 2, [1.0, 2.0])
    beta = [0.1] + [0.0] * 7
    wp = WaitParams(2.0, beta)
    assert beta_log_posterior(wp, flows, log, grid) == wait_log_likelihood(wp, flows, log, grid)
    assert beta_log_posterior((2.0, [-0.1] + [0.0] * 7), flows, log, grid) == -np.inf

def test_dirichlet_posterior():
    cal = ServiceCalendar("2018-01-08", ["ORD"])
    flows = FlowSeries(cal, [10.0])
    log = RequestLog(cal, [1, 1, 1], [10.0, 500.0, 1000.0], [1.0, 2.0, 3.0])
    grid = IntervalGrid(3)
    wp = WaitParams(2.0, [0.2, 0.3, 0.5])
    prior = np.log(0.2) + 2 * np.log(0.3) + 3 * np.log(0.5)
    lp = beta_log_posterior(wp, flows, log, grid, prior="dirichlet", dirichlet_alpha=[2, 3, 4])
    assert lp - wait_log_likelihood(wp, flows, log, grid) == pytest.approx(prior)
    off = WaitParams(2.0, [0.2, 0.3, 0.6])
    assert beta_log_posterior(off, flows, log, grid, prior="dirichlet") == -np.inf
    with pytest.raises(DomainError):
        beta_log_posterior(wp, flows, log, grid, prior="uniform")


# --- conjugate posterior

def test_conjugate_examples():
    flows, log, grid = _one_interval([50.0], 10, [1.0] * 10)
    post = beta_conjugate_posterior(7.0, flows, log, grid, 1)
    assert (post.shape, post.rate) == (71.0, 500.0)
    assert post.mean == pytest.approx(0.142)

    flows, log, grid = _one_interval([1.0], 1, [1.0])
    post = beta_conjugate_posterior(1.0, flows, log, grid, 1)
    assert (post.shape, post.rate) == (2.0, 1.0)

def test_conjugate_needs_data():
    flows, log, grid = _one_interval([50.0], 10, [1.0] * 10)
    with pytest.raises(ImproperPosteriorError):
        beta_conjugate_posterior(7.0, flows, log, grid, 2)

def test_conjugate_recovers_beta():
    rng = np.random.default_rng(5)
    y = rng.uniform(80, 120, size=100)
    waits = rng.gamma(7.0, 1.0 / (0.01 * np.repeat(y, 100)))
    flows, log, grid = _one_interval(y, 100, waits)
    post = beta_conjugate_posterior(7.0, flows, log, grid, 1)
    assert post.mean == pytest.approx(0.01, rel=0.02)

def test_mcmc_matches_conjugate():
    rng = np.random.default_rng(6)
    y = rng.uniform(20, 40, size=10)
    waits = rng.gamma(7.0, 1.0 / (0.012 * np.repeat(y, 5)))
    flows, log, grid = _one_interval(y, 5, waits)
    cfg = McmcConfig(chains=4, warmup_iters=1000, keep_iters=5000, seed=7)
    draws, _ = fit_waits(flows, log, grid, 7.0, cfg)
    assert draws.names == ["beta_1"]
    post = beta_conjugate_posterior(7.0, flows, log, grid, 1)
    b = draws.column("beta_1")
    assert b.mean() == pytest.approx(post.mean, rel=0.01)
    assert stats.kstest(b, post.dist.cdf).statistic < 0.05

def test_wait_posterior_unidentified(caplog):
    flows, log, grid = _one_interval([50.0], 10, np.linspace(1, 3, 10))
    post = WaitPosterior(flows, log, grid, 7.0)
    assert post.free == ["beta_1"]
    assert post.unidentified == list(range(2, 9))
    assert "unidentified" in caplog.text
    dirichlet = WaitPosterior(flows, log, grid, 7.0, prior="dirichlet")
    assert len(dirichlet.free) == 8
    assert dirichlet.initial_values().sum() == pytest.approx(1.0)

def test_estimate_nu():
    rng = np.random.default_rng(7)
    y = rng.uniform(20, 40, size=50)
    waits = rng.gamma(7.0, 1.0 / (0.012 * np.repeat(y, 100)))
    flows, log, grid = _one_interval(y, 100, waits)
    assert estimate_nu(flows, log, grid) == pytest.approx(7.0, rel=0.1)

def test_estimate_nu_needs_data():
    flows, log, grid = _one_interval([50.0], 1, [1.0])
    with pytest.raises(DataError):
        estimate_nu(flows, log, grid)


# --- simulator

def test_simulate_waits(lyon_calendar, sim_params):
    beta = [0.012, 0.01, 0.011, 0.013, 0.018, 0.016, 0.017, 0.019]
    series, W = simulate_waits(365, sim_params, 3, 7.0, beta, 10, np.random.default_rng(1), lyon_calendar(365))
    assert W.shape == (10, 365, 8)
    assert np.all(W > 0)
    series2, W2 = simulate_waits(365, sim_params, 3, 7.0, beta, 10, np.random.default_rng(1), lyon_calendar(365))
    assert np.array_equal(W, W2)
    assert np.array_equal(series.flows, series2.flows)

def test_simulated_cell_means(ord_calendar, sim_params):
    beta = np.array([0.012, 0.01, 0.011, 0.013, 0.018, 0.016, 0.017, 0.019])
    series, W = simulate_waits(5, sim_params, 3, 7.0, beta, 10000, np.random.default_rng(2), ord_calendar(5))
    mean = 7.0 / (beta[None, :] * series.flows[:, None])
    se = np.sqrt(7.0) / (beta[None, :] * series.flows[:, None]) / np.sqrt(10000)
    assert np.max(np.abs(W.mean(axis=0) - mean) / se) < 4.5

def test_simulate_waits_rejects_bad_beta(ord_calendar, sim_params):
    with pytest.raises(DomainError):
        simulate_waits(5, sim_params, 3, 7.0, [0.01, 0.0], 2, np.random.default_rng(0), ord_calendar(5))


# --- predictive

def test_predict_given_flow_point_mass():
    draws = PosteriorDraws.point_mass({"beta_1": 0.01}, n=20000)
    w = predict_wait_given_flow(draws, 7.0, 100.0, 1, np.random.default_rng(0))
    assert w.shape == (20000,)
    assert stats.kstest(w, stats.gamma(a=7.0, scale=1.0).cdf).pvalue > 0.001
    w2 = predict_wait_given_flow(draws, 7.0, 200.0, 1, np.random.default_rng(1))
    assert w.mean() / w2.mean() == pytest.approx(2.0, rel=0.02)

def test_predict_given_flow_mean_quadrature():
    post_shape, post_rate = 71.0, 500.0
    rng = np.random.default_rng(3)
    betas = rng.gamma(post_shape, 1.0 / post_rate, size=40000)
    draws = PosteriorDraws(betas[:, None], ["beta_1"])
    w = predict_wait_given_flow(draws, 7.0, 120.0, 1, rng)

    grid = np.linspace(0.05, 0.3, 10000)
    dens = stats.gamma.pdf(grid, a=post_shape, scale=1.0 / post_rate)
    expected = trapezoid(7.0 / (grid * 120.0) * dens, grid)
    assert w.mean() == pytest.approx(expected, rel=0.01)

def test_predict_thinning_and_errors():
    draws = PosteriorDraws.point_mass({"beta_1": 0.01}, n=100)
    assert predict_wait_given_flow(draws, 7.0, 100.0, 1, np.random.default_rng(0), n_draws=10).shape == (10,)
    with pytest.raises(UnidentifiedError):
        predict_wait_given_flow(draws, 7.0, 100.0, 2, np.random.default_rng(0))
    with pytest.raises(DomainError):
        predict_wait_given_flow(draws, 7.0, 0.0, 1, np.random.default_rng(0))

def test_predict_marginal():
    rng = np.random.default_rng(4)
    draws = PosteriorDraws(rng.gamma(71.0, 1 / 500.0, size=(1, 30000, 1)), ["beta_1"])
    flat = predict_wait_marginal(draws, 7.0, np.full(20000, 100.0), 1, rng)
    assert flat.shape == (20000,)
    given = predict_wait_given_flow(draws, 7.0, 100.0, 1, rng)
    assert flat.mean() == pytest.approx(given.mean(), rel=0.03)

    spread = predict_wait_marginal(draws, 7.0, rng.uniform(50, 150, size=30000), 1, rng)
    assert spread.mean() > given.mean() * 1.05
    with pytest.raises(DataError):
        predict_wait_marginal(draws, 7.0, [], 1, rng)

def test_predict_wait_matrix_skips_unidentified():
    draws = PosteriorDraws.point_mass({"beta_1": 0.01, "beta_3": 0.02}, n=50)
    grid = IntervalGrid(4)
    M = predict_wait_matrix(draws, 7.0, np.array([100.0, 120.0]), grid, np.random.default_rng(0),
                            skip_unidentified=True)
    assert M.shape == (2, 4, 50)
    assert np.all(np.isfinite(M[:, [0, 2], :]))
    assert np.all(np.isnan(M[:, [1, 3], :]))
    with pytest.raises(UnidentifiedError):
        predict_wait_matrix(draws, 7.0, np.array([100.0]), grid, np.random.default_rng(0))
    flows = np.full((3, 20), 100.0)
    assert predict_wait_matrix(draws, 7.0, flows, grid, np.random.default_rng(0),
                               skip_unidentified=True).shape == (3, 4, 20)


# --- perceived waits

def test_perceived_zero_gap():
    rng = np.random.default_rng(5)
    w1 = rng.gamma(7.0, 1.0, size=50000)
    w2 = rng.gamma(7.0, 1.0, size=50000)
    out = perceived_from_pseudo(w1, w2, 0.0, rng)
    assert out.mean() == pytest.approx(w1.mean() + w2.mean(), rel=0.02)
    assert np.all(out >= w2)

def test_perceived_brute_force():
    rng = np.random.default_rng(6)
    w1 = rng.gamma(7.0, 1.0, size=50000)
    w2 = rng.gamma(7.0, 1.0, size=50000)
    out = perceived_from_pseudo(w1, w2, 8.0, rng)
    expected = w2.mean() + (w1[w1 > 8.0] - 8.0).mean()
    assert out.mean() == pytest.approx(expected, rel=0.02)

def test_perceived_infeasible():
    rng = np.random.default_rng(7)
    with pytest.raises(InfeasibleConditioningError):
        perceived_from_pseudo(rng.gamma(7.0, 1.0, 1000), rng.gamma(7.0, 1.0, 1000), 1e6, rng)
    with pytest.raises(DomainError):
        perceived_from_pseudo([1.0], [1.0], -1.0, rng)
