import pytest
import logging
import datetime
import numpy as np
from poolcast import lib
from poolcast.calendar import ServiceCalendar
from poolcast.flow_model import FlowSeries
from poolcast.waiting_model import IntervalGrid, RequestLog
from poolcast.evaluation import (pe_metric, pe_curve, pe_metric_cells, pe_curve_cells, pe_metric_log, log_cells,
                                 weekly_mse, mse_sum, Scenario, FLOW_SCENARIOS, WAIT_SCENARIO,
                                 scenario_split, aggregate_sparse_waits, aggregate_test_cells)
from poolcast.exceptions import DataError, DomainError, RangeError, ScenarioError


@pytest.fixture
def cube():
    """ distances 1..8 to a zero predictive mean """
    return np.arange(1.0, 9.0).reshape(2, 2, 2), np.zeros((2, 2))


# --- PE

def test_pe_perfect_prediction():
    obs = np.full((3, 2, 4), 5.0)
    mean = np.full((3, 2), 5.0)
    assert pe_metric(obs, mean, 0.1) == 1.0
    assert pe_metric(obs, mean, 0.0) == 0.0

def test_pe_is_strict(cube):
    obs, mean = cube
    assert pe_metric(obs, mean, 4.0) == pytest.approx(3 / 8)
    assert pe_metric(obs, mean, 5.5) == pytest.approx(5 / 8)
    assert pe_metric(obs, mean, 8.0) == pytest.approx(7 / 8)
    assert pe_metric(obs, mean, 100.0) == 1.0

def test_pe_curve_is_monotone(rng):
    obs = rng.gamma(7.0, 3.0, size=(5, 8, 10))
    mean = obs.mean(axis=2)
    curve = pe_curve(obs, mean, [0.5 * k for k in range(41)])
    assert np.all(np.diff(curve.values) >= 0)
    assert curve.at(0.0) == 0.0
    assert curve.at(4.0) == pytest.approx(pe_metric(obs, mean, 4.0))
    assert curve.to_list()[2] == [1.0, curve.at(1.0)]
    with pytest.raises(KeyError):
        curve.at(0.25)

def test_pe_shape_mismatch(cube):
    obs, _ = cube
    with pytest.raises(DataError):
        pe_metric(obs, np.zeros((2, 3)), 1.0)
    with pytest.raises(DomainError):
        pe_metric(obs, np.zeros((2, 2)), -1.0)

def test_pe_cells():
    cells = {(10, 1): np.array([1.0, 2.0]), (11, 2): np.array([3.0])}
    mean = np.zeros((2, 2))
    assert pe_metric_cells(cells, mean, 2.5, first_day=10) == pytest.approx(2 / 3)
    curve = pe_curve_cells(cells, mean, [1.5, 3.5], first_day=10)
    assert curve.values.tolist() == pytest.approx([1 / 3, 1.0])
    with pytest.raises(DataError):
        pe_metric_cells(cells, mean, 2.5, first_day=1)

def test_pe_cells_skip_missing_predictions(caplog):
    cells = {(1, 1): np.array([1.0, 2.0]), (1, 2): np.array([9.0])}
    mean = np.array([[0.0, np.nan]])
    with caplog.at_level(logging.WARNING):
        assert pe_metric_cells(cells, mean, 1.5) == pytest.approx(0.5)
    assert "not scored" in caplog.text

def test_pe_of_request_log():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 2)
    grid = IntervalGrid(2)
    log = RequestLog(cal, [1, 1, 2], [10.0, 900.0, 10.0], [4.0, 8.0, 5.0])
    cells = log_cells(log, grid)
    assert sorted(cells) == [(1, 1), (1, 2), (2, 1)]
    mean = np.array([[4.5, 8.0], [2.0, 0.0]])
    # distances 0.5, 0, 3
    assert pe_metric_log(log, mean, grid, 1.0) == pytest.approx(2 / 3)


# --- weekly MSE

def test_weekly_mse(ord_calendar):
    cal = ord_calendar(7)
    errors = np.arange(1.0, 8.0)
    weeks = weekly_mse(np.full(7, 30.0), 30.0 + errors, cal)
    assert len(weeks) == 1
    assert weeks[0].mse == pytest.approx(20.0)
    assert weeks[0].week_start == datetime.date(2018, 1, 8)
    assert not weeks[0].partial
    assert mse_sum(weeks) == pytest.approx(20.0)

def test_weekly_mse_partial_and_burn_in(ord_calendar):
    cal = ord_calendar(10, start="2018-01-10")
    y = np.full(10, 10.0)
    p = y + 1.0
    weeks = weekly_mse(y, p, cal)
    assert [w.n_days for w in weeks] == [5, 5]
    assert all(w.partial for w in weeks)
    assert weeks[1].week_start == datetime.date(2018, 1, 15)
    assert weekly_mse(y, p, cal, burn_in_weeks=1)[0].week_start == datetime.date(2018, 1, 15)
    assert weekly_mse(y, p, cal, burn_in_weeks=2) == []

def test_weekly_mse_skips_missing_predictions(ord_calendar):
    cal = ord_calendar(7)
    p = np.full(7, 12.0)
    p[:2] = np.nan
    weeks = weekly_mse(np.full(7, 10.0), p, cal)
    assert weeks[0].n_days == 5
    assert weeks[0].mse == pytest.approx(4.0)
    assert weeks[0].partial

def test_weekly_mse_errors(ord_calendar):
    cal = ord_calendar(7)
    with pytest.raises(DataError):
        weekly_mse(np.ones(7), np.ones(6), cal)
    with pytest.raises(DomainError):
        weekly_mse(np.ones(7), np.ones(7), cal, burn_in_weeks=-1)


# --- scenarios

def test_flow_scenario_training_sizes():
    assert [s.n_train_days for s in FLOW_SCENARIOS] == [244, 286, 349, 356, 363, 370]
    assert all(s.n_test_days == 7 for s in FLOW_SCENARIOS)
    assert all(s.test_start.isoweekday() == 1 for s in FLOW_SCENARIOS)
    assert WAIT_SCENARIO.aggregation_weeks == 5

def test_scenario_split_flows():
    start = "2018-05-15"
    n = lib.days_between(start, "2019-05-26") + 1
    cal = ServiceCalendar(start, ["ORD"] * n)
    series = FlowSeries(cal, np.arange(1.0, n + 1))
    data = scenario_split(cal, series, FLOW_SCENARIOS[0])
    assert data.counts == {"train_days": 244, "test_days": 7}
    assert data.train.flows[-1] == 244.0
    assert data.test.flows[0] == 245.0
    assert data.test.calendar.start_date == datetime.date(2019, 1, 14)

def test_scenario_split_log():
    cal = ServiceCalendar("2018-01-08", ["ORD"] * 14)
    log = RequestLog(cal, [1, 3, 8, 9, 9], [1.0, 2.0, 3.0, 4.0, 5.0], [1.0, 1.0, 1.0, 1.0, 1.0])
    sc = Scenario("t", "2018-01-08", "2018-01-14", "2018-01-15", "2018-01-21")
    data = scenario_split(cal, log, sc)
    assert data.counts == {"train_days": 7, "test_days": 7, "train_waits": 2, "test_waits": 3}
    assert data.test.day.tolist() == [1, 2, 2]

def test_scenario_validation():
    with pytest.raises(ScenarioError):
        Scenario("x", "2018-01-01", "2018-01-10", "2018-01-10", "2018-01-12")
    with pytest.raises(ScenarioError):
        Scenario("x", "2018-01-01", "2018-01-10", "2018-01-12", "2018-01-11")
    with pytest.raises(ScenarioError):
        Scenario("x", "2018-01-01", "not a date", "2018-01-12", "2018-01-13")
    with pytest.raises(ScenarioError):
        Scenario("x", "2018-01-01", "2018-01-10", "2018-01-11", "2018-01-12", aggregation_weeks=0)
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"label": "x", "bogus": 1})

def test_scenario_outside_data(ord_calendar):
    cal = ord_calendar(30)
    series = FlowSeries(cal, np.ones(30))
    with pytest.raises(ScenarioError):
        scenario_split(cal, series, FLOW_SCENARIOS[0])

def test_scenario_round_trip():
    sc = WAIT_SCENARIO
    assert Scenario.from_dict(sc.to_dict()) == sc


# --- sparse waits

@pytest.fixture
def weekly_log():
    types = ["ORD"] * 30
    types[14] = "SCH"  # day 15
    cal = ServiceCalendar("2018-01-08", types)
    log = RequestLog(cal, [1, 8, 15, 22, 29, 29], [10.0, 10.0, 10.0, 10.0, 10.0, 800.0],
                     [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    return cal, log, IntervalGrid(2)

def test_sparse_pool_same_weekday_and_type(weekly_log):
    cal, log, grid = weekly_log
    pool = aggregate_sparse_waits(log, cal, 29, 1, 2, grid)
    assert pool.days == [22]
    assert pool.waits.tolist() == [4.0]
    pool = aggregate_sparse_waits(log, cal, 29, 1, 4, grid, include_current=True)
    assert pool.days == [1, 8, 22, 29]
    assert pool.waits.tolist() == [1.0, 2.0, 4.0, 5.0]
    assert aggregate_sparse_waits(log, cal, 29, 2, 1, grid).empty

def test_sparse_pool_errors(weekly_log):
    cal, log, grid = weekly_log
    with pytest.raises(DomainError):
        aggregate_sparse_waits(log, cal, 29, 1, 0, grid)
    with pytest.raises(RangeError):
        aggregate_sparse_waits(log, cal, 29, 3, 1, grid)

def test_aggregate_test_cells(weekly_log):
    cal, log, grid = weekly_log
    cells, pooled = aggregate_test_cells(log, cal, [29], grid, 2)
    assert sorted(cells) == [(29, 1), (29, 2)]
    assert cells[(29, 1)].tolist() == [4.0, 5.0]
    assert cells[(29, 2)].tolist() == [6.0]
    assert pooled == {22, 29}
