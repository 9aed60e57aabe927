#-----------------------------
# -- Poolcast --
#-----------------------------

"""
Metrics and experiment protocol

- PE(delta): share of observed waits closer than delta minutes to the
  predictive mean wait of their (day, interval) cell
- weekly MSE of the daily flow predictions, Monday-anchored weeks
- train/test scenarios and their materialisation
- pooling of sparse test waits over previous weeks
"""

import logging
import datetime
import numpy as np
from dataclasses import dataclass, field
from typing import Dict, List, Tuple
from . import lib
from .calendar import ServiceCalendar
from .flow_model import FlowSeries
from .waiting_model import IntervalGrid, RequestLog
from .exceptions import DataError, DomainError, ScenarioError

logger = logging.getLogger(__name__)


#------------------------------------------------------------------------------
# PE

@dataclass
class PeCurve:
    deltas: np.ndarray
    values: np.ndarray

    def __iter__(self):
        yield from zip(self.deltas.tolist(), self.values.tolist())

    def at(self, delta:float) -> float:
        idx = np.flatnonzero(np.isclose(self.deltas, delta))
        if not idx.size:
            raise KeyError(delta)
        return float(self.values[idx[0]])

    def to_list(self) -> list:
        return [[d, v] for d, v in self]


def _pe_from_distances(dist:np.ndarray, deltas) -> np.ndarray:
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(deltas < 0):
        raise DomainError("delta must be >= 0")
    if dist.size == 0:
        raise DataError("no observed wait to score")
    d = np.sort(dist)
    # strict inequality |mean - w| < delta
    return np.searchsorted(d, deltas, side="left") / d.size


def _cube_distances(observed, predicted_mean) -> np.ndarray:
    obs = np.asarray(observed, dtype=float)
    pm = np.asarray(predicted_mean, dtype=float)
    if obs.ndim != 3 or pm.shape != obs.shape[:2]:
        raise DataError("observed waits (N, S, J) and predicted means (N, S) do not align: %s vs %s"
                        % (obs.shape, pm.shape))
    return np.abs(pm[:, :, None] - obs).ravel()


def pe_metric(observed, predicted_mean, delta:float) -> float:
    """
    PE(delta) = 1/(N S J) sum_i sum_s sum_j 1{|mean_(i,s) - w_(i,s,j)| < delta}

    Params:
        observed: waits (N, S, J)
        predicted_mean: per cell mean of the predictive draws (N, S)
        delta: minutes, >= 0

    Returns:
        float in [0, 1]
    """
    return float(_pe_from_distances(_cube_distances(observed, predicted_mean), delta)[0])


def pe_curve(observed, predicted_mean, deltas) -> PeCurve:
    deltas = np.asarray(deltas, dtype=float)
    return PeCurve(deltas, _pe_from_distances(_cube_distances(observed, predicted_mean), deltas))


def log_cells(log:RequestLog, grid:IntervalGrid) -> Dict[Tuple[int, int], np.ndarray]:
    """ (day, interval) -> observed pseudo waits """
    s = log.intervals(grid)
    cells = {}
    for d, k in sorted(set(zip(log.day.tolist(), s.tolist()))):
        cells[(d, k)] = log.pseudo_wait[(log.day == d) & (s == k)]
    return cells


def _cells_distances(cells:dict, predicted_mean, first_day:int) -> np.ndarray:
    pm = np.asarray(predicted_mean, dtype=float)
    dist, skipped = [], 0
    for (d, s), waits in cells.items():
        row = d - first_day
        if not (0 <= row < pm.shape[0] and 1 <= s <= pm.shape[1]):
            raise DataError("no predicted mean for day %d interval %d" % (d, s), day=d, interval=s)
        mean = pm[row, s - 1]
        if not np.isfinite(mean):
            skipped += len(waits)
            continue
        dist.append(np.abs(mean - np.asarray(waits, dtype=float)))
    if skipped:
        logger.warning("%d observed waits fall in cells without a prediction and are not scored", skipped)
    return np.concatenate(dist) if dist else np.empty(0)


def pe_metric_cells(cells:dict, predicted_mean, delta:float, first_day:int=1) -> float:
    """
    PE(delta) over ragged cells, every observed wait counts once.

    Params:
        cells: (day, interval) -> waits
        predicted_mean: (days, S), row 0 holding `first_day`
    """
    return float(_pe_from_distances(_cells_distances(cells, predicted_mean, first_day), delta)[0])


def pe_curve_cells(cells:dict, predicted_mean, deltas, first_day:int=1) -> PeCurve:
    deltas = np.asarray(deltas, dtype=float)
    return PeCurve(deltas, _pe_from_distances(_cells_distances(cells, predicted_mean, first_day), deltas))


def pe_metric_log(log:RequestLog, predicted_mean, grid:IntervalGrid, delta:float, first_day:int=1) -> float:
    """
    PE(delta) of a request log, one observed wait per request
    """
    return pe_metric_cells(log_cells(log, grid), predicted_mean, delta, first_day)


#------------------------------------------------------------------------------
# Weekly MSE

@dataclass
class WeeklyError:
    week_start: datetime.date
    n_days: int
    mse: float
    partial: bool

    def to_dict(self) -> dict:
        return {
            "week_start": lib.format_date(self.week_start),
            "n_days": self.n_days,
            "mse": self.mse,
            "partial": self.partial
        }


def weekly_mse(observed, predicted, cal:ServiceCalendar, burn_in_weeks:int=0) -> List[WeeklyError]:
    """
    Mean squared error per Monday-anchored week

    Days without a prediction (NaN) are left out. Weeks with fewer than 7
    scored days are flagged partial. The first `burn_in_weeks` weeks of the
    calendar are dropped.

    Params:
        observed: flows y_1..y_N
        predicted: predictions aligned with observed
        cal: calendar of the N days

    Returns:
        list of WeeklyError
    """
    y = np.asarray(observed.flows if isinstance(observed, FlowSeries) else observed, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if y.shape != p.shape or y.ndim != 1 or len(y) > len(cal):
        raise DataError("observed and predicted flows must be aligned vectors within the calendar")
    if burn_in_weeks < 0:
        raise DomainError("burn_in_weeks must be >= 0")

    weeks = {}
    for k in range(len(y)):
        weeks.setdefault(lib.week_start(cal.dates[k]), []).append(k)
    out = []
    for n, (monday, idx) in enumerate(sorted(weeks.items())):
        if n < burn_in_weeks:
            continue
        idx = [k for k in idx if np.isfinite(p[k])]
        if not idx:
            continue
        err = y[idx] - p[idx]
        out.append(WeeklyError(monday, len(idx), float(np.mean(err ** 2)), len(idx) < 7))
    return out


def mse_sum(weekly:List[WeeklyError]) -> float:
    return float(sum(w.mse for w in weekly))


#------------------------------------------------------------------------------
# Scenarios

@dataclass(frozen=True)
class Scenario:
    label: str
    train_start: datetime.date
    train_end: datetime.date
    test_start: datetime.date
    test_end: datetime.date
    aggregation_weeks: int = None

    def __post_init__(self):
        for name in ("train_start", "train_end", "test_start", "test_end"):
            try:
                object.__setattr__(self, name, lib.parse_date(getattr(self, name)))
            except (ValueError, TypeError) as e:
                raise ScenarioError("invalid %s: %s" % (name, e), field=name)
        if self.train_end < self.train_start:
            raise ScenarioError("empty training range", scenario=self.label)
        if self.test_end < self.test_start:
            raise ScenarioError("empty test range", scenario=self.label)
        if self.test_start <= self.train_end:
            raise ScenarioError("training must end before the test starts", scenario=self.label)
        if self.aggregation_weeks is not None and self.aggregation_weeks < 1:
            raise ScenarioError("aggregation_weeks must be >= 1", scenario=self.label)

    @property
    def n_train_days(self) -> int:
        return lib.days_between(self.train_start, self.train_end) + 1

    @property
    def n_test_days(self) -> int:
        return lib.days_between(self.test_start, self.test_end) + 1

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "train_start": lib.format_date(self.train_start),
            "train_end": lib.format_date(self.train_end),
            "test_start": lib.format_date(self.test_start),
            "test_end": lib.format_date(self.test_end),
            "aggregation_weeks": self.aggregation_weeks
        }

    @classmethod
    def from_dict(cls, data:dict) -> "Scenario":
        try:
            return cls(**data)
        except TypeError as e:
            raise ScenarioError(str(e))


def _flow_scenario(n:int, test_start:str, test_end:str) -> Scenario:
    return Scenario("flow-%d" % n, "2018-05-15", lib.shift_date(test_start, -1), test_start, test_end)


# training from 2018-05-15 up to the day before each Monday-Sunday test week
FLOW_SCENARIOS = (
    _flow_scenario(1, "2019-01-14", "2019-01-20"),
    _flow_scenario(2, "2019-02-25", "2019-03-03"),
    _flow_scenario(3, "2019-04-29", "2019-05-05"),
    _flow_scenario(4, "2019-05-06", "2019-05-12"),
    _flow_scenario(5, "2019-05-13", "2019-05-19"),
    _flow_scenario(6, "2019-05-20", "2019-05-26"),
)

WAIT_SCENARIO = Scenario("waits", "2019-07-25", "2020-01-12", "2020-01-13", "2020-02-17", aggregation_weeks=5)


@dataclass
class ScenarioData:
    scenario: Scenario
    train: object
    test: object
    counts: dict = field(default_factory=dict)


def _covered(cal:ServiceCalendar, scenario:Scenario):
    for name in ("train_start", "test_end"):
        dt = getattr(scenario, name)
        if not cal.contains(dt):
            raise ScenarioError("%s %s is outside the data %s..%s"
                                % (name, dt, cal.start_date, cal.end_date), scenario=scenario.label)


def scenario_split(cal:ServiceCalendar, data, scenario:Scenario) -> ScenarioData:
    """
    Materialise the train and test subsets of a flow series or a request log

    Params:
        cal: the calendar of the data
        data: FlowSeries or RequestLog
        scenario: Scenario

    Returns:
        ScenarioData, counts in days for flows and in requests for logs
    """
    _covered(cal, scenario)
    if isinstance(data, FlowSeries):
        _covered(data.calendar, scenario)
        train = data.slice(scenario.train_start, scenario.train_end)
        test = data.slice(scenario.test_start, scenario.test_end)
        counts = {"train_days": len(train), "test_days": len(test)}
    elif isinstance(data, RequestLog):
        _covered(data.calendar, scenario)
        train = data.slice(scenario.train_start, scenario.train_end)
        test = data.slice(scenario.test_start, scenario.test_end)
        counts = {"train_days": len(train.calendar), "test_days": len(test.calendar),
                  "train_waits": len(train), "test_waits": len(test)}
    else:
        raise DataError("scenario_split handles FlowSeries and RequestLog, got %s" % type(data).__name__)
    logger.info("scenario %s: %s", scenario.label, counts)
    return ScenarioData(scenario, train, test, counts)


#------------------------------------------------------------------------------
# Sparse waits

@dataclass
class SparsePool:
    day: int
    interval: int
    waits: np.ndarray
    days: List[int]

    @property
    def empty(self) -> bool:
        return self.waits.size == 0


def aggregate_sparse_waits(log:RequestLog, cal:ServiceCalendar, i:int, s:int, weeks:int,
                           grid:IntervalGrid, include_current:bool=False) -> SparsePool:
    """
    Pool the waits of interval s over the previous `weeks` weeks on days
    sharing the weekday and the day type of day i, ie offsets 7, 14 .. 7*weeks.

    Returns:
        SparsePool, `days` lists the pooled days
    """
    if weeks < 1:
        raise DomainError("weeks must be >= 1")
    grid.bounds(s)
    dt = cal.day_type(i)
    days = [i] if include_current else []
    days += [i - k for k in range(7, 7 * weeks + 1, 7) if i - k >= 1 and cal.day_type(i - k) == dt]
    intervals = log.intervals(grid)
    keep = np.isin(log.day, days) & (intervals == s)
    pool = SparsePool(i, s, log.pseudo_wait[keep], sorted(set(log.day[keep].tolist())))
    if pool.empty:
        logger.debug("empty pool for day %d interval %d", i, s)
    return pool


def aggregate_test_cells(log:RequestLog, cal:ServiceCalendar, test_days, grid:IntervalGrid, weeks:int):
    """
    Pooled observed waits for every test day and interval, with the pooled
    days that must leave the training data.

    Returns:
        (cells dict (day, interval) -> waits, set of pooled days)
    """
    cells, pooled = {}, set()
    for i in test_days:
        for s in range(1, grid.S + 1):
            pool = aggregate_sparse_waits(log, cal, i, s, weeks, grid, include_current=True)
            if pool.empty:
                continue
            cells[(i, s)] = pool.waits
            pooled.update(pool.days)
    if pooled:
        logger.info("sparse waits pooled from %d days", len(pooled))
    return cells, pooled
