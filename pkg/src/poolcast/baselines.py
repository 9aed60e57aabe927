#-----------------------------
# -- Poolcast --
#-----------------------------

"""
Comparison models for the daily driver flow

BASE: average of the previous days sharing the weekday, or of the previous
holidays when the day is a holiday.

PROP: additive model trend + seasonality + holiday effect,

    y(i) = g(i) + s(i) + h(i)
    g(i) = (k + a(i)'delta) * i + (m + a(i)'gamma),    gamma_l = -s_l * delta_l
    s(i) = sum_cycles sum_l a_l cos(2 pi l i / P) + b_l sin(2 pi l i / P)
    h(i) = (1{DT=SCH}, 1{DT=PWE})' kappa

fitted by least squares with a smoothed L1 penalty on the rate changes.
"""

import logging
import numpy as np
from dataclasses import dataclass, field, asdict
from typing import List, Tuple
from .calendar import ServiceCalendar, CollapsedDayType, DAY_TYPES
from .flow_model import FlowSeries
from .exceptions import ColdStartError, DataError, DomainError, RangeError, ConfigError

logger = logging.getLogger(__name__)


def _flow_values(flows) -> np.ndarray:
    return flows.flows if isinstance(flows, FlowSeries) else np.asarray(flows, dtype=float)


#------------------------------------------------------------------------------
# BASE

def baseline_predict(cal:ServiceCalendar, flows, i:int) -> float:
    """
    Multi-level average of previous days

    Holidays (DT' = HOL) average the previous holidays, every other day
    averages the previous days with the same weekday. Only days with an
    observed flow contribute.

    Params:
        cal: ServiceCalendar covering day i
        flows: observed flows y_1..y_M (FlowSeries or array)
        i: day index

    Returns:
        float
    """
    y = _flow_values(flows)
    holiday = cal.collapsed_day_type(i) == CollapsedDayType.HOL
    offsets = cal.prior_holiday_set(i) if holiday else cal.prior_same_weekday_set(i)
    past = sorted(i - k for k in offsets if i - k <= len(y))
    if not past:
        raise ColdStartError("no previous %s to average for day %d"
                             % ("holiday" if holiday else "same weekday", i), day=i)
    return float(np.mean(y[np.asarray(past) - 1]))


def baseline_fitted(cal:ServiceCalendar, flows) -> np.ndarray:
    """
    In-sample BASE predictions, day i averaging days before i.
    NaN on cold-start days.
    """
    y = _flow_values(flows)
    out = np.full(len(y), np.nan)
    for i in range(1, len(y) + 1):
        try:
            out[i - 1] = baseline_predict(cal, y[:i - 1], i)
        except ColdStartError:
            pass
    return out


#------------------------------------------------------------------------------
# PROP

@dataclass(frozen=True)
class ProphetConfig:
    n_changepoints: int = 25
    changepoint_range: float = 0.8
    changepoint_penalty: float = 1.0
    # (period in days, number of Fourier terms)
    seasonalities: Tuple[Tuple[float, int], ...] = ((7.0, 3), (365.25, 10))
    fit_kappa: bool = False
    kappa: Tuple[float, float] = (1.0, 1.0)
    smoothing: float = 1e-6
    max_iter: int = 200
    tol: float = 1e-10

    def validate(self) -> "ProphetConfig":
        if self.n_changepoints < 0:
            raise ConfigError("n_changepoints must be >= 0", field="prophet.n_changepoints")
        if not 0 < self.changepoint_range <= 1:
            raise ConfigError("changepoint_range must be in (0, 1]", field="prophet.changepoint_range")
        if self.changepoint_penalty < 0:
            raise ConfigError("changepoint_penalty must be >= 0", field="prophet.changepoint_penalty")
        for period, order in self.seasonalities:
            if not period > 0 or int(order) != order or order < 1:
                raise ConfigError("seasonality needs P > 0 and L >= 1, got (%s, %s)" % (period, order),
                                  field="prophet.seasonalities")
        if len(self.kappa) != 2:
            raise ConfigError("kappa holds the SCH and PWE weights", field="prophet.kappa")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seasonalities"] = [list(s) for s in self.seasonalities]
        d["kappa"] = list(self.kappa)
        return d

    @classmethod
    def from_dict(cls, data:dict) -> "ProphetConfig":
        data = dict(data)
        if "seasonalities" in data:
            data["seasonalities"] = tuple((float(p), int(l)) for p, l in data["seasonalities"])
        if "kappa" in data:
            data["kappa"] = tuple(float(v) for v in data["kappa"])
        try:
            return cls(**data).validate()
        except TypeError as e:
            raise ConfigError(str(e), field="prophet")


@dataclass
class Seasonality:
    period: float
    a: np.ndarray  # cosine coefficients, l = 1..L
    b: np.ndarray  # sine coefficients

    @property
    def order(self) -> int:
        return len(self.a)


@dataclass
class ProphetParams:
    k: float
    m: float
    changepoints: np.ndarray = field(default_factory=lambda: np.empty(0))
    delta: np.ndarray = field(default_factory=lambda: np.empty(0))
    seasonalities: List[Seasonality] = field(default_factory=list)
    kappa: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        self.changepoints = np.asarray(self.changepoints, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        if self.changepoints.shape != self.delta.shape:
            raise DomainError("one rate change per changepoint")
        if np.any(np.diff(self.changepoints) <= 0):
            raise DomainError("changepoints must be strictly increasing")
        for c in self.seasonalities:
            if not c.period > 0 or c.order < 1 or len(c.b) != c.order:
                raise DomainError("seasonality needs P > 0 and L >= 1 cosine/sine pairs")

    @property
    def gamma(self) -> np.ndarray:
        """ continuity offsets, gamma_l = -s_l * delta_l """
        return -self.changepoints * self.delta

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "m": self.m,
            "changepoints": self.changepoints.tolist(),
            "delta": self.delta.tolist(),
            "seasonalities": [{"period": c.period, "a": c.a.tolist(), "b": c.b.tolist()}
                              for c in self.seasonalities],
            "kappa": self.kappa.tolist()
        }


def _days(i):
    arr = np.asarray(i, dtype=float)
    return arr, arr.ndim == 0


def _out(values, scalar):
    return float(values) if scalar else values


def prophet_trend(p:ProphetParams, i):
    """
    Piecewise linear trend g(i), continuous at every changepoint
    """
    t, scalar = _days(i)
    t = np.atleast_1d(t)
    a = (t[:, None] >= p.changepoints[None, :]).astype(float)
    g = (p.k + a @ p.delta) * t + (p.m + a @ p.gamma)
    return _out(g[0] if scalar else g, scalar)


def fourier_terms(i, period:float, order:int) -> np.ndarray:
    """ [cos(2 pi l i / P), sin(2 pi l i / P)] for l = 1..L, (n, 2L) """
    t = np.atleast_1d(np.asarray(i, dtype=float))
    x = 2.0 * np.pi * np.outer(t, np.arange(1, order + 1)) / period
    return np.hstack([np.cos(x), np.sin(x)])


def prophet_seasonal(p:ProphetParams, i):
    """
    Fourier seasonality s(i) summed over every cycle
    """
    t, scalar = _days(i)
    s = np.zeros(np.atleast_1d(t).shape)
    for c in p.seasonalities:
        s += fourier_terms(t, c.period, c.order) @ np.concatenate([c.a, c.b])
    return _out(s[0] if scalar else s, scalar)


def holiday_indicators(cal:ServiceCalendar, i) -> np.ndarray:
    """ (n, 2) indicators 1{DT=SCH}, 1{DT=PWE} """
    days = np.atleast_1d(np.asarray(i, dtype=int))
    codes = np.array([DAY_TYPES.index(cal.day_type(int(d))) for d in days])
    return np.column_stack([codes == 1, codes == 2]).astype(float)


def prophet_holiday(p:ProphetParams, cal:ServiceCalendar, i):
    """
    Holiday effect h(i)'kappa
    """
    _, scalar = _days(i)
    h = holiday_indicators(cal, i) @ p.kappa
    return _out(h[0] if scalar else h, scalar)


def prophet_predict(p:ProphetParams, cal:ServiceCalendar, i):
    """
    trend + seasonality + holiday effect
    """
    return prophet_trend(p, i) + prophet_seasonal(p, i) + prophet_holiday(p, cal, i)


def changepoint_grid(n_days:int, n_changepoints:int, changepoint_range:float) -> np.ndarray:
    """
    Evenly spaced changepoints over the first `changepoint_range` share of
    the history, day indexes 1-based. The first day is never a changepoint.
    """
    hist_size = int(np.floor(n_days * changepoint_range))
    if n_changepoints + 1 > hist_size:
        n_changepoints = max(hist_size - 1, 0)
        logger.info("n_changepoints greater than number of observations, using %d", n_changepoints)
    if n_changepoints == 0:
        return np.empty(0)
    idx = np.linspace(0, hist_size - 1, n_changepoints + 1).round().astype(int)
    return np.unique(idx[1:] + 1).astype(float)


def prophet_components(cal:ServiceCalendar, days, changepoints:np.ndarray, cfg:ProphetConfig) -> np.ndarray:
    """
    Design matrix [i, 1, (i - s_l)+, Fourier terms per cycle, SCH, PWE]
    The holiday columns are present only when kappa is fitted.
    """
    t = np.asarray(days, dtype=float)
    cols = [t[:, None], np.ones((len(t), 1)), np.maximum(t[:, None] - changepoints[None, :], 0.0)]
    for period, order in cfg.seasonalities:
        cols.append(fourier_terms(t, period, order))
    if cfg.fit_kappa:
        cols.append(holiday_indicators(cal, t.astype(int)))
    return np.hstack(cols)


def _unpack(beta:np.ndarray, changepoints:np.ndarray, cfg:ProphetConfig) -> ProphetParams:
    n_cp = len(changepoints)
    pos = 2 + n_cp
    seasonalities = []
    for period, order in cfg.seasonalities:
        a = beta[pos:pos + order]
        b = beta[pos + order:pos + 2 * order]
        seasonalities.append(Seasonality(float(period), a.copy(), b.copy()))
        pos += 2 * order
    kappa = beta[pos:pos + 2].copy() if cfg.fit_kappa else np.asarray(cfg.kappa, dtype=float)
    return ProphetParams(k=float(beta[0]), m=float(beta[1]), changepoints=changepoints,
                         delta=beta[2:2 + n_cp].copy(), seasonalities=seasonalities, kappa=kappa)


def prophet_fit(cal:ServiceCalendar, flows, config:ProphetConfig=None) -> ProphetParams:
    """
    Fit the additive model on days 1..N

    Minimises sum (y - g - s - h)^2 + lambda * sum sqrt(delta_l^2 + eps) by
    majorise-minimise: every step is a ridge least squares on delta with
    weights lambda / (2 sqrt(delta_l^2 + eps)). Without changepoints it is a
    single least squares. A rank deficient design is logged and solved with
    the minimum norm solution.

    Params:
        cal: ServiceCalendar covering the flows
        flows: FlowSeries or array y_1..y_N
        config: ProphetConfig

    Returns:
        ProphetParams
    """
    cfg = (config or ProphetConfig()).validate()
    y = _flow_values(flows)
    N = len(y)
    if N > len(cal):
        raise RangeError("calendar holds %d days for %d flows" % (len(cal), N))
    days = np.arange(1, N + 1)
    changepoints = changepoint_grid(N, cfg.n_changepoints, cfg.changepoint_range)
    X = prophet_components(cal, days, changepoints, cfg)
    if N < X.shape[1]:
        raise DataError("additive model has %d coefficients but only %d days" % (X.shape[1], N))

    target = y.copy()
    if not cfg.fit_kappa:
        target = target - holiday_indicators(cal, days) @ np.asarray(cfg.kappa, dtype=float)

    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        logger.warning("design matrix rank %d < %d columns, using the minimum norm solution", rank, X.shape[1])

    beta = np.linalg.lstsq(X, target, rcond=None)[0]
    n_cp = len(changepoints)
    if n_cp and cfg.changepoint_penalty > 0:
        cp_cols = np.arange(2, 2 + n_cp)
        prev = np.inf
        for it in range(cfg.max_iter):
            w = cfg.changepoint_penalty / (2.0 * np.sqrt(beta[cp_cols] ** 2 + cfg.smoothing))
            penalty_rows = np.zeros((n_cp, X.shape[1]))
            penalty_rows[np.arange(n_cp), cp_cols] = np.sqrt(w)
            beta = np.linalg.lstsq(np.vstack([X, penalty_rows]),
                                   np.concatenate([target, np.zeros(n_cp)]), rcond=None)[0]
            resid = target - X @ beta
            obj = float(resid @ resid + cfg.changepoint_penalty * np.sum(np.sqrt(beta[cp_cols] ** 2 + cfg.smoothing)))
            if prev - obj <= cfg.tol * max(1.0, abs(obj)):
                break
            prev = obj
        logger.debug("additive model converged after %d majorise-minimise steps", it + 1)
    return _unpack(beta, changepoints, cfg)
