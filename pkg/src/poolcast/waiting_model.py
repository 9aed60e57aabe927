#-----------------------------
# -- Poolcast --
#-----------------------------

"""
Gamma regression of passenger pseudo waiting times

A request made on day i inside interval s waits w ~ Gamma(nu, rate = beta_s * y_i),
so the conditional mean wait is nu / (beta_s * y_i) minutes. Holds the event
to wait conversion, the interval likelihood, the beta posterior (sampled or
conjugate), the generative simulator and the predictive samplers.

:USAGE

grid = IntervalGrid(8)
log = RequestLog.from_frame(lib.read_csv("waits.csv"), calendar)
nu = estimate_nu(flows, log, grid)
draws, diag = fit_waits(flows, log, grid, nu, McmcConfig(seed=1))
samples = predict_wait_given_flow(draws, nu, y_tilde=120.0, s=3, rng=rng)

"""

import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass
from typing import Sequence
from scipy import stats
from scipy.special import gammaln
from . import lib
from .calendar import ServiceCalendar
from .flow_model import FlowParams, FlowSeries, simulate_flow_series, DEFAULT_INIT_MEAN
from .inference import McmcConfig, PositiveSupport, SimplexSupport, PosteriorDraws, sample
from .exceptions import (RangeError, DomainError, DataError, SchemaError, UnidentifiedError,
                         ImproperPosteriorError, InfeasibleConditioningError)

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440

PRIORS = ("flat_positive", "dirichlet")

# perceived-wait conditioning gives up below this acceptance rate
MIN_ACCEPTANCE = 1e-6


def beta_name(s:int) -> str:
    return "beta_%d" % s


class IntervalGrid(object):
    """
    S equal half-open intervals [start, end) partitioning the day, in minutes
    since midnight. Interval indexes are 1-based.
    """

    def __init__(self, S:int):
        if int(S) != S or S < 1:
            raise DomainError("S must be a positive integer, got %s" % S, field="S")
        if MINUTES_PER_DAY % S:
            raise DomainError("S must divide 1440 evenly, got %s" % S, field="S")
        self.S = int(S)
        self.width = MINUTES_PER_DAY / self.S

    def __len__(self):
        return self.S

    def __eq__(self, other):
        return isinstance(other, IntervalGrid) and other.S == self.S

    def bounds(self, s:int) -> tuple:
        if not 1 <= s <= self.S:
            raise RangeError("interval %s outside 1..%d" % (s, self.S), interval=s)
        return ((s - 1) * self.width, s * self.width)

    def interval_of(self, t) -> int:
        return int(self.intervals_of([t])[0])

    def intervals_of(self, times) -> np.ndarray:
        """ 1-based interval of every time """
        t = np.asarray(times, dtype=float)
        if t.size and (np.any(t < 0) or np.any(t >= MINUTES_PER_DAY) or not np.all(np.isfinite(t))):
            raise RangeError("request times must lie in [0, 1440) minutes")
        return (np.floor(t / self.width).astype(int) + 1).clip(1, self.S)


@dataclass(frozen=True)
class WaitParams:
    nu: float
    beta: tuple

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise DomainError("nu must be > 0, got %s" % self.nu, field="nu")
        beta = tuple(float(b) for b in self.beta)
        if not beta:
            raise DomainError("beta must hold one value per interval", field="beta")
        if any(not np.isfinite(b) or b < 0 for b in beta):
            raise DomainError("beta values must be >= 0", field="beta")
        object.__setattr__(self, "beta", beta)

    @property
    def S(self) -> int:
        return len(self.beta)

    def beta_vector(self) -> np.ndarray:
        return np.array(self.beta)


def pseudo_waits_from_events(requests, arrivals):
    """
    Pseudo and perceived waits of one day of FIFO matched events

        pseudo_j    = t'_j - max(t_j, t'_(j-1)),  t'_0 = t_1
        perceived_j = t'_j - t_j

    Params:
        requests: strictly increasing request times t_1..t_n
        arrivals: ascending driver arrival times t'_1..t'_n

    Returns:
        (pseudo, perceived) arrays
    """
    t = np.asarray(requests, dtype=float)
    a = np.asarray(arrivals, dtype=float)
    if t.shape != a.shape or t.ndim != 1:
        raise DataError("requests and arrivals must be vectors of equal length")
    if t.size == 0:
        return np.empty(0), np.empty(0)
    if np.any(np.diff(t) <= 0):
        raise DataError("request times must be strictly increasing")
    if np.any(np.diff(a) < 0):
        raise DataError("arrivals must be sorted ascending")
    prev = np.concatenate([[t[0]], a[:-1]])
    start = np.maximum(t, prev)
    pseudo = a - start
    bad = np.flatnonzero(pseudo <= 0)
    if bad.size:
        j = int(bad[0])
        raise DataError("arrival %d at %.4f is not after %.4f" % (j + 1, a[j], start[j]), index=j + 1)
    return pseudo, a - t


class RequestLog(object):
    """
    Passenger requests with their pseudo waits, one record per request,
    sorted by day then request time.

    Params:
        calendar: ServiceCalendar the day indexes refer to
        day: 1-based day index per record
        request_time: minutes since midnight
        pseudo_wait: minutes, > 0
        arrival_time: optional driver arrival times
        perceived_wait: optional perceived waits
    """

    def __init__(self, calendar:ServiceCalendar, day, request_time, pseudo_wait, arrival_time=None, perceived_wait=None):
        day = np.asarray(day, dtype=int)
        t = np.asarray(request_time, dtype=float)
        w = np.asarray(pseudo_wait, dtype=float)
        if not (day.shape == t.shape == w.shape) or day.ndim != 1:
            raise DataError("request log columns must have equal length")
        if day.size and (day.min() < 1 or day.max() > len(calendar)):
            raise RangeError("request log days outside calendar 1..%d" % len(calendar))
        if np.any(~(w > 0)):
            raise DataError("pseudo waits must be > 0", index=int(np.flatnonzero(~(w > 0))[0]) + 1)
        order = np.lexsort((t, day))
        day, t, w = day[order], t[order], w[order]
        same_day = day[1:] == day[:-1]
        if np.any(same_day & (np.diff(t) <= 0)):
            raise DataError("request times must be strictly increasing within a day")
        self.calendar = calendar
        self.day = day
        self.request_time = t
        self.pseudo_wait = w
        self.arrival_time = None if arrival_time is None else np.asarray(arrival_time, dtype=float)[order]
        self.perceived_wait = None if perceived_wait is None else np.asarray(perceived_wait, dtype=float)[order]

    def __len__(self):
        return len(self.day)

    @property
    def days(self) -> np.ndarray:
        """ days holding at least one request """
        return np.unique(self.day)

    def _subset(self, keep:np.ndarray, calendar:ServiceCalendar=None, shift:int=0) -> "RequestLog":
        pick = lambda a: None if a is None else a[keep]
        return RequestLog(calendar or self.calendar, self.day[keep] - shift, self.request_time[keep],
                          self.pseudo_wait[keep], pick(self.arrival_time), pick(self.perceived_wait))

    def drop_days(self, days) -> "RequestLog":
        return self._subset(~np.isin(self.day, list(days)))

    def slice(self, start, end) -> "RequestLog":
        """ Records between two dates, re-indexed on the sub calendar """
        a = self.calendar.index_of(start)
        b = self.calendar.index_of(end)
        keep = (self.day >= a) & (self.day <= b)
        return self._subset(keep, self.calendar.slice(start, end), shift=a - 1)

    def intervals(self, grid:IntervalGrid) -> np.ndarray:
        return grid.intervals_of(self.request_time)

    def cell(self, i:int, s:int, grid:IntervalGrid) -> np.ndarray:
        """ Pseudo waits of day i inside interval s """
        return self.pseudo_wait[(self.day == i) & (self.intervals(grid) == s)]

    def to_cube(self, grid:IntervalGrid) -> np.ndarray:
        """
        (N, S, J) cube of waits when every day and interval holds the same
        number J of requests, ie a simulated log
        """
        N = len(self.calendar)
        cells = self.day * (grid.S + 1) + self.intervals(grid)
        counts = np.bincount(cells, minlength=(N + 1) * (grid.S + 1)).reshape(N + 1, grid.S + 1)[1:, 1:]
        J = int(counts.max()) if counts.size else 0
        if J == 0 or np.any(counts != J):
            raise DataError("request log is ragged, every day and interval must hold the same count")
        order = np.lexsort((self.request_time, self.intervals(grid), self.day))
        return self.pseudo_wait[order].reshape(N, grid.S, J)

    @classmethod
    def from_events(cls, calendar:ServiceCalendar, day, requests, arrivals) -> "RequestLog":
        """
        Build a log from request and FIFO matched driver arrival times.
        Pseudo and perceived waits are derived per day.
        """
        day = np.asarray(day, dtype=int)
        t = np.asarray(requests, dtype=float)
        a = np.asarray(arrivals, dtype=float)
        if not (day.shape == t.shape == a.shape):
            raise DataError("events columns must have equal length")
        order = np.lexsort((t, day))
        day, t, a = day[order], t[order], a[order]
        pseudo = np.empty(len(t))
        perceived = np.empty(len(t))
        for d in np.unique(day):
            sel = day == d
            try:
                pseudo[sel], perceived[sel] = pseudo_waits_from_events(t[sel], a[sel])
            except DataError as e:
                raise DataError("day %d: %s" % (d, e.message), day=int(d), **e.details)
        return cls(calendar, day, t, pseudo, arrival_time=a, perceived_wait=perceived)

    @classmethod
    def from_wait_cube(cls, calendar:ServiceCalendar, cube, grid:IntervalGrid) -> "RequestLog":
        """
        Turn simulated waits W[j, i, s] (J, N, S) into a log. Replicate j of
        interval s is requested at start_s + (j + 0.5) * width / J.
        """
        W = np.asarray(cube, dtype=float)
        if W.ndim != 3 or W.shape[2] != grid.S or W.shape[1] > len(calendar):
            raise DataError("wait cube must be (J, N, S) with S=%d and N within the calendar" % grid.S)
        J, N, S = W.shape
        offsets = (np.arange(J) + 0.5) * grid.width / J
        starts = np.arange(S) * grid.width
        times = (starts[:, None] + offsets[None, :]).ravel()
        day = np.repeat(np.arange(1, N + 1), S * J)
        return cls(calendar, day, np.tile(times, N), W.transpose(1, 2, 0).ravel())

    def to_frame(self) -> pd.DataFrame:
        dates = self.calendar.dates
        data = {
            "date": [lib.format_date(dates[d - 1]) for d in self.day],
            "request_time": [lib.format_clock(t) for t in self.request_time],
            "pseudo_wait_min": self.pseudo_wait
        }
        if self.arrival_time is not None:
            data["arrival_time"] = [lib.format_clock(t) for t in self.arrival_time]
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, df:pd.DataFrame, calendar:ServiceCalendar) -> "RequestLog":
        """
        Parse a waits frame `date,request_time,pseudo_wait_min[,arrival_time]`.
        When arrival times are present pseudo waits are recomputed from the
        events and cross-checked, to the second.
        """
        missing = {"date", "request_time", "pseudo_wait_min"} - set(df.columns)
        if missing:
            raise SchemaError("waits file is missing columns: %s" % ", ".join(sorted(missing)))
        day, t, w = [], [], []
        for row, (d, rt, pw) in enumerate(zip(df["date"], df["request_time"], df["pseudo_wait_min"]), start=2):
            try:
                dt = lib.parse_date(d)
                t.append(lib.parse_clock(rt))
                w.append(float(pw))
            except (ValueError, TypeError) as e:
                raise SchemaError("invalid waits row: %s" % e, row=row)
            if not calendar.contains(dt):
                raise SchemaError("date %s is outside the calendar" % d, row=row)
            if not w[-1] > 0:
                raise SchemaError("pseudo_wait_min must be > 0", row=row)
            if not 0 <= t[-1] < MINUTES_PER_DAY:
                raise SchemaError("request_time outside the day", row=row)
            day.append(calendar.index_of(dt))

        if "arrival_time" not in df.columns:
            return cls(calendar, day, t, w)

        try:
            arrivals = [lib.parse_clock(a) for a in df["arrival_time"]]
        except (ValueError, TypeError) as e:
            raise SchemaError("invalid arrival_time: %s" % e)
        log = cls.from_events(calendar, day, t, arrivals)
        # from_events sorts by (day, time) like the lexsort below
        order = np.lexsort((np.asarray(t), np.asarray(day)))
        diff = np.abs(log.pseudo_wait - np.asarray(w)[order])
        bad = np.flatnonzero(diff > 1.0 / 60 + 1e-9)
        if bad.size:
            raise SchemaError("pseudo_wait_min disagrees with the arrival times", row=int(order[bad[0]]) + 2)
        return log


#------------------------------------------------------------------------------
# Likelihood + posterior

@dataclass
class WaitStatistics:
    """
    Per interval sufficient statistics of the Gamma likelihood, arrays of length S
    """
    n: np.ndarray
    sum_yw: np.ndarray
    sum_log_w: np.ndarray
    sum_log_y: np.ndarray

    @property
    def S(self) -> int:
        return len(self.n)

    def identified(self) -> list:
        """ 1-based intervals holding data """
        return [s + 1 for s in np.flatnonzero(self.n > 0)]


def flows_per_record(flows:FlowSeries, log:RequestLog) -> np.ndarray:
    """ y_i of the day of every request, matched by date """
    offset = lib.days_between(flows.calendar.start_date, log.calendar.start_date)
    idx = log.day + offset - 1
    if idx.size and (idx.min() < 0 or idx.max() >= flows.N):
        raise RangeError("request log days are not covered by the flow series")
    return flows.flows[idx]


def wait_statistics(flows:FlowSeries, log:RequestLog, grid:IntervalGrid) -> WaitStatistics:
    y = flows_per_record(flows, log)
    s = log.intervals(grid) - 1
    w = log.pseudo_wait

    def total(v):
        return np.bincount(s, weights=v, minlength=grid.S)

    return WaitStatistics(n=np.bincount(s, minlength=grid.S),
                          sum_yw=total(y * w),
                          sum_log_w=total(np.log(w)),
                          sum_log_y=total(np.log(y)))


def _loglik_from_stats(nu:float, beta:np.ndarray, st:WaitStatistics) -> float:
    has = st.n > 0
    if np.any(beta[has] <= 0):
        return -np.inf
    b = beta[has]
    n = st.n[has]
    return float(np.sum(nu * (n * np.log(b) + st.sum_log_y[has]) - n * gammaln(nu)
                        + (nu - 1.0) * st.sum_log_w[has] - b * st.sum_yw[has]))


def wait_log_likelihood(wp:WaitParams, flows:FlowSeries, log:RequestLog, grid:IntervalGrid) -> float:
    """
    sum over requests of  nu*log(beta_s y_i) - lgamma(nu) + (nu-1)*log(w) - beta_s y_i w

    Returns -inf when beta_s = 0 on an interval holding data.
    """
    if wp.S != grid.S:
        raise DomainError("beta holds %d values for %d intervals" % (wp.S, grid.S))
    return _loglik_from_stats(wp.nu, wp.beta_vector(), wait_statistics(flows, log, grid))


def _dirichlet_alpha(dirichlet_alpha, S:int) -> np.ndarray:
    a = np.ones(S) if dirichlet_alpha is None else np.asarray(dirichlet_alpha, dtype=float)
    if a.shape != (S,) or np.any(a <= 0):
        raise DomainError("dirichlet_alpha must hold %d positive values" % S, field="dirichlet_alpha")
    return a


def _check_prior(prior:str):
    if prior not in PRIORS:
        raise DomainError("prior must be one of %s" % ", ".join(PRIORS), field="prior")


def beta_log_posterior(wp, flows:FlowSeries, log:RequestLog, grid:IntervalGrid,
                       prior:str="flat_positive", dirichlet_alpha=None) -> float:
    """
    Log posterior of beta up to a constant.

    flat_positive: the likelihood on the positive orthant, -inf for any beta_s < 0.
    dirichlet: adds sum (alpha_s - 1) log beta_s, -inf off the simplex.

    Params:
        wp: WaitParams, or a raw (nu, beta) pair which may leave the support
    """
    _check_prior(prior)
    if isinstance(wp, WaitParams):
        nu, beta = wp.nu, wp.beta_vector()
    else:
        nu, beta = wp[0], np.asarray(wp[1], dtype=float)
    if beta.shape != (grid.S,):
        raise DomainError("beta holds %d values for %d intervals" % (beta.size, grid.S))
    if not nu > 0:
        raise DomainError("nu must be > 0", field="nu")
    if np.any(beta < 0):
        return -np.inf
    ll = _loglik_from_stats(nu, beta, wait_statistics(flows, log, grid))
    if prior == "flat_positive":
        return ll
    a = _dirichlet_alpha(dirichlet_alpha, grid.S)
    if np.any(beta <= 0) or abs(beta.sum() - 1.0) > 1e-9:
        return -np.inf
    return ll + float(np.sum((a - 1.0) * np.log(beta)))


class GammaPosterior(object):
    """
    Gamma(shape, rate) marginal posterior of one beta_s
    """

    def __init__(self, shape:float, rate:float):
        self.shape = float(shape)
        self.rate = float(rate)

    def __repr__(self):
        return "GammaPosterior(shape=%r, rate=%r)" % (self.shape, self.rate)

    @property
    def dist(self):
        """ frozen scipy distribution """
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate ** 2

    def sample(self, n:int, rng:np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=n)


def beta_conjugate_posterior(nu:float, flows:FlowSeries, log:RequestLog, grid:IntervalGrid, s:int) -> GammaPosterior:
    """
    Exact marginal posterior of beta_s under the flat prior:
    Gamma(shape = nu * n_s + 1, rate = sum of y_i * w over requests in I_s)
    """
    grid.bounds(s)
    st = wait_statistics(flows, log, grid)
    if st.n[s - 1] == 0:
        raise ImproperPosteriorError("no request in interval %d, the posterior of beta_%d is improper" % (s, s),
                                     interval=s)
    return GammaPosterior(nu * st.n[s - 1] + 1.0, st.sum_yw[s - 1])


def estimate_nu(flows:FlowSeries, log:RequestLog, grid:IntervalGrid) -> float:
    """
    Method-of-moments Gamma shape.

    Under the model y*w ~ Gamma(nu, beta_s) inside interval s, so
    mean^2 / variance of y*w estimates nu. Per interval estimates are pooled
    with weights n_s over intervals holding at least 2 requests.
    """
    y = flows_per_record(flows, log)
    z = y * log.pseudo_wait
    s = log.intervals(grid)
    est, weights = [], []
    for k in np.unique(s):
        zk = z[s == k]
        if len(zk) < 2:
            continue
        v = zk.var(ddof=1)
        if v <= 0:
            continue
        est.append(zk.mean() ** 2 / v)
        weights.append(len(zk))
    if not est:
        raise DataError("not enough waits to estimate nu, need 2 distinct waits in some interval")
    nu = float(np.average(est, weights=weights))
    logger.info("nu estimated by moments on %d intervals: %.4f", len(est), nu)
    return nu


class WaitPosterior(object):
    """
    Log posterior of beta over the sampled coordinates.

    flat_positive samples the identified intervals only, the others are
    reported unidentified. dirichlet samples the whole simplex.
    """

    def __init__(self, flows:FlowSeries, log:RequestLog, grid:IntervalGrid, nu:float,
                 prior:str="flat_positive", dirichlet_alpha=None):
        _check_prior(prior)
        if not nu > 0:
            raise DomainError("nu must be > 0", field="nu")
        self.grid = grid
        self.nu = float(nu)
        self.prior = prior
        self.stats = wait_statistics(flows, log, grid)
        self.unidentified = [s for s in range(1, grid.S + 1) if self.stats.n[s - 1] == 0]

        if prior == "dirichlet":
            self.alpha = _dirichlet_alpha(dirichlet_alpha, grid.S)
            self.free = [beta_name(s) for s in range(1, grid.S + 1)]
            self.support = SimplexSupport(grid.S)
        else:
            if len(self.unidentified) == grid.S:
                raise ImproperPosteriorError("no request in any interval")
            self.free = [beta_name(s) for s in self.stats.identified()]
            self.support = PositiveSupport(len(self.free))
        if self.unidentified:
            logger.warning("no request in interval(s) %s%s", self.unidentified,
                           ", beta held by the prior only" if prior == "dirichlet" else ", beta unidentified")

    def _beta(self, x) -> np.ndarray:
        if self.prior == "dirichlet":
            return np.asarray(x, dtype=float)
        beta = np.zeros(self.grid.S)
        beta[self.stats.n > 0] = x
        return beta

    def log_posterior(self, x) -> float:
        beta = self._beta(x)
        if np.any(beta[self.stats.n > 0] <= 0):
            return -np.inf
        ll = _loglik_from_stats(self.nu, beta, self.stats)
        if self.prior == "dirichlet":
            ll += float(np.sum((self.alpha - 1.0) * np.log(beta)))
        return ll

    def initial_values(self) -> np.ndarray:
        st = self.stats
        has = st.n > 0
        mode = np.zeros(self.grid.S)
        mode[has] = self.nu * st.n[has] / st.sum_yw[has]
        if self.prior == "flat_positive":
            return mode[has]
        fill = mode[has].min() if np.any(has) else 1.0
        mode[~has] = fill
        return mode / mode.sum()


def fit_waits(flows:FlowSeries, log:RequestLog, grid:IntervalGrid, nu:float, cfg:McmcConfig,
              prior:str="flat_positive", dirichlet_alpha=None):
    """
    Sample the beta posterior for a fixed nu

    Returns:
        (PosteriorDraws, Diagnostics)
    """
    post = WaitPosterior(flows, log, grid, nu, prior=prior, dirichlet_alpha=dirichlet_alpha)
    logger.info("fitting waiting model on %d requests, S=%d, nu=%.4f, prior %s", len(log), grid.S, nu, prior)
    return sample(post.log_posterior, post.initial_values(), cfg, support=post.support, names=post.free)


#------------------------------------------------------------------------------
# Simulator

def simulate_waits(N:int, params:FlowParams, K, nu:float, beta:Sequence[float], J:int,
                   rng:np.random.Generator, calendar:ServiceCalendar, init_mean:float=DEFAULT_INIT_MEAN,
                   wait_rng:np.random.Generator=None):
    """
    Pseudo waiting times of J passengers per day and interval

    The daily flows Y are simulated once with day types, then
    W[j, i, s] ~ Gamma(nu, rate = beta_s * Y[i]) for every replicate j.
    The waits draw from `wait_rng` when given, from `rng` otherwise.

    Returns:
        (FlowSeries, array (J, N, S))
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or np.any(~(beta > 0)):
        raise DomainError("every beta_s must be > 0 to simulate", field="beta")
    if not nu > 0:
        raise DomainError("nu must be > 0", field="nu")
    if J < 1:
        raise DomainError("J must be >= 1", field="J")
    series = simulate_flow_series(N, params, K, calendar, rng, init_mean=init_mean)
    rate = beta[None, None, :] * series.flows[None, :, None]
    W = (wait_rng or rng).gamma(nu, 1.0 / rate, size=(J, N, len(beta)))
    return series, W


#------------------------------------------------------------------------------
# Predictive

def _beta_column(draws:PosteriorDraws, s:int) -> np.ndarray:
    name = beta_name(s)
    if len(draws) == 0:
        raise DataError("posterior draws are empty")
    if name not in draws.names and name not in draws.fixed:
        raise UnidentifiedError("interval %d has no beta posterior, no request was observed there" % s,
                                interval=s)
    return draws.column(name)


def _even(values:np.ndarray, n:int) -> np.ndarray:
    if n >= len(values):
        return values
    return values[np.linspace(0, len(values) - 1, n).round().astype(int)]


def predict_wait_given_flow(beta_draws:PosteriorDraws, nu:float, y_tilde:float, s:int,
                            rng:np.random.Generator, n_draws:int=None) -> np.ndarray:
    """
    Predictive waits in interval s for a known daily flow y_tilde, one
    Gamma(nu, beta_s * y_tilde) draw per posterior draw of beta_s

    Returns:
        array (J,)
    """
    if not y_tilde > 0:
        raise DomainError("y_tilde must be > 0")
    b = _beta_column(beta_draws, s)
    if n_draws is not None:
        b = _even(b, n_draws)
    return rng.gamma(nu, 1.0 / (b * y_tilde))


def predict_wait_marginal(beta_draws:PosteriorDraws, nu:float, flow_predictive, s:int,
                          rng:np.random.Generator) -> np.ndarray:
    """
    Predictive waits in interval s integrating over the predictive flow.
    Draws of beta_s and of the flow are paired, the output size is the
    smaller of the two counts (the larger set is evenly thinned).

    Returns:
        array (min(n_beta, n_flow),)
    """
    b = _beta_column(beta_draws, s)
    y = np.asarray(flow_predictive, dtype=float).ravel()
    if y.size == 0:
        raise DataError("flow predictive sample is empty")
    if np.any(y <= 0):
        raise DomainError("predictive flows must be > 0")
    n = min(len(b), len(y))
    return rng.gamma(nu, 1.0 / (_even(b, n) * _even(y, n)))


def predict_wait_matrix(beta_draws:PosteriorDraws, nu:float, flow, grid:IntervalGrid, rng:np.random.Generator,
                        n_draws:int=None, skip_unidentified:bool=False) -> np.ndarray:
    """
    Predictive waits for every day and interval

    Params:
        flow: either known flows (days,) for the given-flow predictive, or
              predictive flow samples (days, J) for the marginal one
        n_draws: thin beta to this many draws in the given-flow mode
        skip_unidentified: fill intervals without data with NaN instead of raising

    Returns:
        array (days, S, J)
    """
    flow = np.asarray(flow, dtype=float)
    cells = []
    for i in range(flow.shape[0]):
        row = []
        for s in range(1, grid.S + 1):
            try:
                if flow.ndim == 1:
                    row.append(predict_wait_given_flow(beta_draws, nu, flow[i], s, rng, n_draws=n_draws))
                else:
                    row.append(predict_wait_marginal(beta_draws, nu, flow[i], s, rng))
            except UnidentifiedError:
                if not skip_unidentified:
                    raise
                row.append(None)
        cells.append(row)
    J = max((len(c) for row in cells for c in row if c is not None), default=0)
    out = np.full((flow.shape[0], grid.S, J), np.nan)
    for i, row in enumerate(cells):
        for k, c in enumerate(row):
            if c is not None:
                out[i, k, :len(c)] = c
    return out


def perceived_from_pseudo(w1_draws, w2_draws, zeta:float, rng:np.random.Generator) -> np.ndarray:
    """
    Perceived wait of the second of two requests zeta minutes apart,
    w2* = w2 + (w1 - zeta | w1 > zeta), with w1 and w2 independent.

    The conditioned w1 is obtained by rejection from w1_draws and paired
    with every w2 draw.

    Returns:
        array like w2_draws
    """
    if not zeta >= 0:
        raise DomainError("zeta must be >= 0", field="zeta")
    w1 = np.asarray(w1_draws, dtype=float).ravel()
    w2 = np.asarray(w2_draws, dtype=float).ravel()
    if w1.size == 0 or w2.size == 0:
        raise DataError("pseudo wait samples are empty")
    kept = w1[w1 > zeta]
    rate = kept.size / w1.size
    if kept.size == 0 or rate < MIN_ACCEPTANCE:
        raise InfeasibleConditioningError("w1 > %.4g accepted %d of %d draws" % (zeta, kept.size, w1.size),
                                          zeta=zeta, acceptance=rate)
    return w2 + (rng.choice(kept, size=w2.size, replace=True) - zeta)
