#-----------------------------
# -- Poolcast --
#-----------------------------

"""
Multi-level moving average of the daily driver flow

    y_i = alpha_DT(i) * sum_{k=1..K} eta_DT(i-k) * y_(i-k) + eps_i,   eps_i ~ N(0, sigma2_eps)

with eta_ORD fixed at 1. This module holds the mean function, the conditional
likelihood and posterior, the two generative simulators and the posterior
predictive sampler.
"""

import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass, asdict
from typing import Sequence
from . import lib
from .calendar import ServiceCalendar, DayType, DAY_TYPES
from .inference import McmcConfig, PositiveSupport, PosteriorDraws, sample
from .exceptions import RangeError, DomainError, SimulationError, SchemaError, DataError

logger = logging.getLogger(__name__)

PARAM_NAMES = ["alpha_ord", "alpha_sch", "alpha_pwe", "eta_sch", "eta_pwe", "sigma2_eps"]

LIKELIHOOD_RANGES = ("as_printed", "conditional")

# starting level of the first K simulated days
DEFAULT_INIT_MEAN = 30.0

# cap on the repeat-until-positive loop
MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class FlowParams:
    """
    theta = (alpha_ORD, alpha_SCH, alpha_PWE, eta_ORD=1, eta_SCH, eta_PWE, sigma2_eps)
    """
    alpha_ord: float
    alpha_sch: float
    alpha_pwe: float
    eta_sch: float
    eta_pwe: float
    sigma2_eps: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DomainError("%s must be > 0, got %s" % (name, v), field=name)

    @property
    def eta_ord(self) -> float:
        return 1.0

    @classmethod
    def from_theta(cls, theta:Sequence[float], sigma2_eps:float) -> "FlowParams":
        """
        Build from the 6-vector (alpha_ORD, alpha_SCH, alpha_PWE, eta_ORD, eta_SCH, eta_PWE).
        eta_ORD must be 1.
        """
        if len(theta) != 6:
            raise DomainError("theta must hold 6 coefficients")
        if theta[3] != 1:
            raise DomainError("eta_ORD is fixed at 1", field="eta_ord")
        return cls(theta[0], theta[1], theta[2], theta[4], theta[5], sigma2_eps)

    @classmethod
    def from_dict(cls, data:dict) -> "FlowParams":
        return cls(**{k: float(data[k]) for k in PARAM_NAMES})

    def to_dict(self) -> dict:
        return asdict(self)

    def alphas(self) -> np.ndarray:
        """ alpha by day type code ORD, SCH, PWE """
        return np.array([self.alpha_ord, self.alpha_sch, self.alpha_pwe])

    def etas(self) -> np.ndarray:
        """ eta by day type code ORD, SCH, PWE """
        return np.array([1.0, self.eta_sch, self.eta_pwe])

    def alpha(self, day_type:DayType) -> float:
        return float(self.alphas()[DAY_TYPES.index(DayType(day_type))])

    def eta(self, day_type:DayType) -> float:
        return float(self.etas()[DAY_TYPES.index(DayType(day_type))])

    def simulation_alpha(self, day_type:DayType) -> float:
        """
        The coefficient dispatched by the day-type simulator:
        alpha_ORD, alpha_SCH * eta_SCH or alpha_PWE * eta_PWE
        """
        return self.alpha(day_type) * self.eta(day_type)


@dataclass(frozen=True)
class FlowOrder:
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DomainError("moving-average order K must be an integer >= 1, got %s" % self.K, field="K")

    def __int__(self):
        return int(self.K)


def _order(K) -> int:
    return int(K) if isinstance(K, FlowOrder) else int(FlowOrder(K))


class FlowSeries(object):
    """
    Daily driver flows y_1..y_N aligned with a ServiceCalendar

    Params:
        calendar: ServiceCalendar of exactly N days
        flows: N positive reals (trajectories/day)
    """

    def __init__(self, calendar:ServiceCalendar, flows):
        flows = np.asarray(flows, dtype=float)
        if flows.ndim != 1 or len(flows) != len(calendar):
            raise DataError("flow series holds %d values for a %d day calendar" % (flows.size, len(calendar)))
        if not np.all(np.isfinite(flows)) or np.any(flows <= 0):
            bad = int(np.flatnonzero(~(flows > 0))[0]) + 1
            raise DataError("flows must be finite and > 0 (day %d)" % bad, day=bad)
        self.calendar = calendar
        self.flows = flows
        self.flows.setflags(write=False)

    def __len__(self):
        return len(self.flows)

    @property
    def N(self) -> int:
        return len(self.flows)

    def y(self, i:int) -> float:
        """ y_i, 1-based """
        self.calendar.date_of(i)
        return float(self.flows[i - 1])

    def codes(self) -> np.ndarray:
        return np.asarray(self.calendar.type_codes(), dtype=int)

    def slice(self, start, end) -> "FlowSeries":
        a = self.calendar.index_of(start)
        b = self.calendar.index_of(end)
        return FlowSeries(self.calendar.slice(start, end), self.flows[a - 1:b])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": [lib.format_date(d) for d in self.calendar.dates],
            "flow": self.flows
        })

    @classmethod
    def from_frame(cls, df:pd.DataFrame, calendar:ServiceCalendar) -> "FlowSeries":
        """
        Align a `date,flow` frame with the calendar. The frame must cover a
        contiguous date range inside the calendar; the returned series lives on
        that sub calendar.
        """
        missing = {"date", "flow"} - set(df.columns)
        if missing:
            raise SchemaError("flow file is missing columns: %s" % ", ".join(sorted(missing)))
        if df.empty:
            raise SchemaError("flow file holds no rows")
        dates = []
        for row, d in enumerate(df["date"], start=2):
            try:
                dates.append(lib.parse_date(d))
            except (ValueError, TypeError) as e:
                raise SchemaError("invalid date: %s" % e, row=row)
            if not calendar.contains(dates[-1]):
                raise SchemaError("date %s is outside the calendar" % d, row=row)
            if len(dates) > 1 and lib.days_between(dates[-2], dates[-1]) != 1:
                raise SchemaError("flow dates must be contiguous and ascending", row=row)
        flows = pd.to_numeric(df["flow"], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~(flows > 0))
        if bad.size:
            raise SchemaError("flow must be a positive real", row=int(bad[0]) + 2)
        return cls(calendar.slice(dates[0], dates[-1]), flows)


#------------------------------------------------------------------------------
# Mean function + likelihood

def history_features(flows:np.ndarray, codes:np.ndarray, K:int, n:int=None) -> np.ndarray:
    """
    H[i-1, t] = sum over k=1..K of 1{DT(i-k)=t} * y_(i-k), for days i = 1..n.
    Days before day 1 do not contribute.

    Returns:
        array (n, 3)
    """
    n = len(flows) if n is None else n
    H = np.zeros((n, 3))
    pos = np.arange(n)
    for k in range(1, K + 1):
        dst = pos[(pos - k >= 0) & (pos - k < len(flows))]
        src = dst - k
        np.add.at(H, (dst, codes[src]), flows[src])
    return H


def flow_mean(params:FlowParams, series:FlowSeries, i:int, K) -> float:
    """
    g_i(theta) = alpha_DT(i) * sum_{k=1..K} eta_DT(i-k) * y_(i-k)

    Params:
        params: FlowParams
        series: FlowSeries
        i: day index, K < i <= N
        K: moving-average order

    Returns:
        float
    """
    K = _order(K)
    if i <= K:
        raise RangeError("flow_mean needs i > K (i=%d, K=%d)" % (i, K), day=i)
    if i > series.N:
        raise RangeError("day index %d outside series 1..%d" % (i, series.N), day=i)
    codes = series.codes()
    etas = params.etas()
    acc = sum(etas[codes[i - 1 - k]] * series.flows[i - 1 - k] for k in range(1, K + 1))
    return float(params.alphas()[codes[i - 1]] * acc)


def _term_mask(N:int, K:int, likelihood_range:str) -> np.ndarray:
    if likelihood_range not in LIKELIHOOD_RANGES:
        raise DomainError("likelihood_range must be one of %s" % ", ".join(LIKELIHOOD_RANGES),
                          field="likelihood_range")
    first = K if likelihood_range == "as_printed" else K + 1
    return np.arange(1, N + 1) >= first


def _gaussian_loglik(resid:np.ndarray, sigma2:float) -> float:
    n = len(resid)
    return float(-0.5 * n * np.log(2.0 * np.pi * sigma2) - 0.5 * np.dot(resid, resid) / sigma2)


def flow_log_likelihood(params:FlowParams, series:FlowSeries, K, likelihood_range:str="as_printed") -> float:
    """
    Conditional Gaussian log-likelihood of the flows.

    `as_printed` sums i = K..N with N-K+1 terms, g_K using the K-1 days that
    exist before it. `conditional` sums i = K+1..N with N-K terms.

    Returns:
        float
    """
    K = _order(K)
    if series.N <= K:
        raise RangeError("likelihood needs N > K (N=%d, K=%d)" % (series.N, K))
    if not params.sigma2_eps > 0:
        raise DomainError("sigma2_eps must be > 0")
    codes = series.codes()
    H = history_features(series.flows, codes, K)
    g = params.alphas()[codes] * (H @ params.etas())
    mask = _term_mask(series.N, K, likelihood_range)
    return _gaussian_loglik((series.flows - g)[mask], params.sigma2_eps)


def flow_log_posterior(params:FlowParams, series:FlowSeries, K, likelihood_range:str="as_printed") -> float:
    """
    Log-posterior under the non-informative prior pi(theta) ∝ sigma_eps^-2,
    up to an additive constant.
    """
    return flow_log_likelihood(params, series, K, likelihood_range) - np.log(params.sigma2_eps)


class FlowPosterior(object):
    """
    Vectorised log-posterior of the flow model over its free parameters

    Day types that never occur as a current day (alpha) or in a history
    window (eta) inside the likelihood range are not identified by the data;
    they are held fixed, alpha at 1/K and eta at 1.

    Params:
        series: FlowSeries
        K: order
        likelihood_range: as_printed | conditional
        fixed: dict of parameter -> value held constant
    """

    def __init__(self, series:FlowSeries, K, likelihood_range:str="as_printed", fixed:dict=None):
        self.K = _order(K)
        if series.N <= self.K:
            raise RangeError("fit needs N > K (N=%d, K=%d)" % (series.N, self.K))
        self.series = series
        self.likelihood_range = likelihood_range
        self.codes = series.codes()
        self.mask = _term_mask(series.N, self.K, likelihood_range)
        self.H = history_features(series.flows, self.codes, self.K)[self.mask]
        self.y = series.flows[self.mask]
        self.c = self.codes[self.mask]

        fixed = dict(fixed or {})
        unknown = set(fixed) - set(PARAM_NAMES)
        if unknown:
            raise DomainError("unknown fixed parameters: %s" % ", ".join(sorted(unknown)))
        for t, dt in enumerate(DAY_TYPES):
            a_name = "alpha_%s" % dt.value.lower()
            if not np.any(self.c == t) and a_name not in fixed:
                fixed[a_name] = 1.0 / self.K
                logger.warning("no %s day in the likelihood range, %s is unidentified and fixed at %.4f",
                               dt.value, a_name, fixed[a_name])
            if t > 0:
                e_name = "eta_%s" % dt.value.lower()
                if not np.any(self.H[:, t] > 0) and e_name not in fixed:
                    fixed[e_name] = 1.0
                    logger.warning("no %s day in any history window, %s is unidentified and fixed at 1",
                                   dt.value, e_name)
        self.fixed = fixed
        self.free = [n for n in PARAM_NAMES if n not in fixed]
        self.support = PositiveSupport(len(self.free))

    def params_from(self, x) -> FlowParams:
        d = dict(self.fixed)
        d.update(zip(self.free, (float(v) for v in x)))
        return FlowParams.from_dict(d)

    def _full(self, x) -> dict:
        d = dict(self.fixed)
        d.update(zip(self.free, x))
        return d

    def log_posterior(self, x) -> float:
        p = self._full(x)
        sigma2 = p["sigma2_eps"]
        if sigma2 <= 0 or any(p[n] <= 0 for n in PARAM_NAMES):
            return -np.inf
        alphas = np.array([p["alpha_ord"], p["alpha_sch"], p["alpha_pwe"]])
        etas = np.array([1.0, p["eta_sch"], p["eta_pwe"]])
        resid = self.y - alphas[self.c] * (self.H @ etas)
        return _gaussian_loglik(resid, sigma2) - np.log(sigma2)

    def initial_values(self) -> np.ndarray:
        """
        Least squares start with eta = 1: alpha_t = sum(y h) / sum(h^2) per day type.
        """
        h = self.H.sum(axis=1)
        start = {"eta_sch": 1.0, "eta_pwe": 1.0}
        alphas = np.full(3, 1.0 / self.K)
        for t, dt in enumerate(DAY_TYPES):
            sel = (self.c == t) & (h > 0)
            if np.any(sel):
                alphas[t] = max(float(np.dot(self.y[sel], h[sel]) / np.dot(h[sel], h[sel])), 1e-6)
            start["alpha_%s" % dt.value.lower()] = alphas[t]
        full = self._full([start.get(n, 1.0) for n in self.free])
        a = np.array([full["alpha_ord"], full["alpha_sch"], full["alpha_pwe"]])
        e = np.array([1.0, full["eta_sch"], full["eta_pwe"]])
        resid = self.y - a[self.c] * (self.H @ e)
        start["sigma2_eps"] = max(float(np.mean(resid ** 2)), 1e-6)
        return np.array([self.fixed.get(n, start[n]) for n in self.free])


def fit_flow(series:FlowSeries, K, cfg:McmcConfig, likelihood_range:str="as_printed", fixed:dict=None, init:dict=None):
    """
    Sample the flow posterior

    Params:
        series: FlowSeries
        K: order
        cfg: McmcConfig
        likelihood_range: as_printed | conditional
        fixed: parameters held constant
        init: optional starting values by name

    Returns:
        (PosteriorDraws, Diagnostics)
    """
    post = FlowPosterior(series, K, likelihood_range, fixed=fixed)
    x0 = post.initial_values()
    if init:
        x0 = np.array([float(init.get(n, v)) for n, v in zip(post.free, x0)])
    logger.info("fitting flow model on %d days, K=%d, free parameters %s", series.N, post.K, post.free)
    return sample(post.log_posterior, x0, cfg, support=post.support, names=post.free, fixed=post.fixed)


#------------------------------------------------------------------------------
# Simulators

def _draw_positive(mean:float, sigma2:float, rng:np.random.Generator) -> float:
    sd = np.sqrt(sigma2)
    for _ in range(MAX_REJECTIONS):
        y = rng.normal(mean, sd)
        if y > 0:
            return float(y)
    raise SimulationError("no positive flow after %d draws (mean %.4g, variance %.4g)"
                          % (MAX_REJECTIONS, mean, sigma2))


def check_stability(alphas, K:int) -> bool:
    """
    Warn when some day type coefficient makes the recurrence explosive, alpha * K > 1
    """
    ok = True
    for a in np.atleast_1d(alphas):
        if a * K > 1.0 + 1e-12:
            logger.warning("alpha * K = %.4f > 1, simulated flows may explode", a * K)
            ok = False
    return ok


def simulate_flow(i:int, alpha:float, K, sigma2_eps:float, rng:np.random.Generator,
                  memo:dict=None, init_mean:float=DEFAULT_INIT_MEAN) -> float:
    """
    Driver flow for day i without day types

    Days i <= K start from N(init_mean, sigma2_eps); later days draw
    N(alpha * sum of the K previous flows, sigma2_eps) until positive. Pass the
    same `memo` dict across calls of one run so each day has a single value.

    Returns:
        float
    """
    K = _order(K)
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    if sigma2_eps < 0:
        raise DomainError("sigma2_eps must be >= 0")
    memo = {} if memo is None else memo
    if not memo:
        check_stability(alpha, K)
    for d in range(1, i + 1):
        if d in memo:
            continue
        mean = init_mean if d <= K else alpha * sum(memo[d - k] for k in range(1, K + 1))
        memo[d] = _draw_positive(mean, sigma2_eps, rng)
    return memo[i]


def simulate_flow_daytypes(i:int, params:FlowParams, K, calendar:ServiceCalendar, rng:np.random.Generator,
                           memo:dict=None, init_mean:float=DEFAULT_INIT_MEAN) -> float:
    """
    Driver flow for day i with day types

    Dispatches the no-day-type simulator with alpha_ORD on ORD days,
    alpha_SCH * eta_SCH on SCH days and alpha_PWE * eta_PWE on PWE days.

    Returns:
        float
    """
    K = _order(K)
    memo = {} if memo is None else memo
    if not memo:
        check_stability([params.simulation_alpha(t) for t in DAY_TYPES], K)
    sd2 = params.sigma2_eps
    for d in range(1, i + 1):
        if d in memo:
            continue
        a = params.simulation_alpha(calendar.day_type(d))
        mean = init_mean if d <= K else a * sum(memo[d - k] for k in range(1, K + 1))
        memo[d] = _draw_positive(mean, sd2, rng)
    return memo[i]


def simulate_flow_series(n:int, params:FlowParams, K, calendar:ServiceCalendar, rng:np.random.Generator,
                         init_mean:float=DEFAULT_INIT_MEAN) -> FlowSeries:
    """
    Iterate the day-type simulator over days 1..n

    Returns:
        FlowSeries on the first n days of the calendar
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    memo = {}
    simulate_flow_daytypes(n, params, K, calendar, rng, memo=memo, init_mean=init_mean)
    return FlowSeries(calendar.head(n), [memo[d] for d in range(1, n + 1)])


#------------------------------------------------------------------------------
# Posterior predictive

def _draw_matrix(draws:PosteriorDraws, n_draws:int=None):
    flat = draws.thin_to(n_draws)
    cols = {n: flat[:, k] for k, n in enumerate(draws.names)}
    J = len(flat)

    def col(name):
        return cols[name] if name in cols else np.full(J, float(draws.fixed[name]))

    alphas = np.column_stack([col("alpha_ord"), col("alpha_sch"), col("alpha_pwe")])
    etas = np.column_stack([np.ones(J), col("eta_sch"), col("eta_pwe")])
    return alphas, etas, col("sigma2_eps")


def posterior_predict_flow(draws:PosteriorDraws, series:FlowSeries, K, horizon:int, calendar:ServiceCalendar,
                           rng:np.random.Generator, n_draws:int=None) -> np.ndarray:
    """
    Posterior predictive flows for days N+1..N+horizon

    For every retained posterior draw the recurrence is rolled forward from the
    observed history with fresh Gaussian noise, resampled until positive.

    Params:
        draws: flow PosteriorDraws
        series: observed FlowSeries (days 1..N)
        K: order
        horizon: number of future days
        calendar: calendar starting with the series, covering N + horizon days
        rng: numpy Generator
        n_draws: optional number of evenly thinned draws J

    Returns:
        array (horizon, J)
    """
    K = _order(K)
    if len(draws) == 0:
        raise DataError("posterior draws are empty")
    N = series.N
    if calendar.start_date != series.calendar.start_date or len(calendar) < N + horizon:
        raise RangeError("prediction calendar must start with the series and cover %d days" % (N + horizon))
    alphas, etas, sigma2 = _draw_matrix(draws, n_draws)
    J = len(sigma2)
    codes = np.asarray(calendar.type_codes(), dtype=int)[:N + horizon]
    Y = np.empty((J, N + horizon))
    Y[:, :N] = series.flows
    rows = np.arange(J)
    sd = np.sqrt(sigma2)

    for i in range(N + 1, N + horizon + 1):
        acc = np.zeros(J)
        for k in range(1, K + 1):
            if i - k >= 1:
                acc += etas[:, codes[i - 1 - k]] * Y[:, i - 1 - k]
        mean = alphas[:, codes[i - 1]] * acc
        out = np.full(J, np.nan)
        todo = rows
        for _ in range(MAX_REJECTIONS):
            y = rng.normal(mean[todo], sd[todo])
            ok = y > 0
            out[todo[ok]] = y[ok]
            todo = todo[~ok]
            if todo.size == 0:
                break
        if todo.size:
            raise SimulationError("no positive predictive flow after %d draws on day %d" % (MAX_REJECTIONS, i), day=i)
        Y[:, i - 1] = out
    return Y[:, N:].T.copy()


def flow_fitted(draws:PosteriorDraws, series:FlowSeries, K, n_draws:int=1000) -> np.ndarray:
    """
    Posterior mean of g_i(theta) for every day, NaN on days i <= K

    Returns:
        array (N,)
    """
    K = _order(K)
    alphas, etas, _ = _draw_matrix(draws, n_draws)
    codes = series.codes()
    H = history_features(series.flows, codes, K)
    g = alphas[:, codes] * (etas @ H.T)
    fitted = g.mean(axis=0)
    fitted[:K] = np.nan
    return fitted
