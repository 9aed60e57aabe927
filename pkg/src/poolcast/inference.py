#-----------------------------
# -- Poolcast --
#-----------------------------

"""
In-house MCMC engine

Adaptive coordinate-wise random-walk Metropolis on the unconstrained scale.
Constrained parameters are mapped through a Support (log transform for
positive parameters, additive log-ratio for simplex vectors) and the
log-Jacobian is added to the target.

:USAGE

cfg = McmcConfig(chains=4, warmup_iters=2000, keep_iters=5000, seed=42)
draws, diag = sample(log_target, init, cfg, support=PositiveSupport(3), names=["a", "b", "c"])

draws.column("a").mean()
diag.to_dict()

"""

import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass, asdict, field
from typing import Callable, List, Sequence
from . import lib
from .exceptions import SamplerError, DiagnosticsError, ConfigError, SchemaError

logger = logging.getLogger(__name__)

# target acceptance rates
TARGET_ACCEPT_JOINT = 0.234
TARGET_ACCEPT_COORDINATE = 0.44

# tries to find a finite jittered start before falling back to the init
_MAX_JITTER_TRIES = 100


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    warmup_iters: int = 2000
    keep_iters: int = 5000
    target_accept: float = TARGET_ACCEPT_COORDINATE
    seed: int = 0
    adapt_window: int = 50
    init_jitter: float = 0.05
    initial_step: float = 0.1

    def validate(self) -> "McmcConfig":
        if self.chains < 1:
            raise ConfigError("chains must be >= 1", field="mcmc.chains")
        if self.warmup_iters < 0:
            raise ConfigError("warmup_iters must be >= 0", field="mcmc.warmup_iters")
        if self.keep_iters < 1:
            raise ConfigError("keep_iters must be >= 1", field="mcmc.keep_iters")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must be in (0, 1)", field="mcmc.target_accept")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="mcmc.seed")
        if self.adapt_window < 1:
            raise ConfigError("adapt_window must be >= 1", field="mcmc.adapt_window")
        if self.init_jitter < 0 or self.initial_step <= 0:
            raise ConfigError("init_jitter must be >= 0 and initial_step > 0", field="mcmc")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


#------------------------------------------------------------------------------
# Supports

class Support(object):
    """
    Identity support, parameters live on the real line.
    """

    def __init__(self, dim:int):
        self.dim = dim

    @property
    def free_dim(self) -> int:
        return self.dim

    def to_unconstrained(self, x:np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float).copy()

    def to_constrained(self, u:np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float).copy()

    def log_jacobian(self, u:np.ndarray) -> float:
        return 0.0


class PositiveSupport(Support):
    """
    x = exp(u) on the coordinates flagged positive.

    Params:
        dim:int
        mask: optional boolean sequence, all positive by default
    """

    def __init__(self, dim:int, mask:Sequence[bool]=None):
        super().__init__(dim)
        self.mask = np.ones(dim, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    def to_unconstrained(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x[self.mask] <= 0):
            raise SamplerError("initial value outside the positive support")
        u = x.copy()
        u[self.mask] = np.log(x[self.mask])
        return u

    def to_constrained(self, u):
        x = np.asarray(u, dtype=float).copy()
        x[self.mask] = np.exp(x[self.mask])
        return x

    def log_jacobian(self, u):
        return float(np.sum(np.asarray(u)[self.mask]))


class SimplexSupport(Support):
    """
    Additive log-ratio map from R^(dim-1) onto the open simplex of R^dim.

    beta_s = exp(z_s) / (1 + sum exp(z)), beta_dim = 1 / (1 + sum exp(z)).
    The log-Jacobian of the map is sum(log beta).
    """

    @property
    def free_dim(self) -> int:
        return self.dim - 1

    def to_unconstrained(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise SamplerError("initial value outside the open simplex")
        x = x / x.sum()
        return np.log(x[:-1]) - np.log(x[-1])

    def to_constrained(self, u):
        z = np.append(np.asarray(u, dtype=float), 0.0)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def log_jacobian(self, u):
        return float(np.sum(np.log(self.to_constrained(u))))


#------------------------------------------------------------------------------
# Draws

class PosteriorDraws(object):
    """
    PosteriorDraws

    Post-warmup MCMC samples with chain/iteration provenance.

    Params:
        values: array (chains, iterations, dim)
        names: parameter names, one per dim
        fixed: parameters held constant during sampling, name -> value
    """

    def __init__(self, values:np.ndarray, names:List[str], fixed:dict=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[np.newaxis]
        if values.ndim != 3 or values.shape[2] != len(names):
            raise SamplerError("draws shape %s does not match %d names" % (values.shape, len(names)))
        if values.size and not np.all(np.isfinite(values)):
            raise SamplerError("draws hold non-finite values")
        self.values = values
        self.names = list(names)
        self.fixed = dict(fixed or {})

    def __len__(self):
        return self.values.shape[0] * self.values.shape[1]

    def __iter__(self):
        """
        Iterate over the draws as dicts, fixed values included
        """
        for row in self.flat():
            yield self.as_dict(row)

    @property
    def n_chains(self) -> int:
        return self.values.shape[0]

    @property
    def n_iters(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def as_dict(self, row:np.ndarray) -> dict:
        d = dict(self.fixed)
        d.update(zip(self.names, (float(v) for v in row)))
        return d

    def flat(self) -> np.ndarray:
        """ (chains * iterations, dim), chain-major """
        return self.values.reshape(-1, self.dim)

    def column(self, name:str) -> np.ndarray:
        """ All draws of one parameter. Fixed parameters repeat their value. """
        if name in self.names:
            return self.flat()[:, self.names.index(name)]
        if name in self.fixed:
            return np.full(len(self), float(self.fixed[name]))
        raise KeyError(name)

    def chains_of(self, name:str) -> np.ndarray:
        """ (chains, iterations) array of one parameter """
        return self.values[:, :, self.names.index(name)]

    def mean(self) -> dict:
        return self.as_dict(self.flat().mean(axis=0))

    def thin_to(self, n:int) -> np.ndarray:
        """
        Evenly spaced subset of n flat draws, deterministic

        Returns:
            array (n, dim)
        """
        flat = self.flat()
        if n is None or n >= len(flat):
            return flat
        idx = np.linspace(0, len(flat) - 1, n).round().astype(int)
        return flat[idx]

    def to_frame(self) -> pd.DataFrame:
        """ Long form `chain,iter,param,value` """
        c, i, p = np.meshgrid(np.arange(self.n_chains), np.arange(self.n_iters),
                              np.arange(self.dim), indexing="ij")
        return pd.DataFrame({
            "chain": c.ravel(),
            "iter": i.ravel(),
            "param": np.asarray(self.names, dtype=object)[p.ravel()],
            "value": self.values.ravel()
        })

    @classmethod
    def from_frame(cls, df:pd.DataFrame, fixed:dict=None) -> "PosteriorDraws":
        missing = {"chain", "iter", "param", "value"} - set(df.columns)
        if missing:
            raise SchemaError("draws are missing columns: %s" % ", ".join(sorted(missing)))
        names = list(dict.fromkeys(df["param"]))
        n_chains = int(df["chain"].max()) + 1
        n_iters = int(df["iter"].max()) + 1
        if len(df) != n_chains * n_iters * len(names):
            raise SchemaError("draws are not a complete chain x iter x param grid")
        ordered = df.assign(_p=df["param"].map({n: k for k, n in enumerate(names)})) \
                    .sort_values(["chain", "iter", "_p"])
        values = ordered["value"].to_numpy(dtype=float).reshape(n_chains, n_iters, len(names))
        return cls(values, names, fixed=fixed)

    @classmethod
    def point_mass(cls, values:dict, n:int=1) -> "PosteriorDraws":
        """ A degenerate posterior, n identical draws """
        names = list(values)
        arr = np.tile(np.array([values[k] for k in names], dtype=float), (1, n, 1))
        return cls(arr, names)


#------------------------------------------------------------------------------
# Diagnostics

@dataclass
class Diagnostics:
    names: List[str]
    rhat: dict
    ess: dict
    accept_rate: np.ndarray  # (chains, dim)
    step_size: np.ndarray = field(default=None)  # (chains, free dim)

    def max_rhat(self) -> float:
        values = [v for v in self.rhat.values() if v is not None and np.isfinite(v)]
        return max(values) if values else float("nan")

    def to_dict(self) -> dict:
        out = {}
        for k, name in enumerate(self.names):
            r = self.rhat.get(name)
            out[name] = {
                "rhat": None if r is None or not np.isfinite(r) else round(float(r), 6),
                "ess": round(float(self.ess[name]), 3),
                "accept_rate": [round(float(a), 6) for a in self.accept_rate[:, k]]
            }
        return out


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis]
    return x


def _rhat_chains(chains:np.ndarray) -> float:
    m, n = chains.shape
    half = n // 2
    split = np.vstack([chains[:, :half], chains[:, n - half:]])
    n = half
    chain_means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean()
    B = n * chain_means.var(ddof=1)
    if W <= 0:
        return 1.0 if B <= 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x:np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    return np.fft.irfft(f * np.conjugate(f))[:n] / n


def _ess_chains(chains:np.ndarray) -> float:
    m, n = chains.shape
    acov = np.array([_autocov(c) for c in chains])
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer's initial monotone sequence over pairs of lags
    pairs = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        pairs.append(min(p, pairs[-1]) if pairs else p)
        t += 2
    tau = max(-1.0 + 2.0 * sum(pairs), 1.0 / np.log10(max(m * n, 10)))
    return float(min(m * n / tau, m * n))


def split_rhat(draws):
    """
    Split-chain potential scale reduction factor

    Params:
        draws: PosteriorDraws, or an array (chains, iterations) / (chains, iterations, dim)

    Returns:
        dict name -> rhat for PosteriorDraws, float or array otherwise
    """
    if isinstance(draws, PosteriorDraws):
        return dict(zip(draws.names, split_rhat(draws.values)))
    x = np.asarray(draws, dtype=float)
    if x.ndim < 2 or x.shape[0] < 2:
        raise DiagnosticsError("split R-hat requires at least 2 chains")
    if x.shape[1] < 4:
        raise DiagnosticsError("split R-hat requires at least 4 draws per chain")
    if x.ndim == 3:
        return np.array([_rhat_chains(x[:, :, k]) for k in range(x.shape[2])])
    return _rhat_chains(x)


def ess(draws):
    """
    Effective sample size, multi-chain autocorrelation with Geyer's initial
    monotone sequence estimator. Capped at the number of draws.

    Params:
        draws: PosteriorDraws, or an array (iterations,), (chains, iterations)
               or (chains, iterations, dim)

    Returns:
        dict name -> ess for PosteriorDraws, float or array otherwise
    """
    if isinstance(draws, PosteriorDraws):
        return dict(zip(draws.names, ess(draws.values)))
    x = np.asarray(draws, dtype=float)
    if x.ndim == 3:
        return np.array([ess(x[:, :, k]) for k in range(x.shape[2])])
    x = _as_chains(x)
    if x.shape[1] < 4:
        raise DiagnosticsError("ESS requires at least 4 draws per chain")
    return _ess_chains(x)


def diagnose(draws:PosteriorDraws, accept_rate:np.ndarray, step_size:np.ndarray=None) -> Diagnostics:
    if draws.n_iters < 100:
        raise DiagnosticsError("diagnostics require keep_iters >= 100, got %d" % draws.n_iters)
    rhat = split_rhat(draws) if draws.n_chains >= 2 else {n: None for n in draws.names}
    return Diagnostics(names=list(draws.names),
                       rhat=rhat,
                       ess=ess(draws),
                       accept_rate=np.asarray(accept_rate),
                       step_size=step_size)


#------------------------------------------------------------------------------
# Sampler

def _run_chain(log_density:Callable, u0:np.ndarray, cfg:McmcConfig, rng:np.random.Generator, chain:int):
    d = len(u0)
    u = u0.copy()
    lp = log_density(u)
    log_step = np.full(d, np.log(cfg.initial_step))
    total = cfg.warmup_iters + cfg.keep_iters
    kept = np.empty((cfg.keep_iters, d))
    window_acc = np.zeros(d)
    warmup_acc = np.zeros(d)
    keep_acc = np.zeros(d)
    n_window = 0

    for it in range(total):
        warm = it < cfg.warmup_iters
        steps = np.exp(log_step)
        noise = rng.standard_normal(d)
        log_u = np.log(rng.random(d))
        for j in range(d):
            prop = u.copy()
            prop[j] += steps[j] * noise[j]
            lp_prop = log_density(prop)
            if log_u[j] < lp_prop - lp:
                u, lp = prop, lp_prop
                if warm:
                    window_acc[j] += 1
                    warmup_acc[j] += 1
                else:
                    keep_acc[j] += 1

        if warm:
            if (it + 1) % cfg.adapt_window == 0:
                n_window += 1
                rate = window_acc / cfg.adapt_window
                log_step += 2.0 * (rate - cfg.target_accept) / np.sqrt(n_window)
                window_acc[:] = 0
        else:
            kept[it - cfg.warmup_iters] = u

    if cfg.warmup_iters > 0 and np.any(warmup_acc == 0):
        raise SamplerError("all warmup proposals rejected for coordinate(s) %s in chain %d, step size collapsed"
                           % (np.flatnonzero(warmup_acc == 0).tolist(), chain), chain=chain)

    logger.debug("chain %d: warmup acceptance %s, final steps %s", chain,
                 np.round(warmup_acc / max(cfg.warmup_iters, 1), 3), np.round(np.exp(log_step), 5))
    return kept, keep_acc / cfg.keep_iters, np.exp(log_step)


def sample(log_target:Callable, init, cfg:McmcConfig, support:Support=None, names:List[str]=None, fixed:dict=None):
    """
    Draw from a log-density with adaptive coordinate-wise random-walk Metropolis

    Each chain owns the RNG substream `chain-<id>` of cfg.seed. Adaptation
    scales every coordinate's step toward cfg.target_accept during warmup and
    is frozen afterwards. Only post-warmup draws are returned.

    Params:
        log_target: callable(x) -> float, log-density on the constrained scale
        init: initial constrained vector
        cfg: McmcConfig
        support: Support, identity by default
        names: parameter names, defaults to x0..x(d-1)
        fixed: recorded on the returned draws

    Returns:
        (PosteriorDraws, Diagnostics)
    """
    cfg.validate()
    init = np.asarray(init, dtype=float)
    support = support or Support(len(init))
    names = names or ["x%d" % k for k in range(len(init))]

    def log_density(u):
        val = log_target(support.to_constrained(u))
        if not np.isfinite(val):
            return -np.inf
        return val + support.log_jacobian(u)

    u_init = support.to_unconstrained(init)
    if not np.isfinite(log_density(u_init)):
        raise SamplerError("log target is not finite at the initial value")

    chains, rates, steps = [], [], []
    for c in range(cfg.chains):
        rng = lib.make_rng(cfg.seed, "chain-%d" % c)
        u0 = u_init
        if cfg.init_jitter > 0:
            for _ in range(_MAX_JITTER_TRIES):
                cand = u_init + cfg.init_jitter * rng.standard_normal(len(u_init))
                if np.isfinite(log_density(cand)):
                    u0 = cand
                    break
        kept, rate, step = _run_chain(log_density, u0, cfg, rng, c)
        chains.append(np.array([support.to_constrained(u) for u in kept]))
        rates.append(rate)
        steps.append(step)
        logger.info("chain %d done, mean acceptance %.3f", c, float(np.mean(rate)))

    draws = PosteriorDraws(np.stack(chains), names, fixed=fixed)
    accept_rate = np.array(rates)
    if support.free_dim != len(names):
        # acceptance is tracked on the unconstrained coordinates
        accept_rate = np.repeat(accept_rate.mean(axis=1, keepdims=True), len(names), axis=1)
    if cfg.keep_iters >= 100:
        diag = diagnose(draws, accept_rate, np.array(steps))
    else:
        diag = None
    return draws, diag
