#-----------------------------
# -- Poolcast --
#-----------------------------

"""
RunConfig

The effective configuration of a run: built-in defaults, deep-merged with a
JSON config file, then with command line overrides, validated field by field
before anything is computed.

:USAGE

cfg = load_config("run.json", overrides={"seed": 7})
cfg.K
cfg.mcmc_for("fit-flow")
cfg.config_hash()

"""

import os
import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional
from . import lib
from .inference import McmcConfig
from .baselines import ProphetConfig
from .flow_model import LIKELIHOOD_RANGES, FlowParams
from .waiting_model import PRIORS, MINUTES_PER_DAY
from .evaluation import Scenario
from .exceptions import ConfigError, DomainError, ScenarioError

MODELS = ("BHML", "BASE", "PROP")

# Public holidays and Lyon (zone A) school holidays, 2018-2019
PUBLIC_HOLIDAYS = [
    "2018-01-01", "2018-04-02", "2018-05-01", "2018-05-08", "2018-05-10", "2018-05-21",
    "2018-07-14", "2018-08-15", "2018-11-01", "2018-11-11", "2018-12-25",
    "2019-01-01", "2019-04-22", "2019-05-01", "2019-05-08", "2019-05-30", "2019-06-10",
    "2019-07-14", "2019-08-15", "2019-11-01", "2019-11-11", "2019-12-25",
]

SCHOOL_HOLIDAYS = [
    ["2017-12-23", "2018-01-07"],
    ["2018-02-10", "2018-02-25"],
    ["2018-04-07", "2018-04-22"],
    ["2018-07-07", "2018-09-02"],
    ["2018-10-20", "2018-11-04"],
    ["2018-12-22", "2019-01-06"],
    ["2019-02-16", "2019-03-03"],
    ["2019-04-13", "2019-04-28"],
]

# transport strike
DAY_TYPE_OVERRIDES = {"2019-05-16": "PWE"}


@dataclass
class SimulationConfig:
    start_date: str = "2018-01-01"
    n_days: int = 365
    test_days: int = 5
    theta: List[float] = field(default_factory=lambda: [0.333, 0.33, 0.331, 1.0, 1.0, 1.0])
    sigma2_eps: float = 5.0
    nu: float = 7.0
    beta: List[float] = field(default_factory=lambda: [0.012, 0.01, 0.011, 0.013, 0.018, 0.016, 0.017, 0.019])
    J: int = 10
    # work-day flow level of the observed service
    init_mean: float = 200.0
    public_holidays: List[str] = field(default_factory=lambda: list(PUBLIC_HOLIDAYS))
    school_holidays: List[List[str]] = field(default_factory=lambda: [list(r) for r in SCHOOL_HOLIDAYS])
    overrides: dict = field(default_factory=lambda: dict(DAY_TYPE_OVERRIDES))

    def flow_params(self) -> FlowParams:
        return FlowParams.from_theta(self.theta, self.sigma2_eps)


@dataclass
class EvaluationConfig:
    burn_in_weeks: int = 1
    pe_deltas: List[float] = field(default_factory=lambda: [0.5 * k for k in range(41)])


@dataclass
class RunConfig:
    seed: int = 0
    K: int = 3
    S: int = 8
    likelihood_range: str = "as_printed"
    prior: str = "flat_positive"
    dirichlet_alpha: Optional[List[float]] = None
    nu: object = "moments"
    predictive_draws: int = 200
    models: List[str] = field(default_factory=lambda: list(MODELS))
    out: str = "out"
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    prophet: ProphetConfig = field(default_factory=ProphetConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    scenario: Optional[Scenario] = None

    # ---

    def validate(self) -> "RunConfig":
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")
        if not isinstance(self.K, int) or self.K < 1:
            raise ConfigError("K must be an integer >= 1", field="K")
        if not isinstance(self.S, int) or self.S < 1 or MINUTES_PER_DAY % self.S:
            raise ConfigError("S must be a positive divisor of 1440", field="S")
        if self.likelihood_range not in LIKELIHOOD_RANGES:
            raise ConfigError("likelihood_range must be one of %s" % ", ".join(LIKELIHOOD_RANGES),
                              field="likelihood_range")
        if self.prior not in PRIORS:
            raise ConfigError("prior must be one of %s" % ", ".join(PRIORS), field="prior")
        if self.dirichlet_alpha is not None:
            if len(self.dirichlet_alpha) != self.S or any(not a > 0 for a in self.dirichlet_alpha):
                raise ConfigError("dirichlet_alpha must hold S positive values", field="dirichlet_alpha")
        if self.nu != "moments":
            if isinstance(self.nu, bool) or not isinstance(self.nu, (int, float)) or not self.nu > 0:
                raise ConfigError("nu must be 'moments' or a positive number", field="nu")
        if not isinstance(self.predictive_draws, int) or self.predictive_draws < 1:
            raise ConfigError("predictive_draws must be >= 1", field="predictive_draws")
        if not self.models or any(m not in MODELS for m in self.models):
            raise ConfigError("models must be a non empty subset of %s" % ", ".join(MODELS), field="models")
        if not self.out:
            raise ConfigError("out must name a directory", field="out")
        self._validate_simulation()
        self.mcmc.validate()
        self.prophet.validate()
        ev = self.evaluation
        if not isinstance(ev.burn_in_weeks, int) or ev.burn_in_weeks < 0:
            raise ConfigError("burn_in_weeks must be >= 0", field="evaluation.burn_in_weeks")
        if any(d < 0 for d in ev.pe_deltas) or list(ev.pe_deltas) != sorted(ev.pe_deltas):
            raise ConfigError("pe_deltas must be ascending and >= 0", field="evaluation.pe_deltas")
        return self

    def _validate_simulation(self):
        sim = self.simulation
        if not isinstance(sim.n_days, int) or sim.n_days < 1:
            raise ConfigError("n_days must be >= 1", field="simulation.n_days")
        if not isinstance(sim.test_days, int) or sim.test_days < 0:
            raise ConfigError("test_days must be >= 0", field="simulation.test_days")
        try:
            lib.parse_date(sim.start_date)
            for d in list(sim.public_holidays) + [d for r in sim.school_holidays for d in r] + list(sim.overrides):
                lib.parse_date(d)
        except (ValueError, TypeError) as e:
            raise ConfigError("invalid date: %s" % e, field="simulation")
        if any(len(r) != 2 for r in sim.school_holidays):
            raise ConfigError("school holidays are [start, end] pairs", field="simulation.school_holidays")
        if any(t not in ("ORD", "SCH", "PWE") for t in sim.overrides.values()):
            raise ConfigError("overrides map dates to ORD, SCH or PWE", field="simulation.overrides")
        try:
            sim.flow_params()
        except DomainError as e:
            raise ConfigError(e.message, field="simulation.theta")
        if not sim.nu > 0:
            raise ConfigError("nu must be > 0", field="simulation.nu")
        if not sim.beta or any(not b > 0 for b in sim.beta):
            raise ConfigError("beta must hold positive values", field="simulation.beta")
        if not isinstance(sim.J, int) or sim.J < 1:
            raise ConfigError("J must be >= 1", field="simulation.J")

    # ---

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["models"] = list(self.models)
        d["simulation"] = dataclasses.asdict(self.simulation)
        d["mcmc"] = self.mcmc.to_dict()
        d["prophet"] = self.prophet.to_dict()
        d["evaluation"] = dataclasses.asdict(self.evaluation)
        d["scenario"] = None if self.scenario is None else self.scenario.to_dict()
        return d

    @classmethod
    def from_dict(cls, data:dict) -> "RunConfig":
        data = dict(data)
        _check_keys(data, cls, "")
        try:
            sections = {
                "simulation": _section(SimulationConfig, data.pop("simulation", None), "simulation"),
                "mcmc": _section(McmcConfig, data.pop("mcmc", None), "mcmc"),
                "evaluation": _section(EvaluationConfig, data.pop("evaluation", None), "evaluation"),
            }
            prophet = data.pop("prophet", None)
            if prophet is not None:
                _check_keys(prophet, ProphetConfig, "prophet.")
                sections["prophet"] = ProphetConfig.from_dict(prophet)
            scenario = data.pop("scenario", None)
            if scenario is not None:
                sections["scenario"] = Scenario.from_dict(scenario)
        except ScenarioError as e:
            raise ConfigError(e.message, field="scenario")
        return cls(**data, **sections).validate()

    def config_hash(self) -> str:
        """ sha256 of the effective config, the output directory aside """
        d = self.to_dict()
        d.pop("out")
        return lib.hash_dict(d)

    def mcmc_for(self, stage:str) -> McmcConfig:
        """ MCMC settings of one fitting stage, seeded from the run seed """
        return dataclasses.replace(self.mcmc, seed=lib.derive_seed(self.seed, stage))


def _check_keys(data:dict, klass, prefix:str):
    names = {f.name for f in dataclasses.fields(klass)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError("unknown config key(s): %s" % ", ".join(prefix + k for k in unknown),
                          field=prefix + unknown[0])


def _section(klass, data:dict, name:str):
    if data is None:
        return klass()
    if not isinstance(data, dict):
        raise ConfigError("%s must be an object" % name, field=name)
    _check_keys(data, klass, name + ".")
    return klass(**data)


def load_config(path=None, overrides:dict=None) -> RunConfig:
    """
    Defaults <- config file <- overrides, then validation

    Params:
        path: JSON config file or None
        overrides: dict, ie {"seed": 7, "out": "runs/7"}

    Returns:
        RunConfig
    """
    data = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError("config file not found: %s" % path, field="config")
        with open(path, encoding="utf-8") as f:
            try:
                data = lib.json_loads(f.read()) or {}
            except ValueError as e:
                raise ConfigError("invalid JSON config: %s" % e, field="config")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", field="config")
    merged = lib.dict_merge(RunConfig().to_dict(), data, {k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(merged)
