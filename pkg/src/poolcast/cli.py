#-----------------------------
# -- Poolcast --
#-----------------------------

"""
poolcast command line

    poolcast simulate      --config run.json --out data
    poolcast fit-flow      --out run --data data
    poolcast fit-wait      --out run --data data
    poolcast predict-flow  --out run --data data
    poolcast predict-wait  --out run --data data
    poolcast evaluate      --out run --data data
    poolcast scenario      --preset flow-1 --data data --out scenarios

Every stage reads its inputs from files (`--data`, defaulting to `--out`) and
writes its outputs to `--out`, so each one can be rerun on its own. Errors are
printed on stderr as JSON; poolcast errors exit 2, anything else exits 1.
"""

import os
import sys
import logging
import argparse
import numpy as np
import pandas as pd
from . import lib, dataio
from .config import RunConfig, load_config
from .calendar import ServiceCalendar
from .flow_model import fit_flow, flow_fitted, posterior_predict_flow
from .waiting_model import (IntervalGrid, RequestLog, estimate_nu, fit_waits, simulate_waits,
                            predict_wait_matrix, wait_statistics)
from .baselines import baseline_predict, baseline_fitted, prophet_fit, prophet_predict
from .evaluation import (FLOW_SCENARIOS, WAIT_SCENARIO, aggregate_test_cells, log_cells,
                         pe_curve_cells, scenario_split, weekly_mse, mse_sum)
from .exceptions import PoolcastError, ConfigError, ColdStartError, DataError, ScenarioError

logger = logging.getLogger(__name__)

RHAT_WARNING = 1.05

PRESETS = dict([("flow-%d" % (k + 1), s) for k, s in enumerate(FLOW_SCENARIOS)] + [("waits", WAIT_SCENARIO)])

REPORT_TEMPLATE = """\
poolcast evaluation{% if scenario %} - scenario {{ scenario }}{% endif %}

config hash: {{ config_hash }}

{% for m in models %}
{{ m.model }}
  test MSE sum: {{ "%.4f"|format(m.mse_sum) }}
{% for w in m.weekly_mse %}
  week of {{ w.week_start }}: {{ "%.4f"|format(w.mse) }} ({{ w.n_days }} days{% if w.partial %}, partial{% endif %})
{% endfor %}
{% if m.train_mse_sum is not none %}
  training MSE sum: {{ "%.4f"|format(m.train_mse_sum) }}
{% endif %}
{% if m.pe_curve %}
  PE on test waits:{% for d, v in m.pe_curve %}{% if d in report_deltas %} PE({{ d }})={{ "%.3f"|format(v) }}{% endif %}{% endfor %}

{% endif %}
{% if m.train_pe_curve %}
  PE on training waits:{% for d, v in m.train_pe_curve %}{% if d in report_deltas %} PE({{ d }})={{ "%.3f"|format(v) }}{% endif %}{% endfor %}

{% endif %}

{% endfor %}
"""

REPORT_DELTAS = (2.0, 4.0, 6.0, 8.0, 10.0)


class Run(object):
    """
    One command invocation: effective config, directories, manifest
    """

    def __init__(self, command:str, cfg:RunConfig, data_dir:str=None):
        self.command = command
        self.cfg = cfg
        self.out = dataio.ensure_dir(cfg.out)
        self.data = data_dir or cfg.out
        self.config_hash = cfg.config_hash()
        self.files = []
        self.info = {}
        self.warnings = []

    def path(self, name:str) -> str:
        return os.path.join(self.out, name)

    def input(self, name:str) -> str:
        return os.path.join(self.data, name)

    def has_input(self, name:str) -> bool:
        return os.path.isfile(self.input(name))

    def rng(self, name:str) -> np.random.Generator:
        return lib.make_rng(self.cfg.seed, name)

    def write_frame(self, df:pd.DataFrame, name:str):
        dataio.write_frame(df, self.path(name), self.config_hash)
        self.files.append(name)

    def write_draws(self, draws, name:str):
        dataio.write_draws(draws, self.path(name), self.config_hash)
        self.files.append(name)

    def write_json(self, data:dict, name:str):
        dataio.write_json(data, self.path(name))
        self.files.append(name)

    def write_text(self, text:str, name:str):
        with open(self.path(name), "w", encoding="utf-8") as f:
            f.write(text)
        self.files.append(name)

    def warn(self, message:str, **details):
        logger.warning(message)
        self.warnings.append(dict(message=message, **details))

    def close(self) -> dict:
        path = self.path(dataio.MANIFEST_FILE)
        manifest = dataio.read_json(path) if os.path.isfile(path) else {}
        manifest = manifest or {}
        manifest.setdefault("commands", {})[self.command] = {
            "config_hash": self.config_hash,
            "seed": self.cfg.seed,
            "files": sorted(self.files),
            "info": self.info,
            "warnings": self.warnings
        }
        dataio.write_json(manifest, path)
        return manifest


def _calendar_and_flows(run:Run, flows_file:str=dataio.FLOWS_FILE):
    cal = dataio.read_calendar(run.input(dataio.CALENDAR_FILE))
    return cal, dataio.read_flows(run.input(flows_file), cal)


def _diagnostics(run:Run, draws, diag) -> dict:
    out = {"config_hash": run.config_hash, "fixed": draws.fixed, "n_draws": len(draws)}
    if diag is None:
        run.warn("keep_iters < 100, convergence diagnostics skipped")
        out["parameters"] = {}
        return out
    out["parameters"] = diag.to_dict()
    out["max_rhat"] = diag.max_rhat()
    if diag.max_rhat() > RHAT_WARNING:
        run.warn("max R-hat %.4f > %.2f, chains may not have converged" % (diag.max_rhat(), RHAT_WARNING),
                 max_rhat=diag.max_rhat())
    return out


#------------------------------------------------------------------------------
# Commands

def cmd_simulate(run:Run):
    """
    Simulate calendar, flows and waits with the configured design.
    The first n_days are the training data, the following test_days the truth.
    """
    cfg = run.cfg
    sim = cfg.simulation
    if len(sim.beta) != cfg.S:
        raise ConfigError("simulation.beta holds %d values for S=%d" % (len(sim.beta), cfg.S), field="simulation.beta")
    grid = IntervalGrid(cfg.S)
    total = sim.n_days + sim.test_days
    cal = ServiceCalendar.from_holidays(sim.start_date, total, sim.public_holidays, sim.school_holidays, sim.overrides)
    series, W = simulate_waits(total, sim.flow_params(), cfg.K, sim.nu, sim.beta, sim.J, run.rng("flow-sim"), cal,
                               init_mean=sim.init_mean, wait_rng=run.rng("wait-sim"))
    log = RequestLog.from_wait_cube(cal, W, grid)
    last_train = cal.date_of(sim.n_days)

    run.write_frame(cal.to_frame(), dataio.CALENDAR_FILE)
    run.write_frame(series.slice(cal.start_date, last_train).to_frame(), dataio.FLOWS_FILE)
    run.write_frame(log.slice(cal.start_date, last_train).to_frame(), dataio.WAITS_FILE)
    if sim.test_days:
        first_test = cal.date_of(sim.n_days + 1)
        run.write_frame(series.slice(first_test, cal.end_date).to_frame(), dataio.FLOWS_TEST_FILE)
        run.write_frame(log.slice(first_test, cal.end_date).to_frame(), dataio.WAITS_TEST_FILE)
    run.info.update({"n_days": sim.n_days, "test_days": sim.test_days, "K": cfg.K, "S": cfg.S,
                     "simulation": cfg.to_dict()["simulation"]})


def cmd_fit_flow(run:Run):
    cfg = run.cfg
    _, series = _calendar_and_flows(run)
    draws, diag = fit_flow(series, cfg.K, cfg.mcmc_for("fit-flow"), cfg.likelihood_range)
    report = _diagnostics(run, draws, diag)
    report.update({"K": cfg.K, "likelihood_range": cfg.likelihood_range, "n_days": series.N,
                   "means": draws.mean()})
    run.write_draws(draws, dataio.FLOW_DRAWS_FILE)
    run.write_json(report, dataio.FLOW_DIAGNOSTICS_FILE)
    run.info["max_rhat"] = report.get("max_rhat")


def cmd_fit_wait(run:Run):
    cfg = run.cfg
    cal, series = _calendar_and_flows(run)
    log = dataio.read_waits(run.input(dataio.WAITS_FILE), cal)
    grid = IntervalGrid(cfg.S)
    if cfg.nu == "moments":
        nu = estimate_nu(series, log, grid)
    else:
        nu = float(cfg.nu)
        logger.info("nu fixed by config: %.4f", nu)
    draws, diag = fit_waits(series, log, grid, nu, cfg.mcmc_for("fit-wait"), cfg.prior, cfg.dirichlet_alpha)
    st = wait_statistics(series, log, grid)
    report = _diagnostics(run, draws, diag)
    report.update({"nu": nu, "nu_mode": "moments" if cfg.nu == "moments" else "fixed", "prior": cfg.prior,
                   "S": cfg.S, "n_waits": len(log), "n_per_interval": st.n.tolist(),
                   "unidentified": [s for s in range(1, cfg.S + 1) if st.n[s - 1] == 0 and cfg.prior == "flat_positive"],
                   "means": draws.mean()})
    run.write_draws(draws, dataio.WAIT_DRAWS_FILE)
    run.write_json(report, dataio.WAIT_DIAGNOSTICS_FILE)
    run.info["max_rhat"] = report.get("max_rhat")


def cmd_predict_flow(run:Run, horizon:int=None):
    """
    Predictive flows of every configured model for the calendar days after
    the training flows, plus their in-sample fitted values
    """
    cfg = run.cfg
    cal, series = _calendar_and_flows(run)
    pred_cal = cal.slice(series.calendar.start_date, cal.end_date)
    N = series.N
    horizon = len(pred_cal) - N if horizon is None else horizon
    if horizon < 1 or N + horizon > len(pred_cal):
        raise DataError("the calendar must hold 1 to %d days after the training flows, asked %d"
                        % (len(pred_cal) - N, horizon))
    dates = [lib.format_date(pred_cal.date_of(N + h)) for h in range(1, horizon + 1)]
    train_dates = [lib.format_date(d) for d in series.calendar.dates]
    rows, fitted = [], []

    if "BHML" in cfg.models:
        report = dataio.read_json(run.input(dataio.FLOW_DIAGNOSTICS_FILE))
        draws = dataio.read_draws(run.input(dataio.FLOW_DRAWS_FILE), fixed=report.get("fixed"))
        Y = posterior_predict_flow(draws, series, cfg.K, horizon, pred_cal, run.rng("flow-predict"),
                                   n_draws=cfg.predictive_draws)
        for j in range(Y.shape[1]):
            rows.extend(("BHML", j, d, Y[h, j]) for h, d in enumerate(dates))
        fitted.extend(("BHML", d, v) for d, v in zip(train_dates, flow_fitted(draws, series, cfg.K)))

    if "BASE" in cfg.models:
        for h, d in enumerate(dates, start=1):
            try:
                rows.append(("BASE", 0, d, baseline_predict(pred_cal, series.flows, N + h)))
            except ColdStartError as e:
                run.warn(e.message, model="BASE", date=d)
        fitted.extend(("BASE", d, v) for d, v in zip(train_dates, baseline_fitted(pred_cal, series.flows)))

    if "PROP" in cfg.models:
        p = prophet_fit(pred_cal, series.flows, cfg.prophet)
        days = np.arange(N + 1, N + horizon + 1)
        rows.extend(("PROP", 0, d, v) for d, v in zip(dates, prophet_predict(p, pred_cal, days)))
        fitted.extend(("PROP", d, v) for d, v in zip(train_dates, prophet_predict(p, pred_cal, np.arange(1, N + 1))))
        run.info["prophet"] = p.to_dict()

    run.write_frame(pd.DataFrame(rows, columns=["model", "draw", "date", "flow"]), dataio.PREDICTIVE_FLOWS_FILE)
    fitted = pd.DataFrame(fitted, columns=["model", "date", "flow"]).dropna()
    run.write_frame(fitted, dataio.FITTED_FLOWS_FILE)
    run.info["horizon"] = horizon


def cmd_predict_wait(run:Run):
    """
    Test-horizon waits integrating over the predictive flow, and the
    per-cell mean of the given-flow predictive on the training days
    """
    cfg = run.cfg
    cal, series = _calendar_and_flows(run)
    grid = IntervalGrid(cfg.S)
    report = dataio.read_json(run.input(dataio.WAIT_DIAGNOSTICS_FILE))
    nu = float(report["nu"])
    draws = dataio.read_draws(run.input(dataio.WAIT_DRAWS_FILE), fixed=report.get("fixed"))
    refused = [s for s in range(1, grid.S + 1) if "beta_%d" % s not in draws.names and "beta_%d" % s not in draws.fixed]
    if refused:
        run.warn("no prediction for interval(s) %s, no request was observed there" % refused, intervals=refused)

    pf = dataio.read_predictive_flows(run.input(dataio.PREDICTIVE_FLOWS_FILE), model="BHML")
    if pf.empty:
        raise DataError("predictive flows hold no BHML draw, run predict-flow with the BHML model first")
    table = pf.pivot(index="date", columns="draw", values="flow").sort_index()
    W = predict_wait_matrix(draws, nu, table.to_numpy(), grid, run.rng("wait-predict"), skip_unidentified=True)
    rows = [(j, d, s + 1, W[h, s, j])
            for j in range(W.shape[2]) for h, d in enumerate(table.index) for s in range(grid.S)
            if np.isfinite(W[h, s, j])]
    run.write_frame(pd.DataFrame(rows, columns=["draw", "date", "interval_index", "wait_min"]),
                    dataio.PREDICTIVE_WAITS_FILE)

    M = predict_wait_matrix(draws, nu, series.flows, grid, run.rng("wait-predict-train"),
                            n_draws=cfg.predictive_draws, skip_unidentified=True)
    count = np.isfinite(M).sum(axis=2)
    means = np.where(count > 0, np.nansum(M, axis=2) / np.maximum(count, 1), np.nan)
    rows = [(lib.format_date(series.calendar.date_of(i + 1)), s + 1, means[i, s])
            for i in range(series.N) for s in range(grid.S) if np.isfinite(means[i, s])]
    run.write_frame(pd.DataFrame(rows, columns=["date", "interval_index", "mean_wait_min"]),
                    dataio.TRAIN_WAIT_MEANS_FILE)
    run.info.update({"nu": nu, "test_days": len(table.index), "draws": int(W.shape[2])})


def _aligned(series, df:pd.DataFrame) -> np.ndarray:
    means = df.groupby("date")["flow"].mean()
    return np.array([means.get(lib.format_date(d), np.nan) for d in series.calendar.dates])


def cmd_evaluate(run:Run):
    """
    Weekly MSE of every model on the test and training flows, PE curves of
    the BHML waits
    """
    cfg = run.cfg
    cal, train = _calendar_and_flows(run)
    test = dataio.read_flows(run.input(dataio.FLOWS_TEST_FILE), cal)
    pf = dataio.read_predictive_flows(run.input(dataio.PREDICTIVE_FLOWS_FILE))
    fitted = lib.read_csv(run.input(dataio.FITTED_FLOWS_FILE), dtype={"model": str, "date": str}) \
        if run.has_input(dataio.FITTED_FLOWS_FILE) else None
    deltas = list(cfg.evaluation.pe_deltas)

    records = []
    for model in cfg.models:
        sub = pf[pf["model"] == model]
        if sub.empty:
            run.warn("no prediction for model %s" % model, model=model)
            continue
        weekly = weekly_mse(test, _aligned(test, sub), test.calendar)
        rec = {"model": model, "weekly_mse": [w.to_dict() for w in weekly], "mse_sum": mse_sum(weekly),
               "train_weekly_mse": None, "train_mse_sum": None, "pe_curve": None, "train_pe_curve": None}
        if fitted is not None and not fitted[fitted["model"] == model].empty:
            tw = weekly_mse(train, _aligned(train, fitted[fitted["model"] == model]), train.calendar,
                            burn_in_weeks=cfg.evaluation.burn_in_weeks)
            rec["train_weekly_mse"] = [w.to_dict() for w in tw]
            rec["train_mse_sum"] = mse_sum(tw)
        records.append(rec)

    bhml = next((r for r in records if r["model"] == "BHML"), None)
    if bhml is not None and run.has_input(dataio.PREDICTIVE_WAITS_FILE):
        grid = IntervalGrid(cfg.S)
        first = cal.index_of(test.calendar.start_date)
        if run.has_input(dataio.WAITS_POOLED_FILE):
            cells = dataio.read_cells(run.input(dataio.WAITS_POOLED_FILE), cal)
        else:
            cells = log_cells(dataio.read_waits(run.input(dataio.WAITS_TEST_FILE), cal), grid)
        pw = dataio.read_predictive_waits(run.input(dataio.PREDICTIVE_WAITS_FILE))
        means = dataio.mean_wait_matrix(pw, cal, first, test.N, grid.S)
        bhml["pe_curve"] = pe_curve_cells(cells, means, deltas, first_day=first).to_list()

        if run.has_input(dataio.TRAIN_WAIT_MEANS_FILE) and run.has_input(dataio.WAITS_FILE):
            first = cal.index_of(train.calendar.start_date)
            tm = lib.read_csv(run.input(dataio.TRAIN_WAIT_MEANS_FILE), dtype={"date": str})
            means = dataio.mean_wait_matrix(tm, cal, first, train.N, grid.S, value="mean_wait_min")
            cells = log_cells(dataio.read_waits(run.input(dataio.WAITS_FILE), cal), grid)
            bhml["train_pe_curve"] = pe_curve_cells(cells, means, deltas, first_day=first).to_list()

    metrics = {
        "scenario": None if cfg.scenario is None else cfg.scenario.label,
        "config_hash": run.config_hash,
        "models": records
    }
    run.write_json(metrics, dataio.METRICS_FILE)
    run.write_text(lib.render_template(REPORT_TEMPLATE, dict(metrics, report_deltas=REPORT_DELTAS)),
                   dataio.REPORT_FILE)


def cmd_scenario(run:Run, preset:str=None):
    """
    Materialise the train/test split of a scenario into <out>/<label>/
    """
    cfg = run.cfg
    if preset:
        if preset not in PRESETS:
            raise ScenarioError("unknown preset %s, one of %s" % (preset, ", ".join(sorted(PRESETS))))
        scenario = PRESETS[preset]
    elif cfg.scenario is not None:
        scenario = cfg.scenario
    else:
        raise ScenarioError("no scenario configured, use --preset or the scenario config section")

    cal, series = _calendar_and_flows(run)
    split = scenario_split(cal, series, scenario)
    sub = os.path.join(run.out, lib.sanitize_custom_name(scenario.label))
    dataio.ensure_dir(sub)

    def write(df, name):
        run.write_frame(df, os.path.join(os.path.basename(sub), name))

    write(cal.slice(scenario.train_start, scenario.test_end).to_frame(), dataio.CALENDAR_FILE)
    write(split.train.to_frame(), dataio.FLOWS_FILE)
    write(split.test.to_frame(), dataio.FLOWS_TEST_FILE)
    counts = dict(split.counts)

    if run.has_input(dataio.WAITS_FILE):
        log = dataio.read_waits(run.input(dataio.WAITS_FILE), cal)
        train_log = log
        if scenario.aggregation_weeks:
            test_days = range(cal.index_of(scenario.test_start), cal.index_of(scenario.test_end) + 1)
            cells, pooled = aggregate_test_cells(log, cal, test_days, IntervalGrid(cfg.S), scenario.aggregation_weeks)
            train_log = log.drop_days(pooled)
            dataio.write_cells(cells, cal, os.path.join(sub, dataio.WAITS_POOLED_FILE), run.config_hash)
            run.files.append(os.path.join(os.path.basename(sub), dataio.WAITS_POOLED_FILE))
            counts["pooled_days"] = len(pooled)
            counts["pooled_waits"] = int(sum(len(w) for w in cells.values()))
        wsplit = scenario_split(cal, log, scenario)
        train_waits = scenario_split(cal, train_log, scenario).train
        write(train_waits.to_frame(), dataio.WAITS_FILE)
        write(wsplit.test.to_frame(), dataio.WAITS_TEST_FILE)
        counts["train_waits"] = len(train_waits)
        counts["test_waits"] = len(wsplit.test)

    run.info.update({"scenario": scenario.to_dict(), "counts": counts})
    run.write_json({"scenario": scenario.to_dict(), "counts": counts, "config_hash": run.config_hash},
                   os.path.join(os.path.basename(sub), dataio.MANIFEST_FILE))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-flow": cmd_fit_flow,
    "fit-wait": cmd_fit_wait,
    "predict-flow": cmd_predict_flow,
    "predict-wait": cmd_predict_wait,
    "evaluate": cmd_evaluate,
    "scenario": cmd_scenario,
}


#------------------------------------------------------------------------------
# Entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON run config")
    common.add_argument("--seed", type=int, default=None, help="run seed, overrides the config")
    common.add_argument("--out", default=None, help="output directory, overrides the config")
    common.add_argument("--data", default=None, help="input directory, defaults to --out")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="poolcast",
                                     description="Bayesian forecasting of carpooling driver flows and passenger waits")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("simulate", parents=[common], help="simulate a calendar, flows and waits")
    sub.add_parser("fit-flow", parents=[common], help="sample the driver flow posterior")
    sub.add_parser("fit-wait", parents=[common], help="sample the waiting time posterior")
    p = sub.add_parser("predict-flow", parents=[common], help="predict the test flows")
    p.add_argument("--horizon", type=int, default=None, help="number of days, all remaining calendar days by default")
    sub.add_parser("predict-wait", parents=[common], help="predict the test waits")
    sub.add_parser("evaluate", parents=[common], help="score the predictions")
    p = sub.add_parser("scenario", parents=[common], help="materialise a train/test scenario")
    p.add_argument("--preset", default=None, choices=sorted(PRESETS), help="built-in scenario")
    return parser


def setup_logging(level:str):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("poolcast")
    root.handlers[:] = [handler]
    root.setLevel(level)


def _fail(e:Exception) -> dict:
    if isinstance(e, PoolcastError):
        return e.to_dict()
    return {"error": e.__class__.__name__, "message": str(e), "details": {}}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = load_config(args.config, overrides={"seed": args.seed, "out": args.out})
        run = Run(args.command, cfg, data_dir=args.data)
        if args.command == "predict-flow":
            cmd_predict_flow(run, horizon=args.horizon)
        elif args.command == "scenario":
            cmd_scenario(run, preset=args.preset)
        else:
            COMMANDS[args.command](run)
        run.close()
    except PoolcastError as e:
        sys.stderr.write(lib.json_dumps(_fail(e)) + "\n")
        return 2
    except Exception as e:
        logger.debug("unexpected error", exc_info=True)
        sys.stderr.write(lib.json_dumps(_fail(e)) + "\n")
        return 1
    for w in run.warnings:
        sys.stderr.write(lib.json_dumps({"warning": w["message"], "command": args.command}) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
