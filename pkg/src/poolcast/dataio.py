#-----------------------------
# -- Poolcast --
#-----------------------------

"""
Dataset and artifact files

Every CSV written here starts with a `# poolcast config_hash=<sha256>` line
and is read back with `#` lines skipped. Schema problems raise SchemaError
with the offending row (the header is row 1).
"""

import os
import logging
import numpy as np
import pandas as pd
from . import lib
from .calendar import ServiceCalendar
from .flow_model import FlowSeries
from .waiting_model import RequestLog
from .inference import PosteriorDraws
from .exceptions import DataError, SchemaError

logger = logging.getLogger(__name__)

CALENDAR_FILE = "calendar.csv"
FLOWS_FILE = "flows.csv"
FLOWS_TEST_FILE = "flows_test.csv"
WAITS_FILE = "waits.csv"
WAITS_TEST_FILE = "waits_test.csv"
WAITS_POOLED_FILE = "waits_pooled.csv"
FLOW_DRAWS_FILE = "flow_draws.csv"
FLOW_DIAGNOSTICS_FILE = "flow_diagnostics.json"
WAIT_DRAWS_FILE = "wait_draws.csv"
WAIT_DIAGNOSTICS_FILE = "wait_diagnostics.json"
PREDICTIVE_FLOWS_FILE = "predictive_flows.csv"
FITTED_FLOWS_FILE = "fitted_flows.csv"
PREDICTIVE_WAITS_FILE = "predictive_waits.csv"
TRAIN_WAIT_MEANS_FILE = "predictive_wait_means_train.csv"
METRICS_FILE = "metrics.json"
REPORT_FILE = "report.txt"
MANIFEST_FILE = "manifest.json"


def _read(path, **kwargs) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise DataError("missing input file: %s" % path, path=str(path))
    try:
        return lib.read_csv(path, **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaError("unreadable CSV: %s" % e, path=str(path))


def _with_path(e:SchemaError, path) -> SchemaError:
    e.details.setdefault("path", str(path))
    return e


def ensure_dir(path) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataError("cannot create output directory %s: %s" % (path, e), path=str(path))
    if not os.access(path, os.W_OK):
        raise DataError("output directory is not writable: %s" % path, path=str(path))
    return path


def write_frame(df:pd.DataFrame, path, config_hash:str=None) -> str:
    try:
        lib.write_csv(df, path, config_hash)
    except OSError as e:
        raise DataError("cannot write %s: %s" % (path, e), path=str(path))
    logger.info("wrote %s (%d rows)", path, len(df))
    return str(path)


def write_json(data:dict, path) -> str:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(lib.json_dumps(data, canonical=True))
            f.write("\n")
    except OSError as e:
        raise DataError("cannot write %s: %s" % (path, e), path=str(path))
    logger.info("wrote %s", path)
    return str(path)


def read_json(path) -> dict:
    if not os.path.isfile(path):
        raise DataError("missing input file: %s" % path, path=str(path))
    with open(path, encoding="utf-8") as f:
        try:
            return lib.json_loads(f.read())
        except ValueError as e:
            raise SchemaError("invalid JSON: %s" % e, path=str(path))


# --- datasets

def read_calendar(path) -> ServiceCalendar:
    if not os.path.isfile(path):
        raise DataError("missing input file: %s" % path, path=str(path))
    try:
        return ServiceCalendar.load(path)
    except SchemaError as e:
        raise _with_path(e, path)


def read_flows(path, calendar:ServiceCalendar) -> FlowSeries:
    """ flows.csv `date,flow`; integer counts are widened to reals """
    df = _read(path, dtype={"date": str})
    try:
        return FlowSeries.from_frame(df, calendar)
    except SchemaError as e:
        raise _with_path(e, path)


def read_waits(path, calendar:ServiceCalendar) -> RequestLog:
    """ waits.csv `date,request_time,pseudo_wait_min[,arrival_time]` """
    df = _read(path, dtype={"date": str, "request_time": str, "arrival_time": str})
    try:
        return RequestLog.from_frame(df, calendar)
    except SchemaError as e:
        raise _with_path(e, path)


def write_cells(cells:dict, calendar:ServiceCalendar, path, config_hash:str=None) -> str:
    """ pooled waits `date,interval_index,pseudo_wait_min` """
    rows = [(lib.format_date(calendar.date_of(d)), s, w)
            for (d, s), waits in sorted(cells.items()) for w in waits]
    return write_frame(pd.DataFrame(rows, columns=["date", "interval_index", "pseudo_wait_min"]), path, config_hash)


def read_cells(path, calendar:ServiceCalendar) -> dict:
    df = _read(path, dtype={"date": str})
    missing = {"date", "interval_index", "pseudo_wait_min"} - set(df.columns)
    if missing:
        raise SchemaError("pooled waits are missing columns: %s" % ", ".join(sorted(missing)), path=str(path))
    cells = {}
    for row, (d, s, w) in enumerate(zip(df["date"], df["interval_index"], df["pseudo_wait_min"]), start=2):
        try:
            key = (calendar.index_of(lib.parse_date(d)), int(s))
        except (ValueError, TypeError) as e:
            raise SchemaError("invalid pooled wait: %s" % e, row=row, path=str(path))
        cells.setdefault(key, []).append(float(w))
    return {k: np.asarray(v) for k, v in cells.items()}


# --- posterior draws

def write_draws(draws:PosteriorDraws, path, config_hash:str=None) -> str:
    return write_frame(draws.to_frame(), path, config_hash)


def read_draws(path, fixed:dict=None) -> PosteriorDraws:
    """ draws.csv `chain,iter,param,value` """
    df = _read(path, dtype={"param": str})
    try:
        return PosteriorDraws.from_frame(df, fixed=fixed)
    except SchemaError as e:
        raise _with_path(e, path)


# --- predictions

def read_predictive_flows(path, model:str=None) -> pd.DataFrame:
    """ predictive_flows.csv `model,draw,date,flow` """
    df = _read(path, dtype={"model": str, "date": str})
    missing = {"model", "draw", "date", "flow"} - set(df.columns)
    if missing:
        raise SchemaError("predictive flows are missing columns: %s" % ", ".join(sorted(missing)), path=str(path))
    if model is not None:
        df = df[df["model"] == model]
    return df


def read_predictive_waits(path) -> pd.DataFrame:
    """ predictive_waits.csv `draw,date,interval_index,wait_min` """
    df = _read(path, dtype={"date": str})
    missing = {"draw", "date", "interval_index", "wait_min"} - set(df.columns)
    if missing:
        raise SchemaError("predictive waits are missing columns: %s" % ", ".join(sorted(missing)), path=str(path))
    return df


def mean_wait_matrix(df:pd.DataFrame, calendar:ServiceCalendar, first_day:int, n_days:int, S:int,
                     value:str="wait_min") -> np.ndarray:
    """
    Per cell mean of predictive waits as a (n_days, S) matrix, NaN where no
    prediction was made. Row 0 holds `first_day`.
    """
    out = np.full((n_days, S), np.nan)
    if df.empty:
        return out
    means = df.groupby(["date", "interval_index"])[value].mean()
    for (d, s), m in means.items():
        row = calendar.index_of(lib.parse_date(d)) - first_day
        if 0 <= row < n_days and 1 <= s <= S:
            out[row, int(s) - 1] = m
    return out
