#-----------------------------
# -- Poolcast --
#-----------------------------

import json
import arrow
import hashlib
import datetime
import numpy as np
import pandas as pd
from slugify import slugify
from jinja2 import Template


# === RANDOMNESS

def make_rng(seed:int, name:str=None) -> np.random.Generator:
    """
    Create a numpy Generator for a named substream of a 64-bit seed.

    All randomness flows from one seed. Substreams are keyed by name,
    ie: "flow-sim", "wait-sim", "chain-0", so that adding a consumer never
    shifts the draws of another one.

    Args:
        seed:int - the run seed
        name:str|None - the substream name

    Returns:
        numpy.random.Generator

    Example:
        rng = make_rng(42, "flow-sim")
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    if name:
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        entropy.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed:int, name:str) -> int:
    """ A 64-bit seed derived from the run seed for a named stage """
    digest = hashlib.sha256(("%d:%s" % (int(seed), name)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# === DATE + TIME

def parse_date(value) -> datetime.date:
    """
    Parse an ISO-8601 date (YYYY-MM-DD), a datetime.date or an Arrow object

    Returns:
        datetime.date
    """
    if isinstance(value, arrow.Arrow):
        return value.date()
    if isinstance(value, datetime.datetime):
        return value.date()
    if isinstance(value, datetime.date):
        return value
    return arrow.get(str(value).strip(), "YYYY-MM-DD").date()


def format_date(dt:datetime.date) -> str:
    return arrow.get(dt).format("YYYY-MM-DD")


def date_range(start, end) -> list:
    """
    Inclusive list of civil dates between start and end

    Returns:
        list[datetime.date]
    """
    start = arrow.get(parse_date(start))
    end = arrow.get(parse_date(end))
    return [d.date() for d in arrow.Arrow.range("day", start, end)]


def shift_date(dt, days:int) -> datetime.date:
    return arrow.get(parse_date(dt)).shift(days=days).date()


def days_between(start, end) -> int:
    """ Number of days from start to end, end - start """
    return (parse_date(end) - parse_date(start)).days


def week_start(dt) -> datetime.date:
    """ The Monday anchoring the ISO week of dt """
    return arrow.get(parse_date(dt)).floor("week").date()


def parse_clock(value) -> float:
    """
    Parse a clock time HH:MM:SS (or HH:MM) into minutes since midnight

    Example:
        parse_clock("06:30:30") -> 390.5
    """
    if isinstance(value, (int, float, np.floating, np.integer)):
        return float(value)
    parts = [float(p) for p in str(value).strip().split(":")]
    if len(parts) == 2:
        parts.append(0.0)
    if len(parts) != 3:
        raise ValueError("invalid clock time '%s'" % value)
    h, m, s = parts
    return h * 60.0 + m + s / 60.0


def format_clock(minutes:float) -> str:
    """
    Format minutes since midnight as HH:MM:SS, rounded to the second
    """
    total = int(round(float(minutes) * 60.0))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return "%02d:%02d:%02d" % (h, m, s)


# ----------------------
# json_ext

class json_ext:
    """
    JSON Extension class to loads and dumps json.
    Dates, Arrow objects and numpy scalars/arrays are serialized.
    """

    @classmethod
    def dumps(cls, data:dict, canonical:bool=False) -> str:
        """
        Serialize dict to a JSON formatted

        Args:
            data:dict
            canonical:bool - sorted keys and fixed indentation, for hashing
                             and byte-identical files
        """
        if canonical:
            return json.dumps(data, default=cls._serialize, sort_keys=True, indent=2)
        return json.dumps(data, default=cls._serialize)

    @classmethod
    def loads(cls, data:str) -> dict:
        """ Deserialize a JSON string to dict """
        if not data:
            return None
        return json.loads(data)

    @classmethod
    def _serialize(cls, o):
        if isinstance(o, arrow.Arrow):
            return o.format("YYYY-MM-DD")
        if isinstance(o, (datetime.date, datetime.datetime)):
            return o.isoformat()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (set, frozenset, tuple)):
            return list(o)
        raise TypeError("Object of type %s is not JSON serializable" % type(o).__name__)

# alias
json_dumps = json_ext.dumps
json_loads = json_ext.loads


def hash_string(s:str) -> str:
    return hashlib.sha256(s.encode('utf-8')).hexdigest()


def hash_dict(data:dict) -> str:
    """ sha256 of the canonical JSON form of a dict """
    return hash_string(json_dumps(data, canonical=True))


# === CSV

def write_csv(df, path, config_hash:str=None):
    """
    Write a DataFrame as UTF-8 CSV, preceded by `# poolcast config_hash=<sha256>`
    when a hash is given. Floats keep their full repr so reruns are byte-identical.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        if config_hash:
            f.write("# poolcast config_hash=%s\n" % config_hash)
        df.to_csv(f, index=False)


def read_csv(path, **kwargs):
    """ Read a CSV written by `write_csv`, skipping `#` lines """
    return pd.read_csv(path, comment="#", **kwargs)


# === DICT extensions

def dict_merge(*dicts) -> dict:
    """
    Deeply merge an arbitrary number of dicts. Last one wins.

    Args:
        *dicts
    Return:
        dict

    Example
        dict_merge(defaults, file_config, cli_overrides)
    """
    updated = {}
    keys = []
    for d in dicts:
        keys.extend(k for k in d if k not in keys)

    for key in keys:
        values = [d[key] for d in dicts if key in d]
        maps = [value for value in values if isinstance(value, dict)]
        if maps and isinstance(values[-1], dict):
            updated[key] = dict_merge(*maps)
        else:
            updated[key] = values[-1]
    return updated


# === NAMES + TEMPLATES

def sanitize_custom_name(name:str) -> str:
    """ Sanitize a custom name, ie a scenario label, into a directory name """
    return slugify(name, separator="_", max_length=64)


def render_template(source:str, data:dict=None) -> str:
    """
    Render Template string with interpolation
    """
    return Template(source, trim_blocks=True, lstrip_blocks=True).render(**(data or {}))
