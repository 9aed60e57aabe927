import pytest
import datetime
import numpy as np
from poolcast import lib


def test_make_rng_is_reproducible():
    a = lib.make_rng(42, "flow-sim").normal(size=5)
    b = lib.make_rng(42, "flow-sim").normal(size=5)
    assert np.array_equal(a, b)

def test_make_rng_substreams_differ():
    a = lib.make_rng(42, "flow-sim").normal(size=5)
    b = lib.make_rng(42, "wait-sim").normal(size=5)
    c = lib.make_rng(43, "flow-sim").normal(size=5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)

def test_derive_seed():
    assert lib.derive_seed(7, "fit-flow") == lib.derive_seed(7, "fit-flow")
    assert lib.derive_seed(7, "fit-flow") != lib.derive_seed(7, "fit-wait")
    assert 0 <= lib.derive_seed(7, "fit-flow") < 2 ** 64

def test_parse_date():
    assert lib.parse_date("2019-05-16") == datetime.date(2019, 5, 16)
    assert lib.parse_date(datetime.date(2019, 5, 16)) == datetime.date(2019, 5, 16)
    with pytest.raises(ValueError):
        lib.parse_date("16/05/2019")

def test_date_range_is_inclusive():
    days = lib.date_range("2018-12-30", "2019-01-02")
    assert len(days) == 4
    assert lib.format_date(days[-1]) == "2019-01-02"

def test_shift_and_days_between():
    assert lib.format_date(lib.shift_date("2018-02-28", 1)) == "2018-03-01"
    assert lib.days_between("2018-05-15", "2019-01-13") == 243

def test_week_start():
    # 2019-05-16 is a Thursday
    assert lib.format_date(lib.week_start("2019-05-16")) == "2019-05-13"
    assert lib.format_date(lib.week_start("2019-05-13")) == "2019-05-13"

def test_clock():
    assert lib.parse_clock("06:30:30") == pytest.approx(390.5)
    assert lib.parse_clock("00:03") == 3.0
    assert lib.format_clock(390.5) == "06:30:30"
    with pytest.raises(ValueError):
        lib.parse_clock("6")

def test_json_ext():
    data = {"d": datetime.date(2019, 1, 2), "n": np.int64(3), "x": np.array([1.5, 2.0])}
    assert lib.json_loads(lib.json_dumps(data)) == {"d": "2019-01-02", "n": 3, "x": [1.5, 2.0]}
    assert lib.json_loads("") is None

def test_hash_dict_ignores_key_order():
    assert lib.hash_dict({"a": 1, "b": [1, 2]}) == lib.hash_dict({"b": [1, 2], "a": 1})
    assert lib.hash_dict({"a": 1}) != lib.hash_dict({"a": 2})

def test_dict_merge():
    defaults = {"seed": 0, "mcmc": {"chains": 4, "keep_iters": 5000}}
    file_config = {"mcmc": {"chains": 2}}
    overrides = {"seed": 7}
    merged = lib.dict_merge(defaults, file_config, overrides)
    assert merged == {"seed": 7, "mcmc": {"chains": 2, "keep_iters": 5000}}
    assert defaults["mcmc"]["chains"] == 4

def test_csv_config_hash_line(tmp_path):
    import pandas as pd
    path = str(tmp_path / "x.csv")
    lib.write_csv(pd.DataFrame({"a": [1, 2]}), path, "abc")
    with open(path) as f:
        assert f.readline().strip() == "# poolcast config_hash=abc"
    assert lib.read_csv(path)["a"].tolist() == [1, 2]

def test_sanitize_custom_name():
    assert lib.sanitize_custom_name("Flow 1 / May") == "flow_1_may"

def test_render_template():
    assert lib.render_template("MSE {{ v }}", {"v": 3}) == "MSE 3"
