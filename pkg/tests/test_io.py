import json
import math
from fractions import Fraction

import numpy as np
import pytest

from drivenscatter.dynamics import Driver, Potential, SystemConfig
from drivenscatter.io import (
    ParseError, RunManifest, ValidationError, fmt, parse_config, read_csv,
    serialize_config, write_csv, write_json,
)


def test_reference_config():
    cfg, run = parse_config("omega=0.7\ne0=1.0\nnu=0.8\npotential=v1\ndriver=f2")
    assert cfg == SystemConfig(omega=0.7, e0=1.0, nu=0.8, potential=Potential.V1,
                               driver=Driver.F2)
    assert run["k_max"] == 500


def test_empty_file_gives_defaults():
    cfg, _ = parse_config("")
    assert cfg == SystemConfig()
    assert cfg.omega == 0.7 and cfg.potential is Potential.V1 and cfg.driver is Driver.F2


def test_comments_and_blank_lines():
    cfg, run = parse_config("# reference\n\n  e0 = 0.5   # weaker\nv0=-1.2\n")
    assert cfg.e0 == 0.5 and run["v0"] == -1.2


def test_invalid_value_names_invariant():
    with pytest.raises(ValidationError, match="omega > 0"):
        parse_config("omega=-1")


@pytest.mark.parametrize("text,line", [("omega=0.7\nfoo=1", 2), ("\n\nomega", 3),
                                       ("e0=1\ne0=2", 2), ("k_max=2.5", 1), ("nu=abc", 1)])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


def test_config_round_trip():
    cfg = SystemConfig(potential="v2", driver="f1", omega=0.65, e0=1.0 / 3.0, nu=1.0,
                       envelope_n=360, dt=1e-3, t_noreturn=123.456)
    run = {"x0": 0.1, "v0": -1.049, "k_max": 40, "cutoff_periods": 7, "seed": 3}
    cfg2, run2 = parse_config(serialize_config(cfg, run))
    assert cfg2 == cfg
    assert run2 == run


def test_float_format_is_lossless():
    for v in (0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, math.pi):
        assert float(fmt(v)) == v
    assert fmt(np.int64(4)) == "4" and fmt(True) == "1" and fmt(math.nan) == "nan"


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(20, 3))
    p = write_csv(tmp_path / "a.csv", ["a", "b", "c"], data)
    text = p.read_text()
    assert text.startswith("a,b,c\n") and ";" not in text
    header, cols = read_csv(p)
    assert header == ["a", "b", "c"]
    assert np.array_equal(np.column_stack([cols[h] for h in header]), data)
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["a"], [(1, 2)])


def test_json_handles_numpy_and_fractions(tmp_path):
    p = write_json(tmp_path / "x.json", {"b": np.arange(3), "a": Fraction(1, 3),
                                         "c": np.float64(0.5), "d": math.inf})
    d = json.loads(p.read_text())
    assert d == {"a": "1/3", "b": [0, 1, 2], "c": 0.5, "d": "inf"}
    assert list(d) == sorted(d)


def test_manifest_digests(tmp_path):
    out = write_csv(tmp_path / "r.csv", ["x"], [(1.0,)])
    m = RunManifest("sweep", {"e0": 1.0})
    m.add_output(out)
    m.write(tmp_path / "r.manifest.json")
    assert m.verify(tmp_path) == []
    out.write_text("x\n2\n")
    assert m.verify(tmp_path) == ["r.csv"]
    d = json.loads((tmp_path / "r.manifest.json").read_text())
    assert d["complete"] is True and set(d["outputs"]) == {"r.csv"}
