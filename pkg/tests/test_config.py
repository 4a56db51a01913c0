import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multibohm.config import ConfigError, RunConfig, emit_config, parse_config
from multibohm.hardy import DetectorSpec, HardyGeometry

MINIMAL = """
[run]
n = 500
seed = 42

[geometry]
theta = 1.0
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.n == 500 and cfg.seed == 42
    assert cfg.geometry == HardyGeometry(theta=1.0)
    assert cfg.offset == -1.0 and cfg.command == "hardy"


def test_track_separation_error_names_field_and_line():
    text = "[run]\nn = 1\n\n[geometry]\nsigma = 2.0\nseparation = 3.0\n"
    with pytest.raises(ConfigError, match="track separation") as e:
        parse_config(text)
    assert e.value.field_name == "geometry.separation"
    assert e.value.line == 6


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match="unknown key") as e:
        parse_config("[run]\nn = 3\nspeed = 4\n")
    assert e.value.line == 3


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[run]\nn = 3\n[extras]\nx = 1\n")


def test_syntax_error_has_line_number():
    with pytest.raises(ConfigError) as e:
        parse_config("[run]\nn = 3\nthis line has no separator\n")
    assert e.value.line == 3


def test_bad_values():
    with pytest.raises(ConfigError, match="run.n"):
        parse_config("[run]\nn = many\n")
    with pytest.raises(ConfigError, match="seed"):
        parse_config("[run]\nseed = -1\n")
    with pytest.raises(ConfigError, match="h"):
        parse_config("[run]\nh = 4.0\n")
    with pytest.raises(ConfigError, match="power of two"):
        parse_config("[run]\ncommand = dirac\n[dirac]\npoints = 100\n")


def test_detectors_parse():
    cfg = parse_config(MINIMAL + "\n[detector.a]\nregion = +x\ntime = 1.7\n")
    assert cfg.detectors == (DetectorSpec("a", "+x", 1.7),)
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[detector.a]\nregion = +x\n")


def test_round_trip_default():
    cfg = RunConfig()
    assert parse_config(emit_config(cfg)) == RunConfig(h=-1.0)
    assert emit_config(parse_config(emit_config(cfg))) == emit_config(cfg)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 10**6),
    seed=st.integers(0, 2**64 - 1),
    h=st.floats(-1.5, 1.5),
    sep=st.floats(20.0, 60.0),
    command=st.sampled_from(["hardy", "equilibrium", "nogo", "dirac", "measure"]),
    check=st.booleans(),
)
def test_round_trip_random(n, seed, h, sep, command, check):
    cfg = RunConfig(command=command, n=n, seed=seed, h=h, check=check, geometry=HardyGeometry(separation=sep))
    again = parse_config(emit_config(cfg))
    assert again == cfg
