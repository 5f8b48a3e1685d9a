import pytest

from qnslab.config import SCHEMA, load_config, parse_config
from qnslab.errors import ConfigError


def test_defaults_fill_every_section():
    cfg = parse_config("[run]\nkind = stationary\n")
    assert cfg.kind == "stationary"
    assert set(cfg.sections) == set(SCHEMA)
    assert cfg["grid"] == {"dim": 3, "n": 32, "box_length": 20.0}
    assert cfg["params"]["rho_floor"] is None
    assert cfg.seed == 0 and cfg.threads == 1


def test_value_parsing():
    text = """
[run]
kind = decay
seed = 9 ; inline comment
[decay]
s = 0, 0.5 1.0
window = 5, 500
lp_orders = 0 1
hook = heat
[forcing]
center = 1.0, 2.0, 3.0
[check]
inject_fault = yes
suites = spectral, oracle
"""
    cfg = parse_config(text)
    assert cfg.seed == 9
    assert cfg["decay"]["s"] == [0.0, 0.5, 1.0]
    assert cfg["decay"]["window"] == [5.0, 500.0]
    assert cfg["decay"]["lp_orders"] == [0, 1]
    assert cfg["forcing"]["center"] == [1.0, 2.0, 3.0]
    assert cfg["check"]["inject_fault"] is True
    assert cfg["check"]["suites"] == ["spectral", "oracle"]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[run]\nkind = stationary\n[grid]\nsize = 4\n", "unknown key"),
        ("[run]\nkind = stationary\n[gird]\n", "unknown section"),
        ("[run]\nkind = stationary\n[grid]\nn = many\n", "n:"),
        ("[run]\nkind = stationary\n[evolve]\nscheme = rk4\n", "scheme must be one of"),
        ("[run]\nkind = stationary\n[stationary]\nouter_tol = 0\n", "must be positive"),
        ("[run]\nkind = decay\n[decay]\ns = 1.5\n", "[0, 3/2)"),
        ("[run]\nkind = walk\n", "kind must be one of"),
        ("[run]\nkind = stationary\nthreads = 0\n", "threads"),
        ("[run]\nkind = stationary\n[check]\ninject_fault = maybe\n", "boolean"),
        ("not an ini file", "stationary"),
    ],
)
def test_rejections(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, expect_kind="stationary" if "walk" not in text else None)
    assert fragment in str(info.value) or "File contains no section headers" in str(info.value)


def test_kind_mismatch_and_inference():
    with pytest.raises(ConfigError, match="was requested"):
        parse_config("[run]\nkind = decay\n", expect_kind="evolve")
    assert parse_config("[grid]\nn = 8\n", expect_kind="evolve").kind == "evolve"


def test_overrides_and_resolved():
    cfg = parse_config("[run]\nkind = check\nseed = 1\n", overrides={"run.seed": 5, "run.threads": 4})
    assert cfg.seed == 5 and cfg.threads == 4
    assert "threads" not in cfg.resolved()["run"]
    assert cfg.resolved()["run"]["seed"] == 5


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
    path = tmp_path / "ok.cfg"
    path.write_text("[run]\nkind = check\n")
    assert load_config(path).source == str(path)
