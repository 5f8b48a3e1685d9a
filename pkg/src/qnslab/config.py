"""Run configuration: sectioned key = value files read with configparser.

Only the keys listed in ``SCHEMA`` are accepted; anything else is an error so
that typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

KINDS = ("stationary", "evolve", "decay", "check")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "default") else float(text)


def _words(text: str) -> list[str]:
    return [w for w in text.replace(",", " ").split() if w]


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "kind": (str, None),
        "seed": (int, 0),
        "threads": (int, 1),
    },
    "grid": {
        "dim": (int, 3),
        "n": (int, 32),
        "box_length": (float, 20.0),
    },
    "params": {
        "mu": (float, 1.0),
        "lambda": (float, 0.0),
        "hbar": (float, 1.0),
        "gamma": (float, 1.0),
        "rho_bar": (float, 1.0),
        "rho_floor": (_opt_float, None),
    },
    "forcing": {
        "kind": (str, "gaussian-bump"),
        "amplitude": (float, 1e-3),
        "width": (float, 2.0),
        "center": (lambda t: _floats(t) or None, None),
        "profile": (str, "gaussian"),
        "decay_exponent": (float, 4.0),
        "table": (str, ""),
    },
    "stationary": {
        "outer_tol": (float, 1e-10),
        "max_outer": (int, 60),
        "inner_tol": (float, 1e-10),
        "threshold": (float, 0.1),
        "smallness": (str, "warn"),
        "compat_bound": (float, 0.05),
    },
    "evolve": {
        "snapshot": (str, ""),
        "delta": (float, 1e-3),
        "dt": (float, 0.1),
        "t_end": (float, 50.0),
        "scheme": (str, "imex-rk2"),
        "cfl_safety": (float, 0.5),
        "output_stride": (int, 5),
        "form": (str, "perturbation"),
    },
    "decay": {
        "s": (_floats, [0.0]),
        "eta": (float, 0.01),
        "t_max": (float, 1000.0),
        "per_decade": (int, 20),
        "window": (_floats, [10.0, 1000.0]),
        "tol": (float, 0.07),
        "lp_orders": (lambda t: [int(v) for v in _floats(t)], [0, 1]),
        "hook": (str, "none"),
    },
    "check": {
        "suites": (_words, ["all"]),
        "samples": (int, 20),
        "inject_fault": (_bool, False),
    },
}

TOLERANCE_KEYS = {
    "stationary": ("outer_tol", "inner_tol", "threshold", "compat_bound"),
    "evolve": ("dt", "cfl_safety"),
    "decay": ("tol", "eta"),
}

CHOICES = {
    ("stationary", "smallness"): ("warn", "raise", "ignore"),
    ("evolve", "scheme"): ("imex-euler", "imex-rk2"),
    ("evolve", "form"): ("perturbation", "raw"),
    ("decay", "hook"): ("none", "heat"),
    ("forcing", "kind"): ("gaussian-bump", "dipole-divergence", "custom-table", "zero"),
    ("forcing", "profile"): ("gaussian", "algebraic"),
}


@dataclass
class RunConfig:
    kind: str
    sections: dict[str, dict] = field(default_factory=dict)
    source: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    @property
    def threads(self) -> int:
        return self.sections["run"]["threads"]

    def resolved(self) -> dict:
        """Every setting that influences numbers; threads and paths excluded."""
        out = {name: dict(values) for name, values in self.sections.items()}
        out["run"] = {k: v for k, v in out["run"].items() if k != "threads"}
        return out


def parse_config(
    text: str, source: str = "<string>", overrides: dict | None = None, expect_kind: str | None = None
) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from err
    problems = []
    sections: dict[str, dict] = {}
    for name in cp.sections():
        if name not in SCHEMA:
            problems.append(f"unknown section [{name}]")
    for name, keys in SCHEMA.items():
        values = {}
        given = cp[name] if cp.has_section(name) else {}
        for key in given:
            if key not in keys:
                problems.append(f"[{name}] unknown key {key!r}")
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    values[key] = parse(given[key])
                except ValueError as err:
                    problems.append(f"[{name}] {key}: {err}")
                    continue
            else:
                values[key] = default
            if (name, key) in CHOICES and values[key] not in CHOICES[(name, key)]:
                problems.append(f"[{name}] {key} must be one of {CHOICES[(name, key)]}, got {values[key]!r}")
        sections[name] = values
    for key, value in (overrides or {}).items():
        section, _, k = key.partition(".")
        sections[section][k] = value
    kind = sections["run"]["kind"]
    if kind is None and expect_kind is not None:
        kind = sections["run"]["kind"] = expect_kind
    if expect_kind is not None and kind != expect_kind:
        problems.append(f"[run] kind is {kind!r} but the {expect_kind!r} run was requested")
    elif kind not in KINDS:
        problems.append(f"[run] kind must be one of {KINDS}, got {kind!r}")
    for name, keys in TOLERANCE_KEYS.items():
        for key in keys:
            v = sections[name].get(key)
            if isinstance(v, float) and not v > 0:
                problems.append(f"[{name}] {key} must be positive")
    if any(not 0 <= s < 1.5 for s in sections["decay"]["s"]):
        problems.append(f"[decay] s must lie in [0, 3/2), got {sections['decay']['s']}")
    if sections["run"]["threads"] < 1:
        problems.append("[run] threads must be >= 1")
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))
    return RunConfig(kind, sections, source)


def load_config(path, overrides: dict | None = None, expect_kind: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, str(path), overrides, expect_kind)
