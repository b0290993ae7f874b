"""Experiment configuration: line-oriented ``key = value`` with ``[section]`` headers.

    # comment
    [model]
    name = circle
    n = 512

    [experiment]
    name = bernstein
    p = inf
    N = 4, 8, 16

Lists are comma separated; dyadic sweeps are written as exponent ranges,
``h_exp = -12..6``.  Every value is validated before any computation and
errors carry the line number of the offending entry.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigError

MODELS = ("circle", "dirichlet", "divergence", "oscillator")
EXPERIMENTS = ("bernstein", "equivalence", "holomorphic", "kernel-audit", "lplq",
               "multiplier-uniformity", "regularity", "reverse", "semiclassical",
               "semiclassical-reverse")
FAMILIES = ("bump", "power_decay", "smooth_cutoff", "tail_step")


def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _exponent(s):
    t = s.strip().lower()
    if t in ("inf", "infinity"):
        return math.inf
    v = float(t)
    if not v >= 1:
        raise ValueError("exponent must be >= 1 or inf")
    return v


def _int_list(s):
    vals = [int(x) for x in s.split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _float_list(s):
    vals = [_float(x) for x in s.split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _exp_range(s):
    lo, sep, hi = s.partition("..")
    if not sep:
        raise ValueError("expected an exponent range lo..hi")
    lo, hi = int(lo), int(hi)
    if lo > hi:
        raise ValueError("empty exponent range")
    return (lo, hi)


def _onoff(s):
    t = s.strip().lower()
    if t not in ("on", "off", "true", "false", "yes", "no"):
        raise ValueError("expected on/off")
    return t in ("on", "true", "yes")


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _str(s):
    return s


SCHEMA = {
    "model": {
        "name": _choice(MODELS), "n": _int, "length": _float, "left": _float,
        "circumference": _float, "potential": _choice(("none", "harmonic", "constant")),
        "potential_value": _float, "K": _int, "x_max": _float, "grid_n": _int,
        "coefficient": _choice(("constant", "piecewise", "random")), "c_values": _float_list,
        "c_lo": _float, "c_hi": _float, "cells": _int, "c_seed": _int,
    },
    "experiment": {
        "name": _choice(EXPERIMENTS), "N": _int_list, "K": _int, "K_factor": _int,
        "p": _exponent, "q": _exponent, "m_dim": _float, "form": _choice(("sum", "square")),
        "h_exp": _exp_range, "t_exp": _exp_range, "t": _float_list, "theta": _float,
        "c": _float, "c0": _float, "psi": _choice(FAMILIES), "psi_params": _float_list,
        "psi2": _choice(FAMILIES), "psi2_params": _float_list,
        "kind": _choice(("forward", "reverse")), "samples": _int, "oracle_dps": _int,
        "seed": _int, "tolerance": _float,
    },
    "optimizer": {"restarts": _int, "max_iters": _int, "tol": _float, "shrink": _float},
    "output": {"dir": _str, "svg": _onoff, "prefix": _str},
}

REQUIRED = {
    "bernstein": ("N", "p"),
    "reverse": ("N", "q"),
    "lplq": ("N", "p", "q"),
    "semiclassical": ("p", "h_exp"),
    "semiclassical-reverse": ("q", "h_exp"),
    "kernel-audit": (),
    "regularity": ("p", "t_exp"),
    "multiplier-uniformity": ("q", "h_exp"),
    "holomorphic": ("q", "t_exp"),
    "equivalence": ("p", "h_exp", "psi", "psi2"),
}


@dataclass
class ExperimentConfig:
    model: dict
    experiment: dict
    optimizer: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # (section, key) -> line number
    source: str = "<config>"
    text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def line_of(self, section: str, key: str) -> int:
        return self.lines.get((section, key), 0)

    def error(self, section: str, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{section}.{key}: {msg}", line=self.line_of(section, key))


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    sections: dict[str, dict] = {s: {} for s in SCHEMA}
    lines: dict = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=no)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", line=no)
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=no)
        if current is None:
            raise ConfigError("entry before any [section] header", line=no)
        key, value = key.strip(), value.strip()
        parser = SCHEMA[current].get(key)
        if parser is None:
            raise ConfigError(f"unknown key {key!r} in [{current}]", line=no)
        if (current, key) in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[(current, key)]})",
                              line=no)
        try:
            sections[current][key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})", line=no) from None
        lines[(current, key)] = no
    cfg = ExperimentConfig(sections["model"], sections["experiment"], sections["optimizer"],
                           sections["output"], lines, source, text)
    validate(cfg)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=path)


def validate(cfg: ExperimentConfig) -> None:
    m, e = cfg.model, cfg.experiment
    if "name" not in m:
        raise ConfigError("missing [model] name", line=None)
    if "name" not in e:
        raise ConfigError("missing [experiment] name", line=None)
    for key in REQUIRED[e["name"]]:
        if key not in e:
            raise ConfigError(f"experiment {e['name']!r} requires key {key!r}",
                              line=cfg.line_of("experiment", "name"))
    name = m["name"]
    if "n" in m and m["n"] < (8 if name == "circle" else 2):
        raise cfg.error("model", "n", f"grid size too small for {name}")
    if name == "oscillator" and "K" in m and m["K"] < 4:
        raise cfg.error("model", "K", "Hermite truncation needs K >= 4")
    for key in ("length", "circumference", "x_max"):
        if key in m and not m[key] > 0:
            raise cfg.error("model", key, "must be positive")
    if m.get("potential") == "constant" and m.get("potential_value", 0.0) < 0:
        raise cfg.error("model", "potential_value", "potential must be nonnegative")
    if "N" in e and any(N < 1 for N in e["N"]):
        raise cfg.error("experiment", "N", "band degrees must be >= 1")
    for key in ("c", "c0", "tolerance"):
        if key in e and not e[key] > 0:
            raise cfg.error("experiment", key, "must be positive")
    if "theta" in e and not abs(e["theta"]) < math.pi / 2:
        raise cfg.error("experiment", "theta", "ray angle must satisfy |theta| < pi/2")
    if "t" in e and any(t <= 0 for t in e["t"]):
        raise cfg.error("experiment", "t", "times must be positive")
    if "samples" in e and e["samples"] < 1:
        raise cfg.error("experiment", "samples", "need at least one sample")
    if e["name"] == "reverse" and "K" in e and "N" in e and e["K"] < max(e["N"]):
        raise cfg.error("experiment", "K", "tail top K must be >= every N")
    o = cfg.optimizer
    if "restarts" in o and o["restarts"] < 1:
        raise cfg.error("optimizer", "restarts", "must be >= 1")
    if "max_iters" in o and o["max_iters"] < 1:
        raise cfg.error("optimizer", "max_iters", "must be >= 1")
    if "shrink" in o and not 0 < o["shrink"] < 1:
        raise cfg.error("optimizer", "shrink", "must lie in (0, 1)")
