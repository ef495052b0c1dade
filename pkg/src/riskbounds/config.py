"""Experiment configuration: one JSON file, every field explicit.

Numbers may be written as decimal strings (preferred) or JSON numbers and are
parsed to floats once. Unknown keys are rejected. Errors carry the line of the
offending key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import BrownianLattice, Claim
from .market import MarketError, MarketModel
from .penalty import Penalty

LEGS = ("low", "buyer", "seller", "up")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "config"):
        self.line = line
        self.reason = message
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ModelBlock:
    n: int
    d: int
    mu: list
    sigma: list
    u: float
    s0: list
    T: float
    N: int


@dataclass(frozen=True)
class ClaimBlock:
    kind: str
    strike: float
    cap: float | None


@dataclass(frozen=True)
class PenaltyBlock:
    kind: str
    gamma: float | None


@dataclass(frozen=True)
class RunBlock:
    drivers: tuple[str, ...]
    chain_check: bool
    hedging: str
    oracle_checks: bool
    out_dir: str
    max_csv_rows: int


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock
    claim: ClaimBlock
    penalty: PenaltyBlock
    run: RunBlock
    source: str = "config"
    key_lines: dict = field(default_factory=dict, repr=False, compare=False)

    def error(self, message: str, key: str | None = None) -> ConfigError:
        """A :class:`ConfigError` anchored at ``key`` (dotted, e.g. ``"model.u"``)."""
        return ConfigError(message, self.key_lines.get(key), self.source)

    def build_model(self) -> MarketModel:
        m = self.model
        return MarketModel(mu=m.mu, sigma=m.sigma, u=m.u, s0=m.s0, horizon=m.T, steps=m.N)

    def build_lattice(self) -> BrownianLattice:
        return BrownianLattice(self.model.N, self.model.T, self.model.d)

    def build_claim(self) -> Claim:
        return Claim(self.claim.kind, self.claim.strike, self.claim.cap)

    def build_penalty(self) -> Penalty:
        if self.penalty.kind == "zero":
            return Penalty.zero()
        return Penalty.quadratic(self.penalty.gamma)

    def to_dict(self) -> dict:
        m, c, p, r = self.model, self.claim, self.penalty, self.run
        return {
            "model": {"n": m.n, "d": m.d, "mu": [repr(x) for x in m.mu],
                      "sigma": [[repr(x) for x in row] for row in m.sigma],
                      "u": repr(m.u), "s0": [repr(x) for x in m.s0], "T": repr(m.T), "N": m.N},
            "claim": {"kind": c.kind, "strike": repr(c.strike),
                      "cap": None if c.cap is None else repr(c.cap)},
            "penalty": {"kind": p.kind, "gamma": None if p.gamma is None else repr(p.gamma)},
            "run": {"drivers": list(r.drivers), "chain_check": r.chain_check,
                    "hedging": r.hedging, "oracle_checks": r.oracle_checks,
                    "out_dir": r.out_dir, "max_csv_rows": r.max_csv_rows},
        }

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        blocks = {"model": self.model, "claim": self.claim, "penalty": self.penalty, "run": self.run}
        blocks[section] = type(blocks[section])(**{**blocks[section].__dict__, **changes})
        return ExperimentConfig(**blocks, source=self.source, key_lines=self.key_lines)


_SCHEMA = {
    "model": ("n", "d", "mu", "sigma", "u", "s0", "T", "N"),
    "claim": ("kind", "strike", "cap"),
    "penalty": ("kind", "gamma"),
    "run": ("drivers", "chain_check", "hedging", "oracle_checks", "out_dir", "max_csv_rows"),
}


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def line_of(self, *path: str) -> int | None:
        pos = 0
        for key in path:
            found = self.text.find(f'"{key}"', pos)
            if found < 0:
                break
            pos = found
        return self.text.count("\n", 0, pos) + 1 if path else None

    def fail(self, message: str, *path: str):
        raise ConfigError(message, self.line_of(*path), self.source)

    def number(self, value, *path) -> float:
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            self.fail(f"{'.'.join(path)}: expected a decimal string", *path)
        try:
            out = float(value)
        except ValueError:
            self.fail(f"{'.'.join(path)}: {value!r} is not a decimal number", *path)
        if not np.isfinite(out):
            self.fail(f"{'.'.join(path)}: must be finite", *path)
        return out

    def integer(self, value, *path) -> int:
        x = self.number(value, *path)
        if x != int(x):
            self.fail(f"{'.'.join(path)}: expected an integer", *path)
        return int(x)

    def vector(self, value, length, *path) -> list:
        if not isinstance(value, list) or len(value) != length:
            self.fail(f"{'.'.join(path)}: expected a list of {length} numbers", *path)
        return [self.number(v, *path) for v in value]

    def boolean(self, value, *path) -> bool:
        if not isinstance(value, bool):
            self.fail(f"{'.'.join(path)}: expected true or false", *path)
        return value

    def string(self, value, choices, *path) -> str:
        if value not in choices:
            self.fail(f"{'.'.join(path)}: expected one of {', '.join(choices)}, got {value!r}", *path)
        return value


def parse_config(text: str, source: str = "config") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    rd = _Reader(text, source)
    if not isinstance(raw, dict):
        rd.fail("top level must be an object")
    for extra in set(raw) - set(_SCHEMA):
        rd.fail(f"unknown key {extra!r}", extra)
    for block, keys in _SCHEMA.items():
        if block not in raw or not isinstance(raw[block], dict):
            rd.fail(f"missing block {block!r}", block)
        for extra in set(raw[block]) - set(keys):
            rd.fail(f"unknown key {block}.{extra}", block, extra)
        for key in keys:
            if key not in raw[block]:
                rd.fail(f"missing key {block}.{key}", block)

    m = raw["model"]
    n = rd.integer(m["n"], "model", "n")
    d = rd.integer(m["d"], "model", "d")
    if not 1 <= n <= d:
        rd.fail("model: need 1 <= n <= d", "model", "n")
    sigma = m["sigma"]
    if not isinstance(sigma, list) or len(sigma) != n:
        rd.fail(f"model.sigma: expected {n} rows", "model", "sigma")
    model = ModelBlock(
        n=n, d=d,
        mu=rd.vector(m["mu"], n, "model", "mu"),
        sigma=[rd.vector(row, d, "model", "sigma") for row in sigma],
        u=rd.number(m["u"], "model", "u"),
        s0=rd.vector(m["s0"], n, "model", "s0"),
        T=rd.number(m["T"], "model", "T"),
        N=rd.integer(m["N"], "model", "N"),
    )

    c = raw["claim"]
    kind = rd.string(c["kind"], ("call", "put", "digital"), "claim", "kind")
    cap = None if c["cap"] is None else rd.number(c["cap"], "claim", "cap")
    claim = ClaimBlock(kind, rd.number(c["strike"], "claim", "strike"), cap)

    p = raw["penalty"]
    pkind = rd.string(p["kind"], ("zero", "quadratic"), "penalty", "kind")
    gamma = None if p["gamma"] is None else rd.number(p["gamma"], "penalty", "gamma")
    if pkind == "quadratic" and (gamma is None or gamma <= 0):
        rd.fail("penalty.gamma: quadratic penalty needs gamma > 0", "penalty", "gamma")

    r = raw["run"]
    drivers = r["drivers"]
    if not isinstance(drivers, list) or not drivers or any(x not in LEGS for x in drivers):
        rd.fail(f"run.drivers: expected a non-empty list drawn from {', '.join(LEGS)}", "run", "drivers")
    run = RunBlock(
        drivers=tuple(x for x in LEGS if x in drivers),
        chain_check=rd.boolean(r["chain_check"], "run", "chain_check"),
        hedging=rd.string(r["hedging"], ("M", "CW"), "run", "hedging"),
        oracle_checks=rd.boolean(r["oracle_checks"], "run", "oracle_checks"),
        out_dir=r["out_dir"] if isinstance(r["out_dir"], str) else rd.fail(
            "run.out_dir: expected a path string", "run", "out_dir"),
        max_csv_rows=rd.integer(r["max_csv_rows"], "run", "max_csv_rows"),
    )
    if run.chain_check and len(run.drivers) != 4:
        rd.fail("run.chain_check needs all four drivers", "run", "chain_check")

    lines = {f"{block}.{key}": rd.line_of(block, key) for block, keys in _SCHEMA.items() for key in keys}
    cfg = ExperimentConfig(model, claim, PenaltyBlock(pkind, gamma), run, source, lines)
    try:
        cfg.build_claim()
        cfg.build_model()
    except MarketError as exc:
        key = "u" if "EMM" in str(exc) else "sigma" if "sigma" in str(exc) else "mu"
        rd.fail(str(exc), "model", key)
    except ValueError as exc:
        rd.fail(str(exc), "claim")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
