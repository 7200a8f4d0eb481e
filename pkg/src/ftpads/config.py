"""Run configuration files.

TOML with a fixed schema: every key has a declared type, unknown keys and
type mismatches are rejected with the offending line number.

    [run]
    lps = 4
    entities = 100
    steps = 1000
    seed = 7
    failure_model = "crash"        # or "byzantine"
    tolerated_faults = 2
    workers = 1
    enforce_constraint = true
    placement = "random"           # or "round_robin"

    [migration]
    enabled = false
    window_steps = 16
    threshold = 0.5
    load_cap = 1.5

    [model]
    degree = 5
    ping_period = 4
    p = 0.8
    latency_mu = 1.3862943611198906
    latency_sigma = 0.5
    step_quantum = 1.0
    refresh_period = 32

    [[fault]]
    lp = 2
    step = 500
    kind = "crash"                 # or "byzantine"
    behavior = "corrupt_all"       # corrupt_all | corrupt_with_prob | silent | garbage
    prob = 1.0
    rng_seed = 0
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ConfigError, FailureModel, FaultKind, FtpadsError
from .engine import SimulationConfig
from .faults import ByzantineBehavior, ByzantineMode, EventKind, FailureEvent, FailureSchedule
from .migration import MigrationConfig
from .p2pmodel import LatencyModel, P2PParams

_INT, _FLOAT, _BOOL, _STR = "int", "float", "bool", "str"

SCHEMA: dict[str, dict[str, str]] = {
    "run": {
        "lps": _INT,
        "entities": _INT,
        "steps": _INT,
        "seed": _INT,
        "failure_model": _STR,
        "tolerated_faults": _INT,
        "workers": _INT,
        "enforce_constraint": _BOOL,
        "placement": _STR,
    },
    "migration": {
        "enabled": _BOOL,
        "window_steps": _INT,
        "threshold": _FLOAT,
        "load_cap": _FLOAT,
    },
    "model": {
        "degree": _INT,
        "ping_period": _INT,
        "p": _FLOAT,
        "latency_mu": _FLOAT,
        "latency_sigma": _FLOAT,
        "step_quantum": _FLOAT,
        "refresh_period": _INT,
    },
    "fault": {
        "lp": _INT,
        "step": _INT,
        "kind": _STR,
        "behavior": _STR,
        "prob": _FLOAT,
        "rng_seed": _INT,
    },
}
REQUIRED_RUN = ("lps", "entities", "steps")


@dataclass(frozen=True)
class RunConfig:
    sim: SimulationConfig
    schedule: FailureSchedule
    model: P2PParams

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, sim=replace(self.sim, master_seed=seed))

    def with_workers(self, workers: int) -> RunConfig:
        return replace(self, sim=replace(self.sim, workers=workers))


class _Lines:
    """Maps (section, table index, key) to the line defining it."""

    _header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_]+)\s*\]\]?")
    _key = re.compile(r"^\s*([A-Za-z0-9_\"']+)\s*=")

    def __init__(self, text: str):
        self.where: dict[tuple[str, int, str | None], int] = {}
        counts: dict[str, int] = {}
        section, index = "", 0
        for lineno, line in enumerate(text.splitlines(), 1):
            m = self._header.match(line)
            if m:
                section = m.group(2)
                index = counts.get(section, 0)
                counts[section] = index + 1
                self.where.setdefault((section, index, None), lineno)
                continue
            m = self._key.match(line)
            if m:
                self.where.setdefault((section, index, m.group(1).strip("\"'")), lineno)

    def __call__(self, section: str, key: str | None = None, index: int = 0) -> int | None:
        return self.where.get((section, index, key)) or self.where.get((section, index, None))


def _fail(path: str, line: int | None, msg: str) -> ConfigError:
    where = f"{path}:{line}" if line else path
    return ConfigError(f"{where}: {msg}")


def _check(value: Any, kind: str) -> bool:
    if kind == _BOOL:
        return isinstance(value, bool)
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, str)


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    lines = _Lines(text)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    tables: dict[str, list[dict]] = {}
    for section, body in doc.items():
        if section not in SCHEMA:
            raise _fail(path, lines(section), f"unknown section [{section}]")
        if section == "fault":
            if not isinstance(body, list):
                raise _fail(path, lines(section), "faults are declared as [[fault]] tables")
            tables[section] = body
        else:
            if not isinstance(body, dict):
                raise _fail(path, lines(section), f"[{section}] must be a table")
            tables[section] = [body]
    for section, bodies in tables.items():
        for i, body in enumerate(bodies):
            for key, value in body.items():
                kind = SCHEMA[section].get(key)
                if kind is None:
                    raise _fail(path, lines(section, key, i), f"unknown key '{key}' in [{section}]")
                if not _check(value, kind):
                    raise _fail(
                        path,
                        lines(section, key, i),
                        f"'{key}' must be {kind}, got {type(value).__name__} {value!r}",
                    )

    run = tables.get("run", [{}])[0]
    for key in REQUIRED_RUN:
        if key not in run:
            raise _fail(path, lines("run"), f"missing required key '{key}' in [run]")

    def bad(section: str, key: str, msg: str, index: int = 0) -> ConfigError:
        return _fail(path, lines(section, key, index), msg)

    try:
        kind = FaultKind(run.get("failure_model", "crash"))
    except ValueError:
        raise bad("run", "failure_model", "failure_model must be 'crash' or 'byzantine'") from None
    placement = run.get("placement", "random")
    if placement not in ("random", "round_robin"):
        raise bad("run", "placement", "placement must be 'random' or 'round_robin'")

    mig = tables.get("migration", [{}])[0]
    try:
        migration = MigrationConfig(
            enabled=mig.get("enabled", False),
            window_steps=mig.get("window_steps", 16),
            threshold=float(mig.get("threshold", 0.5)),
            load_cap=float(mig.get("load_cap", 1.5)),
        )
    except FtpadsError as exc:
        raise _fail(path, lines("migration"), str(exc)) from None

    mod = tables.get("model", [{}])[0]
    try:
        model = P2PParams(
            degree=mod.get("degree", 5),
            ping_period=mod.get("ping_period", 4),
            p=float(mod.get("p", 0.8)),
            latency=LatencyModel(
                mu=float(mod.get("latency_mu", math.log(4.0))),
                sigma=float(mod.get("latency_sigma", 0.5)),
                step_quantum=float(mod.get("step_quantum", 1.0)),
            ),
            refresh_period=mod.get("refresh_period", 32),
        )
    except FtpadsError as exc:
        raise _fail(path, lines("model"), str(exc)) from None

    events = []
    for i, f in enumerate(tables.get("fault", [])):
        for key in ("lp", "step"):
            if key not in f:
                raise _fail(path, lines("fault", None, i), f"[[fault]] #{i + 1} is missing '{key}'")
        try:
            ev_kind = EventKind(f.get("kind", "crash"))
        except ValueError:
            raise bad("fault", "kind", "kind must be 'crash' or 'byzantine'", i) from None
        behavior = None
        if ev_kind is EventKind.BYZANTINE:
            try:
                mode = ByzantineMode(f.get("behavior", "corrupt_all"))
            except ValueError:
                modes = ", ".join(m.value for m in ByzantineMode)
                raise bad("fault", "behavior", f"behavior must be one of {modes}", i) from None
            try:
                behavior = ByzantineBehavior(mode, float(f.get("prob", 1.0)), f.get("rng_seed", 0))
            except FtpadsError as exc:
                raise bad("fault", "prob", str(exc), i) from None
        elif "behavior" in f or "prob" in f:
            raise bad("fault", "behavior", "behavior/prob only apply to byzantine faults", i)
        try:
            events.append(FailureEvent(f["lp"], f["step"], ev_kind, behavior))
        except FtpadsError as exc:
            raise _fail(path, lines("fault", None, i), str(exc)) from None
    try:
        schedule = FailureSchedule(tuple(events))
    except FtpadsError as exc:
        raise _fail(path, lines("fault"), str(exc)) from None

    faults = run.get("tolerated_faults", 0)
    if faults < 0:
        raise bad("run", "tolerated_faults", "tolerated_faults must be >= 0")
    sim = SimulationConfig(
        n_lps=run["lps"],
        n_entities=run["entities"],
        model=FailureModel(kind, faults),
        total_steps=run["steps"],
        master_seed=run.get("seed", 0),
        enforce_constraint=run.get("enforce_constraint", True),
        round_robin=placement == "round_robin",
        migration=migration,
        workers=run.get("workers", 1),
    )
    try:
        sim.validate()
    except ConfigError as exc:
        raise _fail(path, lines("run"), f"{type(exc).__name__}: {exc}") from None
    try:
        schedule.validate(sim.n_lps)
    except FtpadsError as exc:
        raise _fail(path, lines("fault"), str(exc)) from None
    return RunConfig(sim, schedule, model)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p))
