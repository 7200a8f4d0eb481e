import textwrap

import pytest

from ftpads.config import load_config, parse_config
from ftpads.core import ConfigError, FaultKind
from ftpads.faults import ByzantineMode, EventKind

BASE = """\
[run]
lps = 5
entities = 20
steps = 100
seed = 3
failure_model = "byzantine"
tolerated_faults = 2

[migration]
enabled = true
window_steps = 8

[model]
degree = 4
p = 0.5

[[fault]]
lp = 1
step = 10
kind = "byzantine"
behavior = "silent"

[[fault]]
lp = 3
step = 20
"""


def test_parse_full():
    cfg = parse_config(BASE)
    assert (cfg.sim.n_lps, cfg.sim.n_entities, cfg.sim.total_steps, cfg.sim.master_seed) == (5, 20, 100, 3)
    assert cfg.sim.model.kind is FaultKind.BYZANTINE and cfg.sim.m == 5
    assert cfg.sim.migration.enabled and cfg.sim.migration.window_steps == 8
    assert cfg.model.degree == 4 and cfg.model.p == 0.5
    kinds = [(e.lp, e.kind) for e in cfg.schedule.events]
    assert kinds == [(1, EventKind.BYZANTINE), (3, EventKind.CRASH)]
    assert cfg.schedule.events[0].behavior.mode is ByzantineMode.SILENT


def test_defaults():
    cfg = parse_config("[run]\nlps = 3\nentities = 4\nsteps = 5\n")
    assert cfg.sim.model.kind is FaultKind.CRASH and cfg.sim.m == 1
    assert not cfg.sim.migration.enabled and len(cfg.schedule) == 0


def _err(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(textwrap.dedent(text), "x.toml")
    return str(exc.value)


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\ncolour = 1\n", 5, "unknown key 'colour'"),
        ("[run]\nlps = 3\nentities = 4\nsteps = \"5\"\n", 4, "'steps' must be int"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\n[extra]\na = 1\n", 5, "unknown section"),
        ("[run]\nlps = 3\nentities = 4\n", 1, "missing required key 'steps'"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\nenforce_constraint = 1\n", 5, "must be bool"),
        ("[run]\nlps = 2\nentities = 4\nsteps = 5\ntolerated_faults = 2\n", 1, "PlacementError"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\nfailure_model = \"weird\"\n", 5, "failure_model"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\n[[fault]]\nlp = 7\nstep = 1\n", 5, "LP 7"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\n[[fault]]\nlp = 0\nstep = 1\nbehavior = \"silent\"\n", 8, "byzantine"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\n[migration]\nthreshold = 2.0\n", 5, "threshold"),
        ("[run]\nlps = 3\nentities = 4\nsteps = 5\ntolerated_faults = -1\n", 5, "tolerated_faults"),
    ],
)
def test_line_precise_errors(text, line, fragment):
    msg = _err(text)
    assert msg.startswith(f"x.toml:{line}:"), msg
    assert fragment in msg


def test_syntax_error():
    assert "x.toml" in _err("[run\nlps = 3\n")


def test_second_fault_table_line():
    text = "[run]\nlps = 3\nentities = 4\nsteps = 5\n[[fault]]\nlp = 0\nstep = 1\n[[fault]]\nlp = 1\nstep = 2\nkind = \"nope\"\n"
    assert _err(text).startswith("x.toml:11:")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_overrides():
    cfg = parse_config(BASE).with_seed(99).with_workers(4)
    assert cfg.sim.master_seed == 99 and cfg.sim.workers == 4
