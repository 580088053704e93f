from pathlib import Path

import pytest

from strauss_lab.config import ConfigError, eps_grid, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[problem]
n = 5
p = 1.5
eps_list = 0.1, 0.2
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.spec.n == 5 and cfg.eps_values == [0.1, 0.2]
    assert cfg.lattice.kind == "graded" and cfg.max_iter == 400
    assert cfg.formats == {"csv", "json"} and cfg.lattice_problem is None


def test_eps_geom():
    cfg = parse_config("[problem]\nn = 4\np = 1.8\neps_geom = 30, 3, 6\nk0 = 0.1\n")
    assert len(cfg.eps_values) == 6
    assert cfg.eps_values[0] == pytest.approx(30) and cfg.eps_values[-1] == pytest.approx(3)


@pytest.mark.parametrize("text,match", [
    ("[problem]\nn = 5\np = 1.5\n", "empty eps"),
    ("[problem]\nn = 5\np = 1.5\neps_list =\n", "empty eps"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\neps_geom = 1, 2, 3\n", "either"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1, -1\n", "positive"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\ncolour = red\n", "unknown keys"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\n[extras]\nx = 1\n", "unknown section"),
    ("[problem]\np = 1.5\neps_list = 0.1\n", "needs n"),
    ("[problem]\nn = 5\np = 0.5\neps_list = 0.1\n", "p must exceed"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\n[lattice]\nkind = hex\n", "kind"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\n[picard]\nmax_iter = 1\n", "max_iter"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\n[output]\nformats = xml\n", "formats"),
    ("[problem]\nn = 5\np = 1.5\neps_list = 0.1\n[sweep]\ntrim = maybe\n", "trim"),
    ("[problem]\nn = 5\np = 1.5\neps_list = a, b\n", "number list"),
    ("not an ini file", None),
])
def test_rejected(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_lattice_problem_deferred():
    cfg = parse_config(MINIMAL + "k0 = 0.5\n[lattice]\ndr = 0.125\n")
    assert "need >= 8" in cfg.lattice_problem
    with pytest.raises(ConfigError):
        cfg.require_lattice()


def test_graded_needs_commensurate_k():
    cfg = parse_config(MINIMAL + "[lattice]\ndr = 0.03\n")
    assert "multiple" in cfg.lattice_problem


def test_eps_grid_validation():
    with pytest.raises(ConfigError):
        eps_grid(1.0, 0.0, 3)


def test_out_dir_relative_to_file(tmp_path):
    f = tmp_path / "x.ini"
    f.write_text(MINIMAL + "[output]\ndir = res\n")
    assert load_config(f).out_dir == tmp_path / "res"
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.ini")


@pytest.mark.parametrize("name", ["acceptance_sweep.ini", "quick_sweep.ini"])
def test_shipped_sweeps_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.lattice_problem is None and cfg.eps_values


def test_bounds_config_needs_no_lattice():
    cfg = load_config(CONFIGS / "bounds_even_critical.ini")
    assert cfg.j_max == 40 and cfg.eps_values == [0.05, 0.1, 0.2, 0.4]


def test_echo_roundtrip():
    e = parse_config(MINIMAL).echo()
    assert e["n"] == 5 and e["eps"] == [0.1, 0.2] and e["lattice"]["kind"] == "graded"
