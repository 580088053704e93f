"""INI experiment configuration, validated before any computation starts.

Example::

    [problem]
    n = 4
    p = 1.8
    eps_geom = 30, 3, 6      ; start, stop, count
    k = 1.0
    k0 = 0.1

    [lattice]
    kind = graded
    dr = 0.0625
    ratio = 1.15
    t_max = 3000

    [picard]
    max_iter = 400

    [sweep]
    workers = 1
    seed = 0

    [output]
    dir = results
    formats = csv, json
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exponents import Nonlinearity, ProblemSpec
from .picard import LatticeSpec

SECTIONS = {
    "problem": {"n", "p", "eps_list", "eps_geom", "k", "k0", "k1", "nonlinearity", "a", "profile"},
    "lattice": {"kind", "dr", "ratio", "t_max", "q"},
    "picard": {"max_iter", "tol", "divergence_cap"},
    "sweep": {"workers", "seed", "trim"},
    "output": {"dir", "formats"},
    "bounds": {"case", "j_max"},
}
FORMATS = {"csv", "json"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    spec: ProblemSpec
    eps_values: list[float]
    lattice: LatticeSpec
    t_max: float
    max_iter: int = 400
    tol: float | None = None
    divergence_cap: float | None = None
    workers: int = 1
    seed: int = 0
    trim: bool = False
    out_dir: Path = Path("results")
    formats: set = field(default_factory=lambda: set(FORMATS))
    case: str | None = None
    j_max: int = 40
    lattice_problem: str | None = None

    def require_lattice(self) -> None:
        """Raise if the lattice is unusable; only simulations need one."""
        if self.lattice_problem:
            raise ConfigError(self.lattice_problem)

    def echo(self) -> dict:
        s = self.spec
        return {"n": s.n, "p": s.p, "k": s.k, "k0": s.k0, "k1": s.k1,
                "nonlinearity": s.nonlinearity.value, "A": s.A, "profile": s.profile,
                "eps": list(self.eps_values), "lattice": {"kind": self.lattice.kind,
                "dr": self.lattice.h, "ratio": self.lattice.ratio, "q": self.lattice.q,
                "t_max": self.t_max}, "max_iter": self.max_iter, "tol": self.tol,
                "divergence_cap": self.divergence_cap, "seed": self.seed}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _get(sec, key, conv, default=None):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from exc


def eps_grid(start: float, stop: float, count: int) -> list[float]:
    if count < 1 or not (start > 0 and stop > 0):
        raise ConfigError("eps_geom needs positive start, stop and count >= 1")
    return [float(x) for x in np.geomspace(start, stop, int(count))]


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - SECTIONS[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(extra))}")
    if "problem" not in cp:
        raise ConfigError("missing [problem] section")
    pr = cp["problem"]
    for key in ("n", "p"):
        if key not in pr:
            raise ConfigError(f"[problem] needs {key}")
    if "eps_list" in pr and "eps_geom" in pr:
        raise ConfigError("give either eps_list or eps_geom, not both")
    if "eps_list" in pr:
        eps = _floats(pr["eps_list"])
    elif "eps_geom" in pr:
        g = _floats(pr["eps_geom"])
        if len(g) != 3 or g[2] != int(g[2]):
            raise ConfigError("eps_geom must be 'start, stop, count'")
        eps = eps_grid(g[0], g[1], int(g[2]))
    else:
        eps = []
    if not eps:
        raise ConfigError("empty eps list")
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise ConfigError("eps values must be positive and finite")
    try:
        spec = ProblemSpec(
            n=_get(pr, "n", int), p=_get(pr, "p", float), eps=eps[0],
            k=_get(pr, "k", float, 1.0),
            nonlinearity=Nonlinearity(_get(pr, "nonlinearity", str, "abs")),
            A=_get(pr, "a", float, 1.0), k0=_get(pr, "k0", float), k1=_get(pr, "k1", float),
            profile=_get(pr, "profile", str, "bump"))
    except ValueError as exc:
        raise ConfigError(f"[problem] {exc}") from exc

    la = cp["lattice"] if "lattice" in cp else None
    lattice = LatticeSpec(kind=_get(la, "kind", str, "graded"), h=_get(la, "dr", float),
                          ratio=_get(la, "ratio", float, 1.15), q=_get(la, "q", int, 4))
    if lattice.kind not in ("graded", "uniform"):
        raise ConfigError(f"[lattice] kind must be graded or uniform, got {lattice.kind!r}")
    h = lattice.spacing(spec.k)
    if not h > 0 or not lattice.ratio >= 1:
        raise ConfigError("[lattice] needs dr > 0 and ratio >= 1")
    problem = None
    across = math.floor(spec.k / h + 1e-9) - math.ceil(spec.k0 / h - 1e-9) + 1
    if across < 8:
        problem = f"[lattice] dr = {h:g} leaves {across} nodes across [k0, k]; need >= 8"
    elif lattice.kind == "graded" and abs(round(spec.k / h) * h - spec.k) > 1e-9 * spec.k:
        problem = "[lattice] graded lattices need k to be a multiple of dr"
    t_max = _get(la, "t_max", float, 20.0 * spec.k)
    if not t_max > 0:
        raise ConfigError("[lattice] t_max must be positive")

    pc = cp["picard"] if "picard" in cp else None
    max_iter = _get(pc, "max_iter", int, 400)
    tol = _get(pc, "tol", float)
    cap = _get(pc, "divergence_cap", float)
    if max_iter < 2 or (tol is not None and not tol > 0) or (cap is not None and not cap > 0):
        raise ConfigError("[picard] needs max_iter >= 2 and positive tol / divergence_cap")

    sw = cp["sweep"] if "sweep" in cp else None
    workers = _get(sw, "workers", int, 1)
    if workers < 1:
        raise ConfigError("[sweep] workers must be >= 1")
    try:
        trim = sw.getboolean("trim", fallback=False) if sw is not None else False
    except ValueError as exc:
        raise ConfigError(f"[sweep] trim: {exc}") from exc

    ou = cp["output"] if "output" in cp else None
    out_dir = Path(_get(ou, "dir", str, "results"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    formats = {f.strip().lower() for f in _get(ou, "formats", str, "csv, json").split(",") if f.strip()}
    if not formats <= FORMATS:
        raise ConfigError(f"[output] unknown formats {sorted(formats - FORMATS)}")

    bo = cp["bounds"] if "bounds" in cp else None
    j_max = _get(bo, "j_max", int, 40)
    if j_max < 2:
        raise ConfigError("[bounds] j_max must be >= 2")
    return ExperimentConfig(spec, eps, lattice, t_max, max_iter, tol, cap, workers,
                            _get(sw, "seed", int, 0), trim, out_dir, formats,
                            _get(bo, "case", str), j_max, problem)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)
