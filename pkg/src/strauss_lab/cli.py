"""Command line entry point: exponents, sweep, bounds and verify."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .exponents import (Criticality, ProblemSpec, criticality, gamma, lifespan_bounds,
                        lifespan_exponent, q_exponent, strauss_exponent, weight_regime)

log = logging.getLogger("strauss_lab")

SWEEP_SCHEMA = "strauss-lab-sweep/1"
SWEEP_COLUMNS = ["eps", "T_lo", "T_hi", "log_T_hi", "verdict"]
SEQ_SCHEMA = "strauss-lab-sequences/1"


def _num(x: float) -> str:
    return repr(float(x))


# ------------------------------------------------------------------ exponents

def exponent_table(n: int, p: float) -> dict:
    p0 = strauss_exponent(n)
    crit = criticality(p, n)
    row = {"n": n, "p": p, "gamma": gamma(p, n), "p0": p0, "q": q_exponent(p, n),
           "weight_regime": weight_regime(p, n).regime.value, "criticality": crit.value}
    if crit is Criticality.SUPERCRITICAL:
        row["lifespan"] = "global existence regime: T(eps) = infinity for small eps"
        row["exponent"] = None
    else:
        lower, _ = lifespan_bounds(ProblemSpec(n, p, 0.1)) if n >= 4 else (None, None)
        if crit is Criticality.CRITICAL:
            row["exponent"] = -p * (p - 1)
            row["lifespan"] = f"log T ~ eps^({row['exponent']:.6g})"
        else:
            row["exponent"] = lifespan_exponent(p, n)
            row["lifespan"] = f"T ~ eps^({row['exponent']:.6g})"
        if lower is not None:
            row["form"] = lower.describe()
    return row


def cmd_exponents(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        n, p = cfg.spec.n, cfg.spec.p
    else:
        if args.n is None or args.p is None:
            raise ConfigError("exponents needs --n and --p (or --config)")
        n, p = args.n, args.p
    if n < 2 or not p > 1:
        raise ConfigError("need n >= 2 and p > 1")
    row = exponent_table(n, p)
    for key, val in row.items():
        print(f"{key:>14}: {val}")
    return 0


# ---------------------------------------------------------------------- sweep

@dataclass
class SweepRecord:
    eps: float
    T_lo: float
    T_hi: float
    log_T_hi: float
    verdict: str
    trail: list = field(default_factory=list)


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float
    points: int
    trimmed: bool

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "points": self.points, "trimmed": self.trimmed}


@dataclass
class ExperimentResult:
    spec: dict
    records: list
    fit: Fit | None
    theory: float | None
    kind: str
    elapsed: float
    note: str = ""


def fit_loglog(x, y, trim: bool = False) -> Fit | None:
    """Least squares y = slope log x + b over finite y; None with fewer than 4 points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y)
    x, y = x[keep], y[keep]
    order = np.argsort(x)
    x, y = x[order], y[order]
    if trim and x.size >= 6:
        x, y = x[1:-1], y[1:-1]
    if x.size < 4:
        return None
    lx = np.log(x)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * lx + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return Fit(float(slope), float(icpt), min(max(r2, 0.0), 1.0), int(x.size), trim)


def _sweep_one(args) -> SweepRecord:
    from .picard import estimate_lifespan
    from .propagator import profile_from_spec

    cfg, eps = args
    spec = cfg.spec.with_eps(eps)
    data = profile_from_spec(spec)
    est = estimate_lifespan(spec, data, [cfg.t_max], cfg.lattice, max_iter=cfg.max_iter,
                            tol=cfg.tol, cap=cfg.divergence_cap)
    verdict = est.trail[-1][1]
    log_T = math.log(est.T) if math.isfinite(est.T) and est.T > 0 else math.inf
    return SweepRecord(eps, est.T_last_converged, est.T_first_diverged, log_T, verdict, est.trail)


def _critical_records(cfg: ExperimentConfig) -> list[SweepRecord]:
    from .blowup_bounds import base_constants, blowup_threshold

    base = base_constants(cfg.spec)
    out = []
    for eps in cfg.eps_values:
        th = blowup_threshold(cfg.spec.with_eps(eps), None, base)
        out.append(SweepRecord(eps, math.nan, th.T_upper, th.log_T_upper, "not reachable"))
    return out


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    start = time.perf_counter()
    spec = cfg.spec
    crit = criticality(spec.p, spec.n)
    workers = cfg.workers if workers is None else workers
    if crit is Criticality.CRITICAL:
        records = _critical_records(cfg)
        xs = [r.eps for r in records]
        ys = [math.log(r.log_T_hi) for r in records]
        kind, theory = "log log T_upper vs log eps (analytic threshold)", -spec.p * (spec.p - 1)
        note = "critical case: exp(c eps^-p(p-1)) horizons are not simulated"
    else:
        jobs = [(cfg, e) for e in cfg.eps_values]
        if workers > 1 and len(jobs) > 1:
            _sweep_one((cfg, cfg.eps_values[0]))  # warm the operator cache once
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_sweep_one, jobs))
        else:
            records = [_sweep_one(j) for j in jobs]
        xs = [r.eps for r in records]
        ys = [r.log_T_hi for r in records]
        kind = "log T vs log eps"
        theory = None if crit is Criticality.SUPERCRITICAL else lifespan_exponent(spec.p, spec.n)
        note = "global existence regime" if theory is None else ""
    records.sort(key=lambda r: r.eps)
    fit = fit_loglog(xs, ys, cfg.trim)
    return ExperimentResult(cfg.echo(), records, fit, theory, kind,
                            time.perf_counter() - start, note)


def sweep_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SWEEP_SCHEMA}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SWEEP_COLUMNS)
    for r in result.records:
        wr.writerow([_num(r.eps), _num(r.T_lo), _num(r.T_hi), _num(r.log_T_hi), r.verdict])
    return buf.getvalue()


def fit_json(result: ExperimentResult) -> str:
    fit = result.fit.as_dict() if result.fit else None
    rel = None
    if result.fit and result.theory:
        rel = abs(result.fit.slope - result.theory) / abs(result.theory)
    body = {"schema": SWEEP_SCHEMA, "kind": result.kind, "fit": fit, "theory": result.theory,
            "relative_error": rel, "note": result.note, "spec": result.spec,
            "records": [{"eps": r.eps, "T_lo": r.T_lo, "T_hi": r.T_hi, "verdict": r.verdict,
                         "trail": r.trail} for r in result.records]}
    return json.dumps(body, indent=2, allow_nan=True) + "\n"


def _prepare_out(cfg: ExperimentConfig, out: str | None) -> Path:
    path = Path(out) if out else cfg.out_dir
    path.mkdir(parents=True, exist_ok=True)
    return path


def _attach_log(out: Path) -> logging.Handler:
    h = logging.FileHandler(out / "run.log", mode="w")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    log.setLevel(logging.INFO)
    return h


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if criticality(cfg.spec.p, cfg.spec.n) is not Criticality.CRITICAL:
        cfg.require_lattice()
    out = _prepare_out(cfg, args.out)
    handler = _attach_log(out)
    try:
        log.info("sweep n=%d p=%g eps=%s", cfg.spec.n, cfg.spec.p, cfg.eps_values)
        result = run_sweep(cfg, args.workers)
        if "csv" in cfg.formats:
            (out / "sweep.csv").write_text(sweep_csv(result))
        if "json" in cfg.formats:
            (out / "fit.json").write_text(fit_json(result))
        log.info("elapsed %.2f s", result.elapsed)
    finally:
        log.removeHandler(handler)
        handler.close()
    for r in result.records:
        print(f"eps={r.eps:<10.6g} T_lo={r.T_lo:<12.6g} T_hi={r.T_hi:<12.6g} {r.verdict}")
    if result.fit:
        print(f"slope {result.fit.slope:.4f} (theory {result.theory}), r2 {result.fit.r2:.4f}")
    else:
        print("fit skipped: fewer than 4 finite lifespan estimates"
              + (f" ({result.note})" if result.note else ""))
    return 0


# --------------------------------------------------------------------- bounds

def run_bounds(cfg: ExperimentConfig):
    from .blowup_bounds import base_constants, blowup_threshold, build_sequences

    spec = cfg.spec
    base = base_constants(spec, cfg.case)
    thresholds, seqs = [], []
    for eps in cfg.eps_values:
        s = spec.with_eps(eps)
        thresholds.append(blowup_threshold(s, cfg.case, base))
        seqs.append(build_sequences(s, cfg.case, cfg.j_max, base))
    x = [t.eps for t in thresholds]
    if thresholds[0].case.critical:
        y = [t.log_log_xi0 for t in thresholds]
        theory = -spec.p * (spec.p - 1)
    else:
        y = [t.log_xi0 for t in thresholds]
        theory = lifespan_exponent(spec.p, spec.n)
    slope = None
    if len(x) >= 2:
        slope = float(np.polyfit(np.log(x), y, 1)[0])
    return thresholds, seqs, slope, theory


def sequences_csv(seqs) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SEQ_SCHEMA}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eps", "j", "a_j", "b_j", "l_j", "log_C_j"])
    for s in seqs:
        for row in s.rows():
            wr.writerow([_num(s.eps), row["j"], _num(row["a_j"]),
                         "" if row["b_j"] == "" else _num(row["b_j"]),
                         "" if row["l_j"] == "" else _num(row["l_j"]), _num(row["log_C_j"])])
    return buf.getvalue()


def cmd_bounds(args) -> int:
    from .blowup_bounds import thresholds_json

    cfg = _load(args)
    thresholds, seqs, slope, theory = run_bounds(cfg)
    out = _prepare_out(cfg, args.out)
    if "csv" in cfg.formats:
        (out / "sequences.csv").write_text(sequences_csv(seqs))
    if "json" in cfg.formats:
        (out / "thresholds.json").write_text(thresholds_json(thresholds) + "\n")
    case = thresholds[0].case
    print(f"case {case.value}, S = {thresholds[0].S:.6g}")
    for t in thresholds:
        print(f"eps={t.eps:<10.6g} log xi0={t.log_xi0:<14.6g} log T_upper={t.log_T_upper:.6g}")
    s0 = seqs[0]
    if s0.l is not None:
        print("l_j:", ", ".join(f"{float(v):.6f}" for v in s0.l[:6]), "...")
    if slope is not None:
        label = "log log xi0" if case.critical else "log xi0"
        print(f"{label} slope {slope:.9f} (theory {theory:.9f})")
    return 0


# --------------------------------------------------------------------- verify

SUITES = ("huygens", "propagator-oracle", "duhamel-oracle", "kernel-bounds", "sequences",
          "basic-estimate")


def _verify_huygens(n: int) -> dict:
    from .propagator import LinearSolution, bump_profile, check_huygens

    if n % 2 == 0:
        return {"status": "not applicable (even n)"}
    sol = LinearSolution(bump_profile(1.0, 0.5), n)
    worst = 0.0
    ok = True
    for t in (2.0, 4.0, 8.0):
        r = np.linspace(0.01, t + 3.0, 600)
        rep = check_huygens(sol, np.column_stack([r, np.full_like(r, t)]))
        ok &= rep.ok
        worst = max(worst, rep.ratio)
    return {"status": "pass" if ok else "fail", "worst_ratio": worst}


def _verify_propagator(n: int) -> dict:
    from .oracles import dalembert_n3, fd_at
    from .propagator import bump_profile, u0

    data = bump_profile(1.0, 0.5)
    rng = np.random.default_rng(0)
    t = rng.uniform(0.1, 6.0, 100)
    r = rng.uniform(0.05, 1.0, 100) * (t + 1.0)
    exact = dalembert_n3(data.g_pieces, r, t)
    rel3 = float(np.max(np.abs(u0(data, r, t, 3) - exact)) / np.max(np.abs(exact)))
    out = {"n3_rel_error": rel3}
    ok = rel3 < 1e-6
    if n != 3:
        rq = np.linspace(0.5, 4.5, 9)
        ref = u0(data, rq, 3.0, n)
        errs = [float(np.max(np.abs(fd_at(data.g, n, 3.0, rq, h) - ref)) / np.max(np.abs(ref)))
                for h in (0.02, 0.01)]
        out[f"n{n}_fd_rel_errors"] = errs
        ok &= errs[-1] < 0.02 and errs[-1] < errs[0]
    out["status"] = "pass" if ok else "fail"
    return out


def _verify_duhamel(n: int) -> dict:
    from .duhamel import L_point
    from .oracles import mc_L

    k = 1.0
    psi = lambda lam, tau: np.where(lam <= tau + k, np.exp(-lam * lam - 0.3 * tau) * (1 + tau), 0.0)
    rng = np.random.default_rng(1)
    z = []
    for r, t in ((0.3, 1.0), (1.2, 2.0), (2.0, 1.5)):
        val = L_point(psi, r, t, n, q=24, k=k)
        mean, se = mc_L(psi, r, t, n, 200_000, rng)
        z.append(abs(val - mean) / se)
    return {"status": "pass" if max(z) < 3 else "fail", "max_z": float(max(z))}


def _verify_kernel(n: int) -> dict:
    from .special_functions import kernel_h_bounds_check

    if n < 3:
        return {"status": "not applicable (n < 3)"}
    rep = kernel_h_bounds_check(n=n, count=5000)
    ok = rep.finite and rep.min_ratio_constant <= 1e-12
    return {"status": "pass" if ok else "fail", "constants": list(rep.constants)}


def _verify_sequences(n: int) -> dict:
    from fractions import Fraction

    from .blowup_bounds import BlowupCase, sequence_table

    bad = []
    for case in BlowupCase:
        dim = (5 if case.odd else 4)
        tab = sequence_table(case, Fraction(2), dim, 25)
        if not tab.consistent:
            bad.append(case.value)
        if tab.l_rec is not None:
            # l_1 = 1/2 exactly in the even case, so the lower end is closed there
            lo, hi = (2, 3) if case.odd else (Fraction(1, 2), 1)
            inside = [(lo < v if case.odd else lo <= v) and v < hi for v in tab.l_rec]
            if not all(inside) or any(
                    b <= a for a, b in zip(tab.l_rec, tab.l_rec[1:])):
                bad.append(case.value + " levels")
    return {"status": "pass" if not bad else "fail", "mismatches": bad}


def _verify_basic(n: int) -> dict:
    from .duhamel import basic_estimate_check, estimate_samples

    p = strauss_exponent(n) if n % 2 else 1.5
    spec = ProblemSpec(n, p, 0.1)
    pq = p * q_exponent(p, n)
    pts = estimate_samples(10.0, 1.0, count=20)
    coarse = basic_estimate_check(spec, 0.0, -pq, 0.0, 10.0, samples=pts, q=12)
    fine = basic_estimate_check(spec, 0.0, -pq, 0.0, 10.0, samples=pts, q=24)
    change = abs(fine.constant - coarse.constant) / fine.constant
    ok = coarse.finite and fine.finite and change < 0.1
    return {"status": "pass" if ok else "fail", "sup_ratio": fine.constant, "change": change}


def run_verify(suite: str, n: int | None = None) -> dict:
    runners = {"huygens": (_verify_huygens, 5), "propagator-oracle": (_verify_propagator, 5),
               "duhamel-oracle": (_verify_duhamel, 4), "kernel-bounds": (_verify_kernel, 5),
               "sequences": (_verify_sequences, 5), "basic-estimate": (_verify_basic, 5)}
    if suite not in runners:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    fn, default_n = runners[suite]
    n = default_n if n is None else n
    res = fn(n)
    return {"suite": suite, "n": n, **res}


def cmd_verify(args) -> int:
    n = args.n
    if n is None and args.config:
        n = load_config(args.config).spec.n
    res = run_verify(args.suite, n)
    print(json.dumps(res, sort_keys=True))
    return 1 if res["status"] == "fail" else 0


# ----------------------------------------------------------------------- main

def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strauss-lab",
                                 description="Radial semilinear wave lifespan laboratory")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--workers", type=int, help="parallel sweep workers")
    common.add_argument("--seed", type=int, help="seed recorded with the run")
    sub = ap.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("exponents", parents=[common], help="exponent table for (n, p)")
    ex.add_argument("--n", type=int)
    ex.add_argument("--p", type=float)
    sub.add_parser("sweep", parents=[common], help="lifespan sweep over eps")
    sub.add_parser("bounds", parents=[common], help="blow-up sequences and thresholds")
    ve = sub.add_parser("verify", parents=[common], help="run a pinned property suite")
    ve.add_argument("suite", choices=SUITES)
    ve.add_argument("--n", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"exponents": cmd_exponents, "sweep": cmd_sweep, "bounds": cmd_bounds,
                "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"strauss-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
