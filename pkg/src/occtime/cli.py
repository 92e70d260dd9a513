"""Command line entry point: ``occtime run <config>``, ``occtime list``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import funcspace as fs
from . import spectral as sp
from .config import (ConfigError, ExperimentConfig, build_function, build_init, build_process,
                     list_registry, load)
from .core import DomainError, make_grid
from .processes import JumpProcess, OuProcess, ReflectedBrownianMotion

CSV_HEADER = ("delta_or_T", "rms", "stderr", "bound_value", "ratio")
EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _window(expect, key, value, flags):
    if key in expect:
        lo, hi = expect[key]
        flags[f"{key}_in_window"] = bool(lo <= value <= hi)


def _spectral_model(process, f, K=256):
    if isinstance(process, OuProcess):
        return sp.hermite_decompose(f, K)
    if isinstance(process, JumpProcess):
        return sp.jump_decompose(process, f)
    return None


def _norm(check, process, f, s):
    value = check.get("norm", 1.0)
    if value == "ds":
        model = _spectral_model(process, f, int(check.get("K", 256)))
        if model is None:
            raise ConfigError("check.norm: 'ds' needs an OU or jump process")
        return sp.ds_norm(model, s).value
    return float(value)


def _sweep_rows(fit, report=None):
    rows = []
    for i, (d, rms, se) in enumerate(fit.points):
        if report is None:
            rows.append((d, rms, se, math.nan, math.nan))
        else:
            bound = report.bound_values[i]
            rows.append((d, rms, se, bound, rms / bound if bound > 0 else math.nan))
    return rows


def _fit_summary(fit):
    return {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
            "excluded": list(fit.excluded), "degenerate": fit.degenerate}


def _grid_ns(grid):
    return [int(n) for n in grid.get("ns", [8, 16, 32, 64, 128])]


def run_rate(cfg, process, f, init):
    g = cfg.grid
    T = float(g.get("T", 1.0))
    fit = ex.rate_sweep(process, f, T, _grid_ns(g), cfg.reps, cfg.master_seed, init,
                        int(g.get("refinement", ex.DEFAULT_REFINEMENT)), g.get("truth", "auto"),
                        g.get("rule", "trapezoid"), cfg.workers, cfg.digest)
    summary, flags = _fit_summary(fit), {}
    report = None
    if cfg.check:
        s = float(cfg.check.get("s", 1.0))
        norm = _norm(cfg.check, process, f, s)
        report = ex.bound_check(fit, s, norm, T, float(cfg.check.get("C", ex.BOUND_CONSTANT)),
                                lower_order_norm=float(cfg.check.get("lower_order_norm", 0.0)))
        summary.update(norm_value=norm, s=s, max_ratio=report.max_ratio, C=report.C)
        flags["bound_ok"] = report.passed
    _window(cfg.expect, "slope", fit.slope, flags)
    if "r_squared" in cfg.expect:
        flags["r_squared_ok"] = bool(fit.r_squared >= float(cfg.expect["r_squared"]))
    if fit.degenerate:
        flags["fit_ok"] = False
    return _sweep_rows(fit, report), summary, flags


def run_ergodic(cfg, process, f, init):
    g = cfg.grid
    Ts = [float(t) for t in g.get("Ts", [25, 50, 100, 200, 400])]
    delta = float(g.get("delta", 0.25))
    fit = ex.ergodic_sweep(process, f, Ts, delta, cfg.reps, cfg.master_seed, init,
                           workers=cfg.workers, digest=cfg.digest)
    model = _spectral_model(process, f) if init is None else None
    rows = []
    for T, rms, se in fit.points:
        pred = (math.sqrt(sp.exact_ergodic_sq_error(model, make_grid(T, round(T / delta))))
                if model is not None else math.nan)
        rows.append((T, rms, se, pred, rms / pred if pred > 0 else math.nan))
    summary, flags = _fit_summary(fit), {}
    if fit.degenerate:
        flags["fit_ok"] = False
    _window(cfg.expect, "slope", fit.slope, flags)
    return rows, summary, flags


def run_oracle(cfg, process, f, init):
    g = cfg.grid
    T = float(g.get("T", 1.0))
    model = _spectral_model(process, f, int(g.get("K", 64)))
    if model is None:
        raise ConfigError("process.kind: oracle runs need an OU or jump process")
    rows, zs = [], []
    extra = {}
    for n in _grid_ns(g):
        grid = make_grid(T, n)
        est = ex.mc_l2_error(process, f, grid, cfg.reps, cfg.master_seed, init,
                             int(g.get("refinement", ex.DEFAULT_REFINEMENT)),
                             digest=cfg.digest, workers=cfg.workers)
        exact = sp.exact_sq_error(model, grid)
        z = (est.mean_sq - exact) / est.stderr if est.stderr > 0 else 0.0
        zs.append(z)
        rows.append((grid.delta, est.rms, est.rms_stderr, math.sqrt(exact),
                     est.rms / math.sqrt(exact) if exact > 0 else math.nan))
        if isinstance(process, JumpProcess) and n <= 1024:
            extra.setdefault("bruteforce", []).append(
                sp.exact_sq_error_jump_bruteforce(process, f, grid))
    flags = {"within_3_stderr": bool(all(abs(z) <= 3 for z in zs))}
    return rows, {"z_scores": zs, **extra}, flags


def run_psi(cfg, process, f, init):
    samples = int(cfg.check.get("samples", 10_000))
    rep = ex.psi_check(samples, cfg.master_seed, int(cfg.check.get("quad_points", 24)))
    n = int(cfg.grid.get("n", 64))
    delta = float(cfg.grid.get("T", 1.0)) / n
    s = float(cfg.check.get("s", 1.0))
    rows = []
    for lam in -np.logspace(-3, 4, 36):
        val = abs(sp.psi_diag(lam, n, delta))
        bound = 4 * n * delta ** (2 + s) * abs(lam) ** s
        rows.append((lam, val, 0.0, bound, val / bound))
    grid_viol = sum(r[4] > 1 for r in rows)
    summary = {"samples": rep.samples, "exp_violations": rep.exp_violations,
               "psi_violations": rep.psi_violations + grid_viol,
               "max_exp_ratio": rep.max_exp_ratio, "max_psi_ratio": rep.max_psi_ratio,
               "quadrature_max_rel": rep.quadrature_max_rel}
    flags = {"no_violations": rep.exp_violations == 0 and rep.psi_violations + grid_viol == 0,
             "quadrature_ok": rep.quadrature_max_rel <= float(cfg.expect.get("quadrature", 1e-8))}
    return rows, summary, flags


def run_norms(cfg, process, f, init):
    c = cfg.check
    s_values = [float(s) for s in c.get("s_values", [0.0, 0.25, 0.5, 0.75, 1.0])]
    box = tuple(c.get("box", (-32.0, 32.0)))
    summary = {"mu_norm": fs.mu_norm(f),
               "holder_norm": fs.holder_norm(f, tuple(c.get("holder_domain", (-1.0, 1.0))),
                                             alpha=float(c.get("alpha", 1.0))),
               "weighted_h1_norm": fs.weighted_h1_norm(f)}
    model = sp.hermite_decompose(f, int(c.get("K", 256)))
    rows, support_flag = [], False
    for s in s_values:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", fs.SupportWarning)
            sob = fs.sobolev_norm(f, s, box)
        support_flag |= any(issubclass(w.category, fs.SupportWarning) for w in caught)
        ds = sp.ds_norm(model, s).value
        rows.append((s, ds, 0.0, sob, ds / sob if sob > 0 else math.nan))
    summary["sobolev_support_warning"] = support_flag
    return rows, summary, {}


def run_nonstationary(cfg, process, f, init):
    g = cfg.grid
    T = float(g.get("T", 1.0))
    ns = _grid_ns(g)
    refinement = int(g.get("refinement", ex.DEFAULT_REFINEMENT))
    if "Ms" in g:
        if not isinstance(process, ReflectedBrownianMotion):
            raise ConfigError("grid.Ms: barrier sweeps need process kind reflected-bm")
        rep = ex.folding_stability(g["Ms"], f, T, ns, cfg.reps, cfg.master_seed, init,
                                   refinement)
        rows = [(T / n, last, 0.0, prev, last / prev if prev > 0 else math.nan)
                for n, prev, last in zip(ns, rep.rms[-2], rep.rms[-1])]
        limit = float(cfg.expect.get("max_rel_change", 0.05))
        return rows, {"Ms": rep.Ms, "rms": rep.rms, "max_rel_change": rep.max_rel_change}, \
            {"stable_in_M": rep.max_rel_change < limit}
    if init is None:
        raise ConfigError("init: nonstationary runs need an initial law")
    s = float(cfg.check.get("s", 1.0))
    norm = _norm(cfg.check, process, f, s) if cfg.check else 1.0
    fit, report, sup = ex.nonstationary_check(
        process, f, init, T, ns, cfg.reps, cfg.master_seed, s, norm,
        float(cfg.check.get("C", ex.BOUND_CONSTANT)),
        float(cfg.check.get("lower_order_norm", 0.0)), refinement=refinement,
        workers=cfg.workers, digest=cfg.digest)
    summary = {**_fit_summary(fit), "density_ratio_sup": sup, "max_ratio": report.max_ratio}
    flags = {"bound_ok": report.passed}
    _window(cfg.expect, "slope", fit.slope, flags)
    return _sweep_rows(fit, report), summary, flags


RUNNERS = {"ergodic": run_ergodic, "nonstationary": run_nonstationary, "norms": run_norms,
           "oracle": run_oracle, "psi-check": run_psi, "rate": run_rate}


def execute(cfg: ExperimentConfig):
    """Run ``cfg``; returns ``(rows, summary)`` with ``summary['passed']``."""
    start = time.perf_counter()
    f = build_function(cfg.function) if cfg.kind != "psi-check" else None
    process = build_process(cfg.process) if cfg.kind not in ("psi-check", "norms") else None
    init = build_init(cfg.init)
    rows, summary, flags = RUNNERS[cfg.kind](cfg, process, f, init)
    summary = {"kind": cfg.kind, **summary, "flags": flags,
               "passed": bool(all(flags.values())), "config_digest": cfg.digest,
               "master_seed": cfg.master_seed, "reps": cfg.reps, "version": __version__,
               "wall_time": time.perf_counter() - start}
    return rows, summary


def write_outputs(rows, summary, out_dir, stem):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    json_path.write_text(json.dumps(_jsonable(summary), indent=2, allow_nan=False) + "\n")
    return csv_path, json_path


def _cmd_run(args) -> int:
    try:
        cfg = load(args.config)
        changes = {}
        if args.seed is not None:
            changes["master_seed"] = args.seed
        if args.reps is not None:
            changes["reps"] = args.reps
        if args.out is not None:
            changes["output"] = {**cfg.output, "dir": args.out}
        if changes:
            cfg = cfg.replace(**changes)
        rows, summary = execute(cfg)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stem = cfg.output.get("stem") or cfg.kind
    csv_path, json_path = write_outputs(rows, summary, cfg.output.get("dir", "results"), stem)
    status = "passed" if summary["passed"] else "FAILED"
    print(f"{cfg.kind}: {status}  digest={cfg.digest}  csv={csv_path}  json={json_path}")
    for name, ok in summary["flags"].items():
        print(f"  {name}: {'ok' if ok else 'fail'}")
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occtime",
                                description="Riemann-sum error experiments for occupation times")
    p.add_argument("--version", action="version", version=f"occtime {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--reps", type=int)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_run)
    ls = sub.add_parser("list", help="list registered processes and functions")
    ls.set_defaults(func=lambda a: print(list_registry()) or EXIT_OK)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
