"""Command-line entry point: ``kslog region|simulate|sweep|picard|verify``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import ConfigError, RunConfig, key_help, load_config
from .grid import Field, Grid, write_csv, write_snapshot
from .params import (
    DomainError,
    EmptyIntervalError,
    ModelParams,
    RegionLabel,
    admissible_p_interval,
    bootstrap_gap,
    bootstrap_sequence,
    classify_region,
    f_indicator,
    gradv_q_upper,
    thresholds,
)
from .stepper import Termination, simulate

OUTPUT_ENV = "KSLOG_OUTPUT_DIR"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CODES = {
    Termination.COMPLETED: 0,
    Termination.BLOWUP: 2,
    Termination.DT_UNDERFLOW: 3,
}


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; code 2 is reserved for detected blow-up
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else f"{x:.6g}"


# ----------------------------------------------------------------- region


def cmd_region(args) -> int:
    params = ModelParams(chi=args.chi, k=args.k, dim=args.dim)
    N = params.dim
    th = thresholds(N, params.k)
    verdict = classify_region(params)
    print(f"chi = {params.chi:g}, k = {params.k:g}, N = {N}")
    print(f"k1 = {th.k1:.12g}, k2 = {th.k2:.12g}")
    print(f"chi1(k) = {th.chi1:.12g}, chi2(k) = {th.chi2:.12g}")
    print(f"f(N/2) = {f_indicator(N / 2, params.chi, params.k):.6g}, "
          f"f(N) = {f_indicator(N, params.chi, params.k):.6g}")
    print(f"in I+(N/2): {verdict.in_iplus_half_n}, in I+(N): {verdict.in_iplus_n}")
    print(f"theorem applies: {verdict.theorem_applies}")
    print(f"region: {verdict.label.value}")
    try:
        lo, hi = admissible_p_interval(params)
        print(f"admissible p interval: ({_fmt(lo)}, {_fmt(hi)})")
    except EmptyIntervalError:
        print("admissible p interval: empty")
        return EXIT_OK
    print(f"grad v L^q bound holds for q < {_fmt(gradv_q_upper(params))}")
    if verdict.label is RegionLabel.BORDER:
        upper = 1.0 / bootstrap_gap(params)
        mu1 = args.mu1 if args.mu1 is not None else 0.5 * (N / 2 + upper)
        seq = bootstrap_sequence(mu1, params)
        print(f"bootstrap (mu1 = {mu1:g}): " + ", ".join(_fmt(m) for m in seq))
    return EXIT_OK


# --------------------------------------------------------------- config io


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        cfg.set(dotted.strip(), value)
    for flag, dotted in FLAG_KEYS:
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(dotted, str(value))
    return cfg


def _output_dir(args, cfg: RunConfig) -> Path:
    if getattr(args, "output", None):
        out = Path(args.output)
    elif os.environ.get(OUTPUT_ENV):
        out = Path(os.environ[OUTPUT_ENV])
    else:
        out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_echo(params: ModelParams, time_scale: float) -> dict:
    return {"chi": params.chi, "k": params.k, "alpha": params.alpha, "beta": params.beta,
            "c": params.c, "dim": params.dim, "time_scale": time_scale}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


# --------------------------------------------------------------- simulate


def _write_field(f: Field, path: Path, fmt: str) -> None:
    if fmt == "csv":
        write_csv(f, path.with_suffix(".csv"))
    else:
        write_snapshot(f, path.with_suffix(".bin"))


def cmd_simulate(args) -> int:
    cfg = _load(args)
    params, grid, stepper, monitors, (u0, v0) = cfg.validate()
    _, time_scale = cfg.model_params()
    out = _output_dir(args, cfg)
    mode = cfg["output.snapshots"]
    fmt = cfg["output.format"]
    snap_dir = out / "snapshots"
    if mode != "none":
        snap_dir.mkdir(exist_ok=True)
    counter = [0]

    def hook(ens):
        if mode == "all":
            i = counter[0]
            _write_field(Field(grid, ens.us[0]), snap_dir / f"u_{i:05d}", fmt)
            _write_field(Field(grid, ens.vs[0]), snap_dir / f"v_{i:05d}", fmt)
            counter[0] += 1
        if not args.quiet:
            print(f"t = {ens.t:.6g}", file=sys.stderr, flush=True)

    res = simulate(u0, v0, params, stepper, monitors, progress=hook)
    diag.write_diagnostics_csv(res.series, monitors, out / "diagnostics.csv")
    if mode == "final":
        _write_field(res.final_state.u, snap_dir / "u_final", fmt)
        _write_field(res.final_state.v, snap_dir / "v_final", fmt)
    verdict = classify_region(params)
    bounds = {}
    for p in monitors.ps:
        if p > 1:
            rep = diag.check_yp_bound(diag.yp_series(res.series, p), params.alpha, p)
            bounds[_fmt(p)] = {"max_ratio": rep.max_ratio, "passed": rep.passed}
    summary = {
        "termination": res.termination.value,
        "t_final": res.t_final,
        "params": _params_echo(params, time_scale),
        "grid": {"lengths": list(grid.lengths), "cells": list(grid.cells)},
        "region": {"label": verdict.label.value, "theorem_applies": verdict.theorem_applies},
        "steps": {"accepted": res.n_accepted, "rejected": res.n_rejected},
        "mass0": res.mass0,
        "max_relative_mass_drift": res.max_mass_drift,
        "min_u": res.min_u_seen,
        "min_v": res.min_v_seen,
        "max_sup_u": max(r.sup_u for r in res.series),
        "max_sup_v": max(r.sup_v for r in res.series),
        "m_tau": res.series[-1].m_tau,
        "yp_bound": bounds,
    }
    (out / "summary.json").write_text(json.dumps(_json_safe(summary), indent=2) + "\n")
    print(f"{res.termination.value} at t = {res.t_final:.6g}; output in {out}")
    return EXIT_CODES[res.termination]


# ------------------------------------------------------------------ sweep


def cmd_sweep(args) -> int:
    from .sweep import SweepSpec, emit_region_map, run_sweep

    cfg = _load(args)
    params, grid, stepper, _, _ = cfg.validate()
    chi_grid = cfg["sweep.chi_grid"]
    k_grid = cfg["sweep.k_grid"]
    if not chi_grid or not k_grid:
        raise ConfigError("[sweep] chi_grid and k_grid must be set")
    ic = cfg["ic.recipe"]
    ic_args = {
        "constant": {"u_star": cfg["ic.u_star"], "v_star": cfg["ic.v_star"]},
        "gaussian_bump": {"amplitude": cfg["ic.amplitude"], "width": cfg["ic.width"]},
        "cosine_mode": {"mode": cfg["ic.mode"], "amplitude": cfg["ic.cos_amplitude"],
                        "base": cfg["ic.base"]},
        "from_file": {"u_path": cfg["ic.u_path"], "v_path": cfg["ic.v_path"]},
    }[ic]
    spec = SweepSpec(chi_grid=chi_grid, k_grid=k_grid, base=params, grid=grid, config=stepper,
                     ic=ic, ic_args=ic_args, parallelism=cfg["sweep.workers"],
                     window=cfg["sweep.window"])
    out = _output_dir(args, cfg)
    result = run_sweep(spec, progress=None if args.quiet else sys.stderr)
    csv_path, svg_path = emit_region_map(result, out)
    counts: dict[str, int] = {}
    for e in result.ordered():
        counts[e.outcome.value] = counts.get(e.outcome.value, 0) + 1
    print(", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


# ----------------------------------------------------------------- picard


def cmd_picard(args) -> int:
    from .semigroup import cross_validate, picard_solve

    cfg = _load(args)
    params, grid, _, _, (u0, v0) = cfg.validate()
    _, time_scale = cfg.model_params()
    T = cfg["picard.T"]
    res = picard_solve(u0, v0, params, T, n_iter=cfg["picard.n_iter"])
    payload = json.loads(res.to_json(params=_params_echo(params, time_scale)))
    if args.cross_validate:
        cv = cross_validate(u0, v0, params, T, dt=cfg["picard.dt"])
        payload["cross_validation"] = {
            "dt": cv.dt, "discrepancy_u": cv.discrepancy_u,
            "discrepancy_v": cv.discrepancy_v, "tol": cv.tol, "passed": cv.passed,
        }
    out = _output_dir(args, cfg)
    (out / "picard.json").write_text(json.dumps(_json_safe(payload), indent=2) + "\n")
    print("ratios: " + ", ".join(f"{r:.4g}" for r in res.ratios))
    print(f"wrote {out / 'picard.json'}")
    return EXIT_OK


# ----------------------------------------------------------------- verify


def _suite_mass(seed):
    from .initial import gaussian_bump
    from .stepper import StepperConfig

    params = ModelParams(chi=0.5, dim=2)
    grid = Grid.box(32, dim=2)
    u0, v0 = gaussian_bump(grid, params)
    res = simulate(u0, v0, params, StepperConfig(t_end=1.0))
    return res.max_mass_drift < 1e-10, f"relative drift {res.max_mass_drift:.2e} < 1e-10"


def _suite_positivity(seed):
    from .stepper import SimState, StepperConfig, step

    params = ModelParams(chi=0.8, dim=2)
    grid = Grid.box(32, dim=2)
    rng = np.random.default_rng(seed)
    cfg = StepperConfig()
    worst = math.inf
    for _ in range(20):
        u = Field(grid, rng.uniform(0.0, 5.0, grid.shape) * (rng.random(grid.shape) < 0.7))
        v = Field(grid, rng.uniform(0.0, 5.0, grid.shape))
        state = SimState(u, v)
        dt = 1e-3
        for _ in range(20):
            nxt = step(state, dt, params, cfg)
            if nxt is None:
                dt /= 2
                continue
            state = nxt
            worst = min(worst, float(state.u.values.min()), float(state.v.values.min()))
    return worst >= 0.0, f"min over 20 random states = {worst:.3g} >= 0"


def _suite_mms(seed):
    from .stepper import mms_convergence, mms_temporal_residual, observed_orders

    levels = [16, 32, 64, 128]
    r0 = mms_convergence(levels, ModelParams(chi=0.0, dim=1))
    r5 = mms_convergence(levels, ModelParams(chi=0.5, dim=1))
    tr = mms_temporal_residual(ModelParams(chi=0.5, dim=1), [4e-3, 2e-3, 1e-3, 5e-4])
    # residual per unit time is O(dt): halving dt halves it
    t_orders = observed_orders(tr)
    ok0 = min(r0.order_u) >= 1.9
    ok5 = min(r5.order_u) >= 1.0
    okt = all(abs(o - 1.0) <= 0.15 for o in t_orders)
    detail = (f"orders chi=0: {min(r0.order_u):.3f} (>=1.9), chi=0.5: {min(r5.order_u):.3f} "
              f"(>=1.0), dt: {', '.join(f'{o:.2f}' for o in t_orders)}")
    return ok0 and ok5 and okt, detail


def _suite_smoothing(seed):
    from .semigroup import default_test_set, measure_smoothing_constant

    grid = Grid.box(256, dim=1)
    rep = measure_smoothing_constant(math.inf, math.inf, 0.5, 1.0, default_test_set(grid),
                                     np.geomspace(1e-3, 10.0, 200), estimate="gradient")
    nu_ok = abs(rep.nu - math.pi**2) <= 1e-12
    return rep.passed and nu_ok, (f"constant {rep.constant:.4g}, refinement ratio "
                                  f"{rep.refinement_ratio:.4f}, nu - pi^2 = {rep.nu - math.pi**2:.1e}")


def _suite_holder(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(1000):
        dim = int(rng.integers(1, 3))
        grid = Grid.box(int(rng.integers(4, 17)), dim=dim, length=float(rng.uniform(0.5, 2.0)))
        u = Field(grid, rng.exponential(1.0, grid.shape))
        v = Field(grid, rng.exponential(1.0, grid.shape))
        p = float(rng.uniform(1.05, 6.0))
        c = float(rng.uniform(0.1, 3.0))
        lhs, rhs, passed = diag.holder_interpolation_check(u, v, p, c)
        ok &= passed
        worst = max(worst, lhs / rhs)
    return ok, f"1000 random pairs, max lhs/rhs = {worst:.6f}"


def _suite_steady(seed):
    from .initial import constant
    from .stepper import StepperConfig

    params = ModelParams(chi=0.5, dim=2)
    grid = Grid.box(16, dim=2)
    u0, v0 = constant(grid, params, u_star=2.0)
    res = simulate(u0, v0, params, StepperConfig(t_end=1.0))
    dev = max(float(np.abs(res.final_state.u.values - 2.0).max()),
              float(np.abs(res.final_state.v.values - 2.0).max()))
    return dev < 1e-12, f"max deviation from the steady state {dev:.1e}"


def _suite_region(seed):
    ok = True
    for N in range(1, 11):
        th = thresholds(N, 1.0)
        ok &= th.k1 < 1.0 < th.k2
        for k in np.linspace(0.05, 10.0, 50):
            th = thresholds(N, float(k))
            for chi in np.linspace(0.01, 5.0, 50):
                p = ModelParams(chi=float(chi), k=float(k), dim=N)
                v = classify_region(p)
                ok &= (not v.in_iplus_n) or v.in_iplus_half_n
            for chi in (th.chi1, th.chi2):
                ok &= abs(f_indicator(N / 2, chi, float(k))) <= 1e-12
    return bool(ok), "I+(N) within I+(N/2), f(N/2) vanishes at chi1, chi2, k1 < 1 < k2"


def _suite_bootstrap(seed):
    seq = bootstrap_sequence(1.5, ModelParams(chi=0.8, k=1.0, dim=2))
    ok = len(seq) == 3 and seq[-1] == math.inf and abs(seq[1] - 1.5 / (1 - 1.5 * 0.36)) < 1e-12
    return ok, "mu = " + ", ".join(_fmt(m) for m in seq)


SUITES = {
    "mass": _suite_mass,
    "positivity": _suite_positivity,
    "mms": _suite_mms,
    "smoothing": _suite_smoothing,
    "holder": _suite_holder,
    "steady": _suite_steady,
    "region": _suite_region,
    "bootstrap": _suite_bootstrap,
}


def run_suites(names, seed: int = 0):
    rows = []
    for name in names:
        t0 = time.perf_counter()
        try:
            ok, detail = SUITES[name](seed)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"error: {exc!r}"
        rows.append((name, bool(ok), detail, time.perf_counter() - t0))
    return rows


def cmd_verify(args) -> int:
    names = []
    for s in args.suite or ["all"]:
        for part in s.split(","):
            part = part.strip()
            if part == "all":
                names.extend(SUITES)
            elif part in SUITES:
                names.append(part)
            else:
                raise _UsageError(f"unknown suite {part!r}; choose from all, {', '.join(SUITES)}")
    names = list(dict.fromkeys(names))
    rows = run_suites(names, args.seed)
    width = max(len(n) for n in names)
    for name, ok, detail, secs in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {secs:6.2f}s  {detail}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_ERROR


class _UsageError(Exception):
    pass


# ----------------------------------------------------------------- parser

FLAG_KEYS = (
    ("chi", "model.chi"),
    ("k", "model.k"),
    ("dim", "model.dim"),
    ("n", "grid.n"),
    ("t_end", "stepper.t_end"),
    ("ic", "ic.recipe"),
    ("seed", "run.seed"),
    ("snapshots", "output.snapshots"),
    ("format", "output.format"),
    ("T", "picard.T"),
    ("n_iter", "picard.n_iter"),
    ("chi_grid", "sweep.chi_grid"),
    ("k_grid", "sweep.k_grid"),
    ("workers", "sweep.workers"),
)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="configuration file (see 'kslog --help' for keys)")
    p.add_argument("--output", help=f"output directory (overrides ${OUTPUT_ENV} and [output] dir)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config key; repeatable")
    p.add_argument("--chi", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--dim", type=int, choices=(1, 2))
    p.add_argument("--n", type=int, help="cells per axis")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--ic", help="initial condition recipe")
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true", help="suppress progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="kslog",
        description="Keller-Segel system with logarithmic sensitivity: region "
                    "classification, simulation, sweeps and verification.",
        epilog=f"Exit codes: 0 completed, 1 error, 2 blow-up detected, 3 step-size "
               f"underflow. Output directory: --output, else ${OUTPUT_ENV}, else "
               f"[output] dir.\n\nConfiguration keys:\n{key_help()}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("region", help="classify (chi, k, N) and print the derived bounds")
    p.add_argument("--chi", type=float, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mu1", type=float, help="first bootstrap exponent (border region)")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("simulate", help="run one simulation")
    _add_run_flags(p)
    p.add_argument("--snapshots", choices=("none", "final", "all"))
    p.add_argument("--format", choices=("bin", "csv"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate over a (chi, k) grid and write a region map")
    _add_run_flags(p)
    p.add_argument("--chi-grid", dest="chi_grid", help="comma separated chi values")
    p.add_argument("--k-grid", dest="k_grid", help="comma separated k values")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("picard", help="fixed-point iteration of the mild formulation")
    _add_run_flags(p)
    p.add_argument("--T", type=float, help="slab length")
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--cross-validate", action="store_true",
                   help="also compare with the stepper at time T")
    p.set_defaults(func=cmd_picard)

    p = sub.add_parser("verify", help="run property suites and print a PASS/FAIL table")
    p.add_argument("--suite", action="append",
                   help=f"suite name, comma list or 'all' ({', '.join(SUITES)}); repeatable")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kslog: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, DomainError) as exc:
        print(f"kslog: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
