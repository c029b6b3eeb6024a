"""Batches of simulations over (chi, k) grids and the resulting region map."""
from __future__ import annotations

import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import initial
from .grid import Grid
from .params import DomainError, ModelParams, RegionVerdict, classify_region, thresholds
from .stepper import RunResult, StepperConfig, Termination, simulate

GROWTH_SLACK = 0.05


class Outcome(str, Enum):
    BOUNDED = "Bounded"
    GROWING = "Growing"
    BLOWUP = "NumericalBlowup"
    DT_UNDERFLOW = "DtUnderflow"
    ERROR = "Error"


@dataclass(frozen=True)
class SweepSpec:
    chi_grid: tuple[float, ...]
    k_grid: tuple[float, ...]
    base: ModelParams
    grid: Grid
    config: StepperConfig
    ic: str = "gaussian_bump"
    ic_args: dict = field(default_factory=dict)
    parallelism: int = 1
    window: float = 0.5

    def __post_init__(self):
        for name in ("chi_grid", "k_grid"):
            vals = tuple(float(x) for x in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise DomainError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(vals[:-1], vals[1:])):
                raise DomainError(f"{name} must be strictly increasing")
        if any(x <= 0 for x in self.chi_grid):
            raise DomainError("chi values must be positive")
        if any(x <= 0 for x in self.k_grid):
            raise DomainError("k values must be positive")
        if self.grid.dim != self.base.dim:
            raise DomainError("grid dimension differs from base.dim")
        if self.parallelism < 1:
            raise DomainError("parallelism must be >= 1")


@dataclass
class SweepEntry:
    chi: float
    k: float
    outcome: Outcome
    verdict: RegionVerdict
    peak_sup_u: float
    t_final: float
    error: Optional[str] = None


@dataclass
class SweepResult:
    entries: dict[tuple[float, float], SweepEntry]
    chi_grid: tuple[float, ...]
    k_grid: tuple[float, ...]
    dim: int

    def ordered(self) -> list[SweepEntry]:
        return [self.entries[(chi, k)] for k in self.k_grid for chi in self.chi_grid]


def classify_outcome(result: RunResult, window: float = 0.5) -> Outcome:
    """Bounded when the last ``window`` fraction of the run peaks at most 5%
    above the earlier part; the label describes the observation only."""
    if not 0 < window < 1:
        raise DomainError(f"window must lie in (0, 1), got {window!r}")
    if result.termination is Termination.BLOWUP:
        return Outcome.BLOWUP
    if result.termination is Termination.DT_UNDERFLOW:
        return Outcome.DT_UNDERFLOW
    ts = np.array([r.t for r in result.series])
    sup = np.array([r.sup_u for r in result.series])
    if ts.size < 2:
        return Outcome.BOUNDED
    cut = ts[0] + (1.0 - window) * (ts[-1] - ts[0])
    early = sup[ts <= cut]
    late = sup[ts > cut]
    if late.size == 0 or early.size == 0:
        return Outcome.BOUNDED
    return Outcome.BOUNDED if late.max() <= (1.0 + GROWTH_SLACK) * early.max() else Outcome.GROWING


def _run_point(args) -> SweepEntry:
    chi, k, spec = args
    params = spec.base.replace(chi=chi, k=k)
    verdict = classify_region(params)
    try:
        u0, v0 = initial.build(spec.ic, spec.grid, params, **spec.ic_args)
        res = simulate(u0, v0, params, spec.config)
    except Exception as exc:  # recorded per point, never aborts the sweep
        return SweepEntry(chi, k, Outcome.ERROR, verdict, math.nan, math.nan, error=repr(exc))
    peak = max(r.sup_u for r in res.series)
    return SweepEntry(chi, k, classify_outcome(res, spec.window), verdict, peak, res.t_final)


def run_sweep(spec: SweepSpec, progress=sys.stderr) -> SweepResult:
    points = [(chi, k, spec) for k in spec.k_grid for chi in spec.chi_grid]
    entries: dict[tuple[float, float], SweepEntry] = {}

    def report(i, e):
        if progress is not None:
            print(f"[{i + 1}/{len(points)}] chi={e.chi:g} k={e.k:g} -> {e.outcome.value}",
                  file=progress, flush=True)

    if spec.parallelism == 1 or len(points) == 1:
        for i, pt in enumerate(points):
            e = _run_point(pt)
            entries[(e.chi, e.k)] = e
            report(i, e)
    else:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            for i, e in enumerate(pool.map(_run_point, points)):
                entries[(e.chi, e.k)] = e
                report(i, e)
    return SweepResult(entries, spec.chi_grid, spec.k_grid, spec.base.dim)


# ------------------------------------------------------------ region map

CSV_HEADER = ["chi", "k", "outcome", "theorem_applies", "label", "peak_sup_u"]

OUTCOME_COLORS = {
    Outcome.BOUNDED: "#4c9a2a",
    Outcome.GROWING: "#e0a526",
    Outcome.BLOWUP: "#c0392b",
    Outcome.DT_UNDERFLOW: "#7d3c98",
    Outcome.ERROR: "#7f8c8d",
}


def write_region_csv(sweep: SweepResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for e in sweep.ordered():
            w.writerow([repr(e.chi), repr(e.k), e.outcome.value,
                        str(e.verdict.theorem_applies).lower(), e.verdict.label.value,
                        repr(float(e.peak_sup_u))])


def _edges(vals: Sequence[float]) -> np.ndarray:
    v = np.asarray(vals, dtype=float)
    if v.size == 1:
        half = 0.5 * max(abs(v[0]), 1.0) * 0.2
        return np.array([v[0] - half, v[0] + half])
    mids = 0.5 * (v[:-1] + v[1:])
    return np.concatenate([[v[0] - (mids[0] - v[0])], mids, [v[-1] + (v[-1] - mids[-1])]])


def boundary_curves(k_lo: float, k_hi: float, dim: int, samples: int = 200):
    """Polylines chi_1(k) and chi_2(k) over [k_lo, k_hi]."""
    ks = np.linspace(max(k_lo, 1e-9), k_hi, samples)
    th = [thresholds(dim, k) for k in ks]
    return ks, np.array([t.chi1 for t in th]), np.array([t.chi2 for t in th])


def region_svg(sweep: SweepResult, width: int = 640, height: int = 480) -> str:
    margin = 60
    chi_e = _edges(sweep.chi_grid)
    k_e = _edges(sweep.k_grid)
    x0, x1 = k_e[0], k_e[-1]
    y0, y1 = chi_e[0], chi_e[-1]
    pw, ph = width - 2 * margin, height - 2 * margin - 40

    def sx(k):
        return margin + (k - x0) / (x1 - x0) * pw

    def sy(chi):
        return margin + ph - (chi - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<clipPath id="plot"><rect x="{margin}" y="{margin}" width="{pw}" height="{ph}"/></clipPath>',
    ]
    for i, k in enumerate(sweep.k_grid):
        for j, chi in enumerate(sweep.chi_grid):
            e = sweep.entries[(chi, k)]
            xa, xb = sx(k_e[i]), sx(k_e[i + 1])
            ya, yb = sy(chi_e[j + 1]), sy(chi_e[j])
            out.append(
                f'<rect x="{xa:.2f}" y="{ya:.2f}" width="{xb - xa:.2f}" height="{yb - ya:.2f}" '
                f'fill="{OUTCOME_COLORS[e.outcome]}" stroke="white" stroke-width="0.5">'
                f"<title>chi={chi:g} k={k:g} {e.outcome.value} ({e.verdict.label.value})</title></rect>"
            )
    ks, c1, c2 = boundary_curves(x0, x1, sweep.dim)
    for name, curve, dash in (("chi_2(k)", c2, ""), ("chi_1(k)", c1, ' stroke-dasharray="6,4"')):
        pts = " ".join(f"{sx(k):.2f},{sy(c):.2f}" for k, c in zip(ks, curve))
        out.append(
            f'<polyline class="{name}" points="{pts}" fill="none" stroke="black" '
            f'stroke-width="2" clip-path="url(#plot)"{dash}/>'
        )
    out.append(f'<rect x="{margin}" y="{margin}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{margin + pw / 2}" y="{margin + ph + 30}" text-anchor="middle">k</text>')
    out.append(f'<text x="20" y="{margin + ph / 2}" text-anchor="middle">chi</text>')
    for val, x in ((x0, margin), (x1, margin + pw)):
        out.append(f'<text x="{x}" y="{margin + ph + 15}" text-anchor="middle" font-size="10">{val:.3g}</text>')
    for val, y in ((y0, margin + ph), (y1, margin)):
        out.append(f'<text x="{margin - 5}" y="{y}" text-anchor="end" font-size="10">{val:.3g}</text>')
    ly = height - 30
    lx = margin
    for oc in Outcome:
        out.append(f'<rect x="{lx}" y="{ly - 10}" width="12" height="12" fill="{OUTCOME_COLORS[oc]}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly}" font-size="11">{oc.value}</text>')
        lx += 100
    out.append(
        f'<text x="{margin}" y="{height - 8}" font-size="10">Solid: chi_2(k), dashed: chi_1(k). '
        "Outside the predicted region outcomes are observations only.</text>"
    )
    out.append("</svg>")
    return "\n".join(out)


def emit_region_map(sweep: SweepResult, path) -> tuple[Path, Path]:
    """Write ``region_map.csv`` and ``region_map.svg`` into directory ``path``."""
    if not sweep.entries:
        raise DomainError("empty sweep result")
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    csv_path = d / "region_map.csv"
    svg_path = d / "region_map.svg"
    write_region_csv(sweep, csv_path)
    svg_path.write_text(region_svg(sweep))
    return csv_path, svg_path
