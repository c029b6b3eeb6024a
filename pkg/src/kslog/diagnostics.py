"""Measurements over discrete states: norms, the weighted functional y_p,
its exponential bound, the Hoelder interpolation, and gradient monitors."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Field, _cell_gradient_magnitude
from .params import (
    DomainError,
    EmptyIntervalError,
    ModelParams,
    RegionLabel,
    admissible_p_interval,
    classify_region,
    gradv_q_upper,
)

YP_TOL = 1e-3
HOLDER_SLACK = 1e-10
UNBOUNDED_P_CAP = 10.0


@dataclass
class DiagRecord:
    t: float
    mass: float
    sup_u: float
    sup_v: float
    lp_u: dict[float, float] = field(default_factory=dict)
    yp: dict[float, float] = field(default_factory=dict)
    grad_v_lq: dict[float, float] = field(default_factory=dict)
    m_tau: float = 0.0
    min_u: float = 0.0
    min_v: float = 0.0


@dataclass(frozen=True)
class Monitors:
    """Exponents tracked during a run."""

    ps: tuple[float, ...] = (2.0,)
    qs: tuple[float, ...] = (2.0, math.inf)


@dataclass(frozen=True)
class BoundReport:
    max_ratio: float
    tol: float
    passed: bool
    worst_t: float


def _as_array(f) -> tuple[np.ndarray, float]:
    if isinstance(f, Field):
        return f.values, f.grid.cell_volume
    raise TypeError(f"expected Field, got {type(f).__name__}")


def _lp(values: np.ndarray, dV: float, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(values))) if values.size else 0.0
    a = np.abs(values)
    if p == 1:
        return float(a.sum() * dV)
    if p == 2:
        return float(math.sqrt(np.dot(a.ravel(), a.ravel()) * dV))
    peak = a.max()
    if peak == 0:
        return 0.0
    # factor out the peak so large p does not overflow
    return float(peak * (np.sum((a / peak) ** p) * dV) ** (1.0 / p))


def lp_norm(f: Field, p: float) -> float:
    if not (p >= 1):
        raise DomainError(f"p must be >= 1 or inf, got {p!r}")
    vals, dV = _as_array(f)
    return _lp(vals, dV, p)


def _weighted(u: np.ndarray, v: np.ndarray, dV: float, p: float, c: float) -> float:
    return float(np.sum(u**p * (v + c) ** ((1.0 - p) / 2.0)) * dV)


def weighted_functional(u: Field, v: Field, p: float, c: float) -> float:
    """Quadrature of u^p (v+c)^((1-p)/2)."""
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    if not c > 0:
        raise DomainError(f"c must be positive, got {c!r}")
    if np.any(u.values < 0) or np.any(v.values < 0):
        raise DomainError("u and v must be nonnegative")
    return _weighted(u.values, v.values, u.grid.cell_volume, p, c)


def check_yp_bound(
    series: Sequence[tuple[float, float]], alpha: float, p: float, tol: float = YP_TOL
) -> BoundReport:
    """Compare y_p(t) with y_p(0) exp(alpha (p-1) t / 2) along a run."""
    if not series:
        raise DomainError("empty series")
    t0, y0 = series[0]
    if y0 == 0:
        raise DomainError("y_p(0) = 0, the bound is degenerate")
    worst, worst_t = -math.inf, t0
    for t, y in series:
        ratio = y / (y0 * math.exp(alpha * (p - 1.0) * (t - t0) / 2.0))
        if ratio > worst:
            worst, worst_t = ratio, t
    return BoundReport(max_ratio=worst, tol=tol, passed=worst <= 1.0 + tol, worst_t=worst_t)


def holder_interpolation_check(
    u: Field, v: Field, p: float, c: float
) -> tuple[float, float, bool]:
    """||u||_p against y_{2p}^{1/(2p)} * (int (v+c)^(p-1/2))^{1/(2p)}."""
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    dV = u.grid.cell_volume
    lhs = float((np.sum(np.abs(u.values) ** p) * dV) ** (1.0 / p))
    y2p = _weighted(u.values, v.values, dV, 2.0 * p, c)
    vint = float(np.sum((v.values + c) ** (p - 0.5)) * dV)
    rhs = y2p ** (1.0 / (2.0 * p)) * vint ** (1.0 / (2.0 * p))
    return lhs, rhs, lhs <= rhs * (1.0 + HOLDER_SLACK)


def grad_lq_norm(v: Field, q: float) -> float:
    if not (q >= 1):
        raise DomainError(f"q must be >= 1 or inf, got {q!r}")
    g = _cell_gradient_magnitude(v.values, v.grid.h)
    return _lp(g, v.grid.cell_volume, q)


def running_m_tau(sup_v_series: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    best = -math.inf
    last_t = -math.inf
    for t, s in sup_v_series:
        if t < last_t:
            raise DomainError("timestamps must be increasing")
        last_t = t
        best = max(best, s)
        out.append((t, best))
    return out


def default_monitors(params: ModelParams) -> Monitors:
    """p = 2 plus the midpoint of the admissible interval; q = 2, inf, and in
    the border region 0.9 of the gradient exponent bound."""
    ps = [2.0]
    qs = [2.0, math.inf]
    try:
        lo, hi = admissible_p_interval(params)
    except EmptyIntervalError:
        return Monitors(tuple(ps), tuple(qs))
    mid = UNBOUNDED_P_CAP if hi == math.inf else 0.5 * (lo + hi)
    mid = min(mid, UNBOUNDED_P_CAP)
    if mid > 1 and mid not in ps:
        ps.append(mid)
    if classify_region(params).label is RegionLabel.BORDER:
        qs.insert(1, 0.9 * gradv_q_upper(params))
    return Monitors(tuple(sorted(ps)), tuple(qs))


def measure(
    u: np.ndarray,
    v: np.ndarray,
    t: float,
    h: tuple[float, ...],
    c: float,
    monitors: Monitors,
    m_prev: float = -math.inf,
) -> DiagRecord:
    """Build a :class:`DiagRecord` from raw arrays (hot-path variant)."""
    dV = float(np.prod(h))
    sup_v = float(np.max(np.abs(v)))
    grad = _cell_gradient_magnitude(v, h) if monitors.qs else None
    return DiagRecord(
        t=float(t),
        mass=float(u.sum() * dV),
        sup_u=float(np.max(np.abs(u))),
        sup_v=sup_v,
        lp_u={p: _lp(u, dV, p) for p in monitors.ps},
        yp={p: _weighted(u, v, dV, p, c) for p in monitors.ps if p > 1},
        grad_v_lq={q: _lp(grad, dV, q) for q in monitors.qs},
        m_tau=max(m_prev, sup_v),
        min_u=float(u.min()),
        min_v=float(v.min()),
    )


def record_state(u: Field, v: Field, t: float, c: float, monitors: Monitors) -> DiagRecord:
    return measure(u.values, v.values, t, u.grid.h, c, monitors)


def _tag(x: float) -> str:
    return "inf" if x == math.inf else format(x, "g")


def diagnostics_header(monitors: Monitors) -> list[str]:
    cols = ["t", "mass", "sup_u", "sup_v"]
    cols += [f"lp_u_{_tag(p)}" for p in monitors.ps]
    cols += [f"yp_{_tag(p)}" for p in monitors.ps if p > 1]
    cols += [f"gradv_{_tag(q)}" for q in monitors.qs]
    cols += ["m_tau"]
    return cols


def write_diagnostics_csv(series: Sequence[DiagRecord], monitors: Monitors, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(diagnostics_header(monitors))
        for r in series:
            row = [r.t, r.mass, r.sup_u, r.sup_v]
            row += [r.lp_u[p] for p in monitors.ps]
            row += [r.yp[p] for p in monitors.ps if p > 1]
            row += [r.grad_v_lq[q] for q in monitors.qs]
            row += [r.m_tau]
            w.writerow([repr(float(x)) for x in row])


def yp_series(series: Sequence[DiagRecord], p: float) -> list[tuple[float, float]]:
    return [(r.t, r.yp[p]) for r in series]
