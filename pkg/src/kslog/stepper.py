"""IMEX time integration with adaptive steps, positivity by rejection, and a
numerical blow-up indicator.

Diffusion of u and the diffusion-decay operator of v are taken implicitly
(backward Euler, one tridiagonal solve per axis); taxis and the production
term beta*u are explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import diagnostics as diag
from .grid import (
    Field,
    Grid,
    _cell_gradient_magnitude,
    _check_same_grid,
    _laplacian,
    _max_taxis_speed,
    _taxis_divergence,
)
from .params import DomainError, ModelParams

CLAMP_WINDOW = 1e-13
CFL_EPS = 1e-30
GROWTH_FACTOR = 1.2
GROWTH_EVERY = 10


class Scheme(str, Enum):
    IMEX_EULER = "ImexEuler"
    EXPLICIT_EULER = "ExplicitEuler"


class Termination(str, Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowUpDetected"
    DT_UNDERFLOW = "DtUnderflow"


@dataclass(frozen=True)
class StepperConfig:
    dt0: float = 1e-4
    t_end: float = 1.0
    cfl_safety: float = 0.5
    dt_min: float = 1e-12
    blowup_factor: float = 1e6
    snapshot_every: float = 0.1
    scheme: Scheme = Scheme.IMEX_EULER

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt0 > self.dt_min > 0):
            raise DomainError("need dt0 > dt_min > 0")
        if not self.t_end > 0:
            raise DomainError(f"t_end must be positive, got {self.t_end!r}")
        if not 0 < self.cfl_safety <= 1:
            raise DomainError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if not self.blowup_factor > 1:
            raise DomainError("blowup_factor must exceed 1")
        if not self.snapshot_every > 0:
            raise DomainError("snapshot_every must be positive")


@dataclass(frozen=True, eq=False)
class SimState:
    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        _check_same_grid(self.u, self.v)
        if np.any(self.u.values < 0) or np.any(self.v.values < 0):
            raise DomainError("state fields must be nonnegative")

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass
class RunResult:
    termination: Termination
    t_final: float
    series: list[diag.DiagRecord]
    final_state: SimState
    monitors: diag.Monitors
    n_accepted: int = 0
    n_rejected: int = 0
    min_u_seen: float = 0.0
    min_v_seen: float = 0.0
    mass0: float = 0.0
    max_mass_drift: float = 0.0


# ------------------------------------------------------------ linear algebra


def _implicit_solve(rhs: np.ndarray, h: tuple[float, ...], dt: float, diff: float,
                    decay: float = 0.0) -> np.ndarray:
    """Solve ((1 + dt*decay) - dt*diff*Lap) x = rhs, factored per axis.

    In 2D the operator is approximated by the product of per-axis factors,
    each an M-matrix with unit column sums, so positivity and the total
    mass of ``rhs / (1 + dt*decay)`` are preserved.
    """
    scale = 1.0 + dt * decay
    x = rhs / scale
    coef = dt * diff / scale
    for axis, hx in enumerate(h):
        n = x.shape[axis]
        r = coef / hx**2
        ab = np.empty((3, n))
        ab[0, 1:] = -r
        ab[0, 0] = 0.0
        ab[2, :-1] = -r
        ab[2, -1] = 0.0
        ab[1, :] = 1.0 + 2.0 * r
        ab[1, 0] = ab[1, -1] = 1.0 + r
        moved = np.moveaxis(x, axis, 0)
        flat = moved.reshape(n, -1)
        sol = solve_banded((1, 1), ab, flat, check_finite=False)
        x = np.moveaxis(sol.reshape(moved.shape), 0, axis)
    return np.ascontiguousarray(x)


def cfl_limit(v: np.ndarray, h: tuple[float, ...], params: ModelParams, cfl_safety: float) -> float:
    """Largest explicit-taxis step keeping the upwind update monotone."""
    hmin = min(h)
    speed = _max_taxis_speed(v, h, params.c)
    return cfl_safety * hmin**2 / (2 * len(h) * params.chi * speed * hmin + CFL_EPS)


def _step_arrays(u, v, t, dt, params: ModelParams, h, scheme: Scheme,
                 source: Optional[Callable] = None):
    taxis = _taxis_divergence(u, v, h, params.chi, params.c) if params.chi else 0.0
    if scheme is Scheme.IMEX_EULER:
        rhs_u = u - dt * taxis
        rhs_v = v + dt * params.beta * u
        if source is not None:
            su, sv = source(t + dt)
            rhs_u = rhs_u + dt * su
            rhs_v = rhs_v + dt * sv
        u_new = _implicit_solve(rhs_u, h, dt, 1.0)
        v_new = _implicit_solve(rhs_v, h, dt, params.k, params.alpha)
    else:
        u_new = u + dt * (_laplacian(u, h) - taxis)
        v_new = v + dt * (params.k * _laplacian(v, h) - params.alpha * v + params.beta * u)
        if source is not None:
            su, sv = source(t)
            u_new = u_new + dt * su
            v_new = v_new + dt * sv
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        return None
    if u_new.min() < -CLAMP_WINDOW or v_new.min() < -CLAMP_WINDOW:
        return None
    np.maximum(u_new, 0.0, out=u_new)
    np.maximum(v_new, 0.0, out=v_new)
    return u_new, v_new


def step(state: SimState, dt: float, params: ModelParams, config: StepperConfig,
         source: Optional[Callable] = None) -> Optional[SimState]:
    """Advance one step of size ``dt``.

    Returns ``None`` when the update would go negative beyond the round-off
    clamp window; the caller is expected to retry with a smaller step.
    ``source(t)`` may return additive forcing arrays ``(s_u, s_v)``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    h = state.grid.h
    out = _step_arrays(state.u.values, state.v.values, state.t, dt, params, h,
                       config.scheme, source)
    if out is None:
        return None
    g = state.grid
    return SimState(Field(g, out[0]), Field(g, out[1]), state.t + dt)


# ---------------------------------------------------------------- driver


def _validate_ics(ic_u: Field, ic_v: Field, params: ModelParams) -> None:
    params.require_simulable()
    _check_same_grid(ic_u, ic_v)
    if ic_u.grid.dim != params.dim:
        raise DomainError(f"grid is {ic_u.grid.dim}D but params.dim = {params.dim}")
    for name, f in (("u0", ic_u), ("v0", ic_v)):
        if not np.all(np.isfinite(f.values)):
            raise DomainError(f"{name} has non-finite values")
        if np.any(f.values < 0):
            raise DomainError(f"{name} must be nonnegative")
    if not (np.any(ic_u.values > 0) or np.any(ic_v.values > 0)):
        raise DomainError("initial data must not both vanish identically")


@dataclass
class _Ensemble:
    """Several states advanced in lockstep with a shared step sequence."""

    us: list[np.ndarray]
    vs: list[np.ndarray]
    t: float = 0.0
    records: list[list[diag.DiagRecord]] = field(default_factory=list)
    n_accepted: int = 0
    n_rejected: int = 0
    min_u: float = math.inf
    min_v: float = math.inf
    max_mass_drift: float = 0.0


def _advance(us, vs, params: ModelParams, grid: Grid, config: StepperConfig,
             monitors: diag.Monitors, record_hook=None):
    h = grid.h
    dV = grid.cell_volume
    ens = _Ensemble([u.copy() for u in us], [v.copy() for v in vs])
    sup0 = max(float(u.max()) for u in us)
    mass0 = [float(u.sum() * dV) for u in us]
    ens.min_u = min(float(u.min()) for u in us)
    ens.min_v = min(float(v.min()) for v in vs)

    m_prev = [-math.inf] * len(us)

    def record():
        row = []
        for i, (u, v) in enumerate(zip(ens.us, ens.vs)):
            r = diag.measure(u, v, ens.t, h, params.c, monitors, m_prev[i])
            m_prev[i] = r.m_tau
            row.append(r)
        ens.records.append(row)
        if record_hook is not None:
            record_hook(ens)

    record()
    t_end = config.t_end
    every = config.snapshot_every
    snap_index = 1
    dt = config.dt0
    since_growth = 0
    blowup_level = config.blowup_factor * sup0 if sup0 > 0 else config.blowup_factor

    while True:
        next_snap = min(snap_index * every, t_end)
        if ens.t >= t_end * (1 - 1e-14):
            return ens, Termination.COMPLETED
        dt_cfl = math.inf
        if params.chi > 0:
            dt_cfl = min(cfl_limit(v, h, params, config.cfl_safety) for v in ens.vs)
        if config.scheme is Scheme.EXPLICIT_EULER:
            dt_cfl = min(dt_cfl, config.cfl_safety * min(h) ** 2 / (2 * grid.dim * max(1.0, params.k)))
        gap = next_snap - ens.t
        dt_try = min(dt, dt_cfl)
        lands = dt_try >= gap * (1 - 1e-12)
        if lands:
            dt_try = gap
        if dt_try < config.dt_min:
            return ens, Termination.DT_UNDERFLOW
        outs = [
            _step_arrays(u, v, ens.t, dt_try, params, h, config.scheme)
            for u, v in zip(ens.us, ens.vs)
        ]
        if any(o is None for o in outs):
            ens.n_rejected += 1
            dt = dt_try / 2.0
            since_growth = 0
            if dt < config.dt_min:
                return ens, Termination.DT_UNDERFLOW
            continue
        ens.us = [o[0] for o in outs]
        ens.vs = [o[1] for o in outs]
        ens.t = next_snap if lands else ens.t + dt_try
        ens.n_accepted += 1
        ens.min_u = min(ens.min_u, min(float(u.min()) for u in ens.us))
        ens.min_v = min(ens.min_v, min(float(v.min()) for v in ens.vs))
        for u, m0 in zip(ens.us, mass0):
            if m0 > 0:
                ens.max_mass_drift = max(ens.max_mass_drift, abs(u.sum() * dV - m0) / m0)
        since_growth += 1
        if since_growth >= GROWTH_EVERY:
            dt *= GROWTH_FACTOR
            since_growth = 0
        if max(float(u.max()) for u in ens.us) > blowup_level:
            record()
            return ens, Termination.BLOWUP
        if lands:
            record()
            if next_snap >= t_end:
                return ens, Termination.COMPLETED
            snap_index += 1


def simulate(ic_u: Field, ic_v: Field, params: ModelParams, config: StepperConfig,
             monitors: Optional[diag.Monitors] = None, progress=None) -> RunResult:
    """Integrate from the given initial data until ``t_end``, a blow-up flag,
    or step-size underflow.

    The blow-up flag is a numerical indicator only: the sup norm of u grew
    past ``blowup_factor`` times its initial value.
    """
    _validate_ics(ic_u, ic_v, params)
    if monitors is None:
        monitors = diag.default_monitors(params)
    grid = ic_u.grid
    ens, term = _advance([ic_u.values], [ic_v.values], params, grid, config, monitors,
                         record_hook=progress)
    final = SimState(Field(grid, ens.us[0]), Field(grid, ens.vs[0]), ens.t)
    return RunResult(
        termination=term,
        t_final=ens.t,
        series=[row[0] for row in ens.records],
        final_state=final,
        monitors=monitors,
        n_accepted=ens.n_accepted,
        n_rejected=ens.n_rejected,
        min_u_seen=ens.min_u,
        min_v_seen=ens.min_v,
        mass0=float(ic_u.values.sum() * grid.cell_volume),
        max_mass_drift=ens.max_mass_drift,
    )


# ------------------------------------------------------- continuous dependence


@dataclass
class DivergenceSeries:
    t: np.ndarray
    energy: np.ndarray
    rate: float
    bounded: bool
    termination: Termination


def _perturbation_shape(grid: Grid) -> np.ndarray:
    """Lowest cosine mode along every axis, normalised to unit L^2 norm."""
    shape = np.ones(grid.shape)
    for axis, (n, L) in enumerate(zip(grid.cells, grid.lengths)):
        x = (np.arange(n) + 0.5) * L / n
        idx = [None] * grid.dim
        idx[axis] = slice(None)
        shape = shape * np.cos(np.pi * x / L)[tuple(idx)]
    norm = math.sqrt(float(np.sum(shape**2)) * grid.cell_volume)
    return shape / norm


def gronwall_energy(u1, v1, u2, v2, grid: Grid) -> float:
    dV = grid.cell_volume
    w = u1 - u2
    z = v1 - v2
    gz = _cell_gradient_magnitude(z, grid.h)
    return float((np.sum(w * w) + np.sum(z * z) + np.sum(gz * gz)) * dV)


def fit_growth_rate(t: np.ndarray, energy: np.ndarray) -> float:
    """Smallest rate L with E(t) <= E(0) exp(L t) at every sample."""
    e0 = energy[0]
    if e0 == 0:
        return 0.0 if np.all(energy == 0) else math.inf
    rates = [math.log(e / e0) / s for s, e in zip(t[1:], energy[1:]) if s > 0 and e > 0]
    return max(rates, default=0.0)


def twin_run_divergence(ic_u: Field, ic_v: Field, perturbation_size: float,
                        params: ModelParams, config: StepperConfig) -> DivergenceSeries:
    """Run the model from two initial data differing by an L^2 perturbation of
    u and record ||w||^2 + ||z||^2 + ||grad z||^2 along a shared step sequence."""
    if perturbation_size < 0:
        raise DomainError("perturbation_size must be nonnegative")
    _validate_ics(ic_u, ic_v, params)
    grid = ic_u.grid
    u2 = ic_u.values + perturbation_size * _perturbation_shape(grid)
    if np.any(u2 < 0):
        raise DomainError("perturbation drives u0 negative; reduce its size")
    times, energy = [], []

    def hook(e: _Ensemble):
        times.append(e.t)
        energy.append(gronwall_energy(e.us[0], e.vs[0], e.us[1], e.vs[1], grid))

    ens, term = _advance([ic_u.values, u2], [ic_v.values, ic_v.values.copy()], params,
                         grid, config, diag.Monitors(ps=(), qs=()), record_hook=hook)
    t = np.asarray(times)
    e = np.asarray(energy)
    rate = fit_growth_rate(t, e)
    return DivergenceSeries(t=t, energy=e, rate=rate, bounded=math.isfinite(rate),
                            termination=term)


# ------------------------------------------------------------------- MMS


@dataclass
class MMSReport:
    levels: list[int]
    err_u: list[float]
    err_v: list[float]
    order_u: list[float]
    order_v: list[float]


def manufactured_solution(x: np.ndarray, t: float) -> np.ndarray:
    return 2.0 + np.cos(np.pi * x) * math.exp(-t)


def manufactured_source(x: np.ndarray, t: float, params: ModelParams):
    """Forcing making u = v = 2 + cos(pi x) e^{-t} an exact solution on [0, 1]."""
    chi, k, c = params.chi, params.k, params.c
    e = math.exp(-t)
    cs = np.cos(np.pi * x) * e
    sn = np.sin(np.pi * x) * e
    u = 2.0 + cs
    v = u
    u_t = -cs
    u_x = -np.pi * sn
    u_xx = -np.pi**2 * cs
    v_x, v_xx = u_x, u_xx
    # d/dx [chi u v_x / (v + c)]
    w = v + c
    flux_x = chi * (u_x * v_x / w + u * v_xx / w - u * v_x**2 / w**2)
    s_u = u_t - u_xx + flux_x
    s_v = u_t - k * v_xx + params.alpha * v - params.beta * u
    return s_u, s_v


def _mms_run(n: int, params: ModelParams, t_end: float, dt: float):
    grid = Grid.box(n, dim=1)
    (x,) = grid.centers()
    u = manufactured_solution(x, 0.0)
    v = u.copy()
    steps = max(1, int(round(t_end / dt)))
    dt = t_end / steps
    t = 0.0
    src = lambda s: manufactured_source(x, s, params)  # noqa: E731
    for _ in range(steps):
        out = _step_arrays(u, v, t, dt, params, grid.h, Scheme.IMEX_EULER, src)
        if out is None:
            raise RuntimeError("manufactured run lost positivity")
        u, v = out
        t += dt
    exact = manufactured_solution(x, t)
    dV = grid.cell_volume
    eu = math.sqrt(float(np.sum((u - exact) ** 2)) * dV)
    ev = math.sqrt(float(np.sum((v - exact) ** 2)) * dV)
    return eu, ev


def observed_orders(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    return [math.log(a / b) / math.log(ratio) for a, b in zip(errors[:-1], errors[1:])]


def mms_convergence(levels: Sequence[int], params: ModelParams, t_end: float = 0.1,
                    dt: float = 1e-5) -> MMSReport:
    """Observed spatial L^2 orders against the manufactured solution."""
    levels = list(levels)
    if len(levels) < 3:
        raise DomainError("need at least three levels")
    for a, b in zip(levels[:-1], levels[1:]):
        if b != 2 * a:
            raise DomainError("each level must double the previous one")
    p1 = params.replace(dim=1)
    errs = [_mms_run(n, p1, t_end, dt) for n in levels]
    eu = [e[0] for e in errs]
    ev = [e[1] for e in errs]
    return MMSReport(levels, eu, ev, observed_orders(eu), observed_orders(ev))


def mms_temporal_residual(params: ModelParams, dts: Sequence[float], n: int = 8192):
    """One step from the exact solution; returns the per-unit-time residual
    ||u_h(dt) - u(dt)|| / dt for each dt (first-order scheme: O(dt))."""
    p1 = params.replace(dim=1)
    res = []
    for dt in dts:
        eu, ev = _mms_run(n, p1, dt, dt)
        res.append(max(eu, ev) / dt)
    return res
