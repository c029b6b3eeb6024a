"""Cosine-basis realisation of the Neumann heat semigroup on boxes.

Cell-centred samples are expanded with the orthonormal type-II DCT, whose
basis functions are the Neumann eigenfunctions cos(m pi x / L) sampled at
the cell centres.  Derivatives map cosine modes to sine modes, evaluated
with the matching type-II DST.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft

from .grid import Field, Grid
from .params import DomainError, ModelParams

DUHAMEL_SUBINTERVALS = 64
SLAB_NODES = 17
SMOOTHING_SEED = 20240611
N_RANDOM_TEST_FIELDS = 32
MAX_TEST_MODE = 8
REFINEMENT_TOL = 1.05


class ContractionError(RuntimeError):
    """Picard differences kept growing: the slab length is too large."""


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return laplace_eigenvalues(self.grid)


def _wavenumbers(grid: Grid) -> list[np.ndarray]:
    """pi m / L per axis, broadcastable to the grid shape."""
    out = []
    for axis, (n, L) in enumerate(zip(grid.cells, grid.lengths)):
        shape = [1] * grid.dim
        shape[axis] = n
        out.append((np.pi * np.arange(n) / L).reshape(shape))
    return out


def laplace_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of -Laplacian per mode: sum over axes of (m pi / L)^2."""
    lam = np.zeros(grid.shape)
    for kx in _wavenumbers(grid):
        lam = lam + kx**2
    return lam


def first_nonzero_eigenvalue(grid: Grid) -> float:
    return min((math.pi / L) ** 2 for L in grid.lengths)


def _dct(a):
    return fft.dctn(a, type=2, norm="ortho")


def _idct(a):
    return fft.idctn(a, type=2, norm="ortho")


def to_spectral(f: Field) -> SpectralField:
    return SpectralField(f.grid, _dct(f.values))


def from_spectral(s: SpectralField) -> Field:
    return Field(s.grid, _idct(s.coeffs))


def apply_semigroup(s: SpectralField, t: float, k: float = 1.0, shift: float = 0.0) -> SpectralField:
    """exp(-(k*lambda + shift) t) per mode."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    damp = np.exp(-(k * laplace_eigenvalues(s.grid) + shift) * t)
    return SpectralField(s.grid, s.coeffs * damp)


# ----------------------------------------------------- spectral calculus


def _sine_from_cosine(coeffs: np.ndarray, axis: int, wavenumber: np.ndarray) -> np.ndarray:
    """Coefficients of d/dx_axis in the sine basis (DST-II index m-1 <-> mode m)."""
    d = -wavenumber * coeffs
    out = np.zeros_like(coeffs)
    src = [slice(None)] * coeffs.ndim
    dst = [slice(None)] * coeffs.ndim
    src[axis] = slice(1, None)
    dst[axis] = slice(None, -1)
    out[tuple(dst)] = d[tuple(src)]
    return out


def _synth_mixed(coeffs: np.ndarray, sine_axis: int) -> np.ndarray:
    out = coeffs
    for axis in range(coeffs.ndim):
        if axis == sine_axis:
            out = fft.idst(out, type=2, norm="ortho", axis=axis)
        else:
            out = fft.idct(out, type=2, norm="ortho", axis=axis)
    return out


def _analyse_mixed(values: np.ndarray, sine_axis: int) -> np.ndarray:
    out = values
    for axis in range(values.ndim):
        if axis == sine_axis:
            out = fft.dst(out, type=2, norm="ortho", axis=axis)
        else:
            out = fft.dct(out, type=2, norm="ortho", axis=axis)
    return out


def spectral_gradient(coeffs: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Per-axis derivatives at the cell centres of the cosine series ``coeffs``."""
    ks = _wavenumbers(grid)
    return [
        _synth_mixed(_sine_from_cosine(coeffs, axis, ks[axis]), axis)
        for axis in range(grid.dim)
    ]


def spectral_divergence(components: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Cosine coefficients of div J for a vector field vanishing on the boundary
    (each component expanded in sines along its own axis)."""
    ks = _wavenumbers(grid)
    total = np.zeros(grid.shape)
    for axis, comp in enumerate(components):
        b = _analyse_mixed(comp, axis)
        c = np.zeros_like(b)
        src = [slice(None)] * grid.dim
        dst = [slice(None)] * grid.dim
        src[axis] = slice(None, -1)
        dst[axis] = slice(1, None)
        c[tuple(dst)] = b[tuple(src)]
        total += ks[axis] * c
    return total


def _grad_magnitude(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    comps = spectral_gradient(coeffs, grid)
    return np.sqrt(sum(g * g for g in comps))


# ------------------------------------------------- smoothing estimates


def _lp(values: np.ndarray, dV: float, p: float) -> float:
    a = np.abs(values)
    if p == math.inf:
        return float(a.max())
    return float((np.sum(a**p) * dV) ** (1.0 / p))


def eigenmode_fields(grid: Grid, max_mode: int = MAX_TEST_MODE) -> list[Field]:
    """Single Neumann eigenfunctions with 1 <= max index <= max_mode."""
    coords = grid.mesh()
    fields = []
    if grid.dim == 1:
        combos = [(m,) for m in range(1, max_mode + 1)]
    else:
        combos = [
            (m, n) for m in range(max_mode + 1) for n in range(max_mode + 1) if (m, n) != (0, 0)
        ]
    for combo in combos:
        vals = np.ones(grid.shape)
        for m, x, L in zip(combo, coords, grid.lengths):
            vals = vals * np.cos(m * np.pi * x / L)
        fields.append(Field(grid, vals))
    return fields


def random_fields(grid: Grid, count: int = N_RANDOM_TEST_FIELDS,
                  seed: int = SMOOTHING_SEED) -> list[Field]:
    rng = np.random.default_rng(seed)
    return [Field(grid, rng.standard_normal(grid.shape)) for _ in range(count)]


def default_test_set(grid: Grid) -> list[Field]:
    return random_fields(grid) + eigenmode_fields(grid)


ESTIMATES = ("fractional", "fractional_mean_zero", "gradient")


@dataclass
class SmoothingReport:
    estimate: str
    p: float
    q: float
    theta: float
    k: float
    nu: float
    constant: float
    refined_constant: float
    refinement_ratio: float
    passed: bool
    n_fields: int
    t_min: float
    t_max: float

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: (str(v) if isinstance(v, float) and not math.isfinite(v) else v)
                           for k, v in d.items()}, indent=2)


def _rate(estimate: str, t: np.ndarray, theta: float, N: int, p: float, q: float, nu: float):
    gap = (1.0 / p if p != math.inf else 0.0) - (1.0 / q if q != math.inf else 0.0)
    if estimate == "gradient":
        return (1.0 + t ** (-0.5 - N / 2.0 * gap)) * np.exp(-nu * t)
    return t ** (-theta - N / 2.0 * gap) * np.exp(-nu * t)


def _sup_ratio(estimate, spectra, norms_w, grid, ts, theta, k, p, q, nu):
    lam = laplace_eigenvalues(grid)
    dV = grid.cell_volume
    rate = _rate(estimate, ts, theta, grid.dim, p, q, nu)
    if estimate == "fractional":
        mu = k * lam + 1.0
        power = mu**theta
    elif estimate == "fractional_mean_zero":
        mu = lam
        power = (lam + 1.0) ** theta
    else:
        mu = lam
        power = None
    best = 0.0
    for coeffs, wn in zip(spectra, norms_w):
        for t, r in zip(ts, rate):
            evolved = coeffs * np.exp(-mu * t)
            if power is not None:
                out = _lp(_idct(evolved * power), dV, q)
            else:
                out = _lp(_grad_magnitude(evolved, grid), dV, q)
            best = max(best, out / (r * wn))
    return best


def refine_times(t_grid: np.ndarray) -> np.ndarray:
    """Insert geometric midpoints between consecutive times."""
    t = np.asarray(t_grid, dtype=float)
    mids = np.sqrt(t[:-1] * t[1:])
    return np.sort(np.concatenate([t, mids]))


def measure_smoothing_constant(p: float, q: float, theta: float, k: float,
                               test_set: Sequence[Field], t_grid: Sequence[float],
                               estimate: str = "fractional") -> SmoothingReport:
    """Empirical constant of a semigroup smoothing estimate.

    ``estimate`` selects the operator: ``"fractional"`` is
    A_k^theta exp(-A_k t) with A_k = -k Lap + 1; ``"fractional_mean_zero"``
    is A^theta exp(t Lap) on mean-zero data; ``"gradient"`` is
    grad exp(t Lap).  The constant is the supremum over fields and times of
    the left side divided by rate(t) * ||w||_p.
    """
    if estimate not in ESTIMATES:
        raise DomainError(f"unknown estimate {estimate!r}; choose from {ESTIMATES}")
    if not (1 <= p <= q):
        raise DomainError(f"need 1 <= p <= q, got p={p}, q={q}")
    if estimate != "gradient" and not 0 < theta < 1:
        raise DomainError(f"theta must lie in (0, 1), got {theta!r}")
    if not test_set:
        raise DomainError("empty test set")
    ts = np.asarray(t_grid, dtype=float)
    if ts.size < 2 or np.any(ts <= 0):
        raise DomainError("t_grid needs at least two positive times")
    grid = test_set[0].grid
    nu = first_nonzero_eigenvalue(grid)
    spectra, norms_w = [], []
    for w in test_set:
        vals = w.values
        if estimate == "fractional_mean_zero":
            mean = vals.mean()
            if abs(mean) > 1e-12 * max(1.0, float(np.abs(vals).max())):
                raise DomainError("mean-zero estimate requires test fields with zero mean")
        wn = _lp(vals, grid.cell_volume, p)
        if wn == 0:
            raise DomainError("test fields must be nonzero")
        spectra.append(_dct(vals))
        norms_w.append(wn)
    coarse = _sup_ratio(estimate, spectra, norms_w, grid, ts, theta, k, p, q, nu)
    fine = _sup_ratio(estimate, spectra, norms_w, grid, refine_times(ts), theta, k, p, q, nu)
    ratio = fine / coarse if coarse > 0 else math.inf
    passed = math.isfinite(fine) and ratio < REFINEMENT_TOL
    return SmoothingReport(
        estimate=estimate, p=p, q=q, theta=theta, k=k, nu=nu, constant=float(coarse),
        refined_constant=float(fine), refinement_ratio=float(ratio), passed=bool(passed),
        n_fields=len(test_set), t_min=float(ts.min()), t_max=float(ts.max()),
    )


# ---------------------------------------------------------- Picard iteration


def chebyshev_nodes(T: float, m: int = SLAB_NODES) -> np.ndarray:
    """Chebyshev-Lobatto points on [0, T], increasing, endpoints included."""
    j = np.arange(m)
    return T * (1.0 - np.cos(np.pi * j / (m - 1))) / 2.0


def _barycentric_weights(m: int) -> np.ndarray:
    w = (-1.0) ** np.arange(m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def barycentric_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Rows interpolate node values to the targets."""
    w = _barycentric_weights(nodes.size)
    diff = targets[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15 * max(1.0, float(np.abs(nodes).max())))
    diff = np.where(exact, 1.0, diff)
    P = w[None, :] / diff
    P /= P.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    P[rows] = exact[rows].astype(float)
    return P


@dataclass
class PicardResult:
    times: np.ndarray
    u: np.ndarray  # node-major slab, shape (nodes, *grid)
    v: np.ndarray
    differences: list[float]
    ratios: list[float]
    grid: Grid = field(repr=False)

    @property
    def u_final(self) -> Field:
        return Field(self.grid, self.u[-1])

    @property
    def v_final(self) -> Field:
        return Field(self.grid, self.v[-1])

    def to_json(self, **echo) -> str:
        return json.dumps(
            {
                **echo,
                "T": float(self.times[-1]),
                "nodes": int(self.times.size),
                "differences": [float(d) for d in self.differences],
                "ratios": [float(r) for r in self.ratios],
                "max_ratio_from_2": max((float(r) for r in self.ratios[1:]), default=None),
            },
            indent=2,
        )


class _DuhamelOperator:
    """Product quadrature of int_0^t exp(-mu (t-s)) g(s) ds at every slab node,
    with g interpolated from the node values and held constant on each of
    the composite-midpoint subintervals."""

    def __init__(self, nodes: np.ndarray, n_sub: int):
        self.nodes = nodes
        self.plans = []
        for t in nodes:
            if t == 0:
                self.plans.append(None)
                continue
            edges = np.linspace(0.0, t, n_sub + 1)
            mids = 0.5 * (edges[:-1] + edges[1:])
            self.plans.append((t, edges, barycentric_matrix(nodes, mids)))

    def weights(self, mu: np.ndarray):
        """Per node: array (n_sub, *shape) of exact exponential-kernel weights."""
        out = []
        for plan in self.plans:
            if plan is None:
                out.append(None)
                continue
            t, edges, _ = plan
            a = edges[:-1].reshape((-1,) + (1,) * mu.ndim)
            b = edges[1:].reshape((-1,) + (1,) * mu.ndim)
            out.append(np.exp(-mu * (t - b)) * (-np.expm1(-mu * (b - a))) / mu)
        return out

    def apply(self, weights, g_nodes: np.ndarray) -> np.ndarray:
        res = np.zeros_like(g_nodes)
        flat = g_nodes.reshape(g_nodes.shape[0], -1)
        for i, (plan, W) in enumerate(zip(self.plans, weights)):
            if plan is None:
                continue
            g_mid = (plan[2] @ flat).reshape((-1,) + g_nodes.shape[1:])
            res[i] = np.sum(W * g_mid, axis=0)
        return res


def _x_norm(du: np.ndarray, dv_coeffs: np.ndarray, grid: Grid) -> float:
    """max_s ||u||_C + max_s (||v||_inf + ||grad v||_inf) over slab nodes."""
    un = float(np.abs(du).max())
    vn = 0.0
    for c in dv_coeffs:
        vals = _idct(c)
        vn = max(vn, float(np.abs(vals).max()) + float(_grad_magnitude(c, grid).max()))
    return un + vn


def picard_solve(u0: Field, v0: Field, params: ModelParams, T: float, n_iter: int = 10,
                 n_nodes: int = SLAB_NODES, n_sub: int = DUHAMEL_SUBINTERVALS,
                 floor: float = 1e-12) -> PicardResult:
    """Fixed-point iteration of the mild (Duhamel) formulation on [0, T].

    ``differences[n]`` is the slab distance between iterates n+1 and n
    (the first iterate being the constant-in-time initial data) and
    ``ratios`` the successive quotients while both differences sit above
    ``floor`` times the slab size.
    """
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")
    if n_iter < 2:
        raise DomainError("n_iter must be at least 2")
    if u0.grid != v0.grid:
        raise DomainError("u0 and v0 live on different grids")
    grid = u0.grid
    lam = laplace_eigenvalues(grid)
    mu_u = lam + 1.0
    mu_v = params.k * lam + 1.0
    nodes = chebyshev_nodes(T, n_nodes)
    duhamel = _DuhamelOperator(nodes, n_sub)
    W_u = duhamel.weights(mu_u)
    W_v = duhamel.weights(mu_v)
    shape = (n_nodes,) + grid.shape
    u0c = _dct(u0.values)
    v0c = _dct(v0.values)
    tt = nodes.reshape((-1,) + (1,) * grid.dim)
    free_u = np.exp(-mu_u * tt) * u0c
    free_v = np.exp(-mu_v * tt) * v0c

    u = np.broadcast_to(u0.values, shape).copy()
    uc = np.broadcast_to(u0c, shape).copy()
    vc = np.broadcast_to(v0c, shape).copy()
    chi, c = params.chi, params.c

    diffs: list[float] = []
    ratios: list[float] = []
    growth = 0
    for _ in range(n_iter):
        div_c = np.zeros(shape)
        if chi != 0:
            for i in range(n_nodes):
                vvals = _idct(vc[i])
                grads = spectral_gradient(vc[i], grid)
                weight = chi * u[i] / (vvals + c)
                div_c[i] = spectral_divergence([weight * g for g in grads], grid)
        new_uc = free_u - duhamel.apply(W_u, div_c) + duhamel.apply(W_u, uc)
        new_vc = free_v + duhamel.apply(W_v, (1.0 - params.alpha) * vc + params.beta * uc)
        new_u = np.stack([_idct(x) for x in new_uc])
        d = _x_norm(new_u - u, new_vc - vc, grid)
        scale = _x_norm(new_u, new_vc, grid)
        if diffs and diffs[-1] > floor * scale and d > floor * scale:
            ratios.append(d / diffs[-1])
            growth = growth + 1 if d > diffs[-1] else 0
            if growth >= 3:
                raise ContractionError(
                    f"Picard differences grew three times in a row at T={T}; shrink T"
                )
        diffs.append(d)
        u, uc, vc = new_u, new_uc, new_vc
    v = np.stack([_idct(x) for x in vc])
    return PicardResult(times=nodes, u=u, v=v, differences=diffs, ratios=ratios, grid=grid)


@dataclass
class CrossValidation:
    discrepancy_u: float
    discrepancy_v: float
    tol: float
    passed: bool
    dt: float


def stepper_fixed_dt(ic_u: Field, ic_v: Field, params: ModelParams, T: float, dt: float):
    """Run the IMEX stepper with a constant step up to exactly T."""
    from .stepper import Scheme, _step_arrays

    steps = max(1, int(round(T / dt)))
    dt = T / steps
    u, v = ic_u.values.copy(), ic_v.values.copy()
    t = 0.0
    for _ in range(steps):
        out = _step_arrays(u, v, t, dt, params, ic_u.grid.h, Scheme.IMEX_EULER)
        if out is None:
            raise RuntimeError(f"stepper rejected a fixed step dt={dt}")
        u, v = out
        t += dt
    return Field(ic_u.grid, u), Field(ic_u.grid, v)


def cross_validate(ic_u: Field, ic_v: Field, params: ModelParams, T: float,
                   dt: float = 1e-4, tol: float = 1e-2, n_iter: int = 10) -> CrossValidation:
    """Relative sup-norm gap between the Picard solution and the stepper at T."""
    pic = picard_solve(ic_u, ic_v, params, T, n_iter=n_iter)
    su, sv = stepper_fixed_dt(ic_u, ic_v, params, T, dt)
    du = float(np.abs(pic.u_final.values - su.values).max() / np.abs(su.values).max())
    dv = float(np.abs(pic.v_final.values - sv.values).max() / np.abs(sv.values).max())
    return CrossValidation(du, dv, tol, du < tol and dv < tol, dt)
