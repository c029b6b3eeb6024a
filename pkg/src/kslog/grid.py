"""Cell-centred box grids with homogeneous Neumann boundaries.

Field values are stored with axis 0 along x and (in 2D) axis 1 along y.
The array-level kernels (leading underscore) are shared with the stepper
so the hot loop never has to wrap arrays into :class:`Field` objects.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import DomainError

MIN_CELLS = 4


@dataclass(frozen=True)
class Grid:
    lengths: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        cells = tuple(int(n) for n in self.cells)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)
        if len(lengths) not in (1, 2) or len(lengths) != len(cells):
            raise DomainError("grid must be 1D or 2D with one cell count per axis")
        if any(not (np.isfinite(L) and L > 0) for L in lengths):
            raise DomainError(f"box lengths must be positive, got {lengths}")
        if any(n < MIN_CELLS for n in cells):
            raise DomainError(f"need at least {MIN_CELLS} cells per axis, got {cells}")

    @classmethod
    def box(cls, n: int, dim: int = 1, length: float = 1.0) -> "Grid":
        return cls(lengths=(length,) * dim, cells=(n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates per axis (1D arrays)."""
        return tuple((np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.h))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*self.centers(), indexing="ij")

    def field(self, values) -> "Field":
        return Field(self, np.asarray(values, dtype=float))

    def constant(self, value: float) -> "Field":
        return Field(self, np.full(self.shape, float(value)))

    def sample(self, func) -> "Field":
        """Evaluate ``func(*coords)`` at the cell centres."""
        return Field(self, np.asarray(func(*self.mesh()), dtype=float) * np.ones(self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", vals)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __add__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values - other)

    def __mul__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__


def _check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise DomainError("fields live on different grids")
    return grid


# ---------------------------------------------------------------- kernels


def _face_diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Differences across interior faces along ``axis``; shape n-1 on that axis."""
    return np.diff(a, axis=axis) / h


def _flux_divergence(flux: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Divergence of interior-face fluxes with zero flux on both boundary faces."""
    pad = [(0, 0)] * flux.ndim
    pad[axis] = (1, 1)
    full = np.pad(flux, pad)
    return np.diff(full, axis=axis) / h


def _laplacian(a: np.ndarray, h: tuple[float, ...]) -> np.ndarray:
    out = np.zeros_like(a)
    for axis, hx in enumerate(h):
        out += _flux_divergence(_face_diff(a, axis, hx), axis, hx)
    return out


def _lo_hi(a: np.ndarray, axis: int):
    """Views of the cells on the low and high side of each interior face."""
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return a[tuple(lo)], a[tuple(hi)]


def _face_mean(a: np.ndarray, axis: int):
    lo, hi = _lo_hi(a, axis)
    return 0.5 * (lo + hi), lo, hi


def _taxis_flux(u: np.ndarray, v: np.ndarray, axis: int, h: float, chi: float, c: float):
    """Upwinded face flux chi*u*dv/(v+c) on interior faces of ``axis``."""
    vbar, v_lo, v_hi = _face_mean(v, axis)
    u_lo, u_hi = _lo_hi(u, axis)
    speed = chi * (v_hi - v_lo) / (h * (vbar + c))
    # positive speed moves mass from the low-index cell to the high-index one
    u_up = np.where(speed > 0, u_lo, u_hi)
    return speed * u_up, speed


def _taxis_divergence(u, v, h, chi, c) -> np.ndarray:
    out = np.zeros_like(u)
    for axis, hx in enumerate(h):
        flux, _ = _taxis_flux(u, v, axis, hx, chi, c)
        out += _flux_divergence(flux, axis, hx)
    return out


def _max_taxis_speed(v: np.ndarray, h: tuple[float, ...], c: float) -> float:
    """max over faces of |grad v| / (v_face + c), without the chi factor."""
    best = 0.0
    for axis, hx in enumerate(h):
        vbar, v_lo, v_hi = _face_mean(v, axis)
        s = np.abs(v_hi - v_lo) / (hx * (vbar + c))
        if s.size:
            best = max(best, float(s.max()))
    return best


def _cell_gradient_magnitude(a: np.ndarray, h: tuple[float, ...]) -> np.ndarray:
    """|grad a| at cell centres from averaged face differences (zero normal
    difference on the boundary faces)."""
    sq = np.zeros_like(a)
    for axis, hx in enumerate(h):
        d = _face_diff(a, axis, hx)
        pad = [(0, 0)] * a.ndim
        pad[axis] = (1, 1)
        full = np.pad(d, pad)
        lo, hi = _lo_hi(full, axis)
        sq += (0.5 * (lo + hi)) ** 2
    return np.sqrt(sq)


# ------------------------------------------------------------- operators


def laplacian_neumann(f: Field) -> Field:
    return Field(f.grid, _laplacian(f.values, f.grid.h))


def chemotaxis_divergence(u: Field, v: Field, chi: float, c: float) -> Field:
    """Conservative divergence of the taxis flux chi*u*grad(v)/(v+c).

    The advected density is taken from the cell the flux leaves, so the
    result is never negative-contributing into an empty cell.
    """
    if not c > 0:
        raise DomainError(f"saturation offset c must be positive, got {c!r}")
    grid = _check_same_grid(u, v)
    return Field(grid, _taxis_divergence(u.values, v.values, grid.h, chi, c))


def integrate(f: Field) -> float:
    return float(f.values.sum() * f.grid.cell_volume)


def gradient_magnitude(f: Field) -> Field:
    return Field(f.grid, _cell_gradient_magnitude(f.values, f.grid.h))


# ------------------------------------------------------------------- I/O


def write_csv(f: Field, path) -> None:
    path = Path(path)
    coords = f.grid.centers()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if f.grid.dim == 1:
            w.writerow(["x", "value"])
            for x, val in zip(coords[0], f.values):
                w.writerow([repr(float(x)), repr(float(val))])
        else:
            w.writerow(["x", "y", "value"])
            for i, x in enumerate(coords[0]):
                for j, y in enumerate(coords[1]):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(f.values[i, j]))])


def read_csv(path, grid: Grid) -> Field:
    """Read a field written by :func:`write_csv`; rows must be in row-major order."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) != grid.dim + 1:
        raise DomainError(f"csv has {len(header)} columns, expected {grid.dim + 1}")
    vals = np.array([float(r[-1]) for r in body])
    if vals.size != int(np.prod(grid.shape)):
        raise DomainError(f"csv has {vals.size} rows, grid needs {np.prod(grid.shape)}")
    return Field(grid, vals.reshape(grid.shape))


def write_snapshot(f: Field, path) -> None:
    """Binary snapshot: little-endian int64 dim and counts, float64 lengths,
    then the row-major float64 payload."""
    g = f.grid
    header = struct.pack(
        f"<{1 + g.dim}q{g.dim}d", g.dim, *g.cells, *g.lengths
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> Field:
    data = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<q", data, 0)
    if dim not in (1, 2):
        raise DomainError(f"bad snapshot dimension {dim}")
    cells = struct.unpack_from(f"<{dim}q", data, 8)
    lengths = struct.unpack_from(f"<{dim}d", data, 8 + 8 * dim)
    offset = 8 + 16 * dim
    grid = Grid(lengths=lengths, cells=cells)
    vals = np.frombuffer(data, dtype="<f8", offset=offset)
    if vals.size != int(np.prod(cells)):
        raise DomainError("snapshot payload size does not match header")
    return Field(grid, vals.reshape(cells).astype(float))
