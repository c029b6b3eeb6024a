"""Named initial-condition recipes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Field, Grid, read_csv, read_snapshot
from .params import DomainError, ModelParams

RECIPES = ("constant", "gaussian_bump", "cosine_mode", "from_file")


def constant(grid: Grid, params: ModelParams, u_star: float = 1.0, v_star: float | None = None):
    """Homogeneous state; by default the steady state v = beta*u/alpha."""
    if v_star is None:
        v_star = params.beta * u_star / params.alpha
    return grid.constant(u_star), grid.constant(v_star)


def gaussian_bump(grid: Grid, params: ModelParams, amplitude: float = 9.0,
                  width: float = 0.1, center=None):
    """u0 = 1 + A exp(-|x - xc|^2 / w^2) rescaled to mass |Omega|, v0 = beta/alpha.

    ``width`` is relative to the first box edge.
    """
    if center is None:
        center = tuple(L / 2 for L in grid.lengths)
    w = width * grid.lengths[0]
    coords = grid.mesh()
    r2 = sum((x - xc) ** 2 for x, xc in zip(coords, center))
    u = 1.0 + amplitude * np.exp(-r2 / w**2)
    u *= grid.volume / (u.sum() * grid.cell_volume)
    return Field(grid, u), grid.constant(params.beta / params.alpha)


def cosine_mode(grid: Grid, params: ModelParams, mode: int = 1, amplitude: float = 0.5,
                base: float = 1.0):
    """u0 = base + amplitude * prod cos(m pi x / L), v0 at the matching steady level."""
    if amplitude > base:
        raise DomainError("cosine amplitude exceeds the base level; u0 would be negative")
    coords = grid.mesh()
    shape = np.ones(grid.shape)
    for x, L in zip(coords, grid.lengths):
        shape = shape * np.cos(mode * np.pi * x / L)
    u = base + amplitude * shape
    return Field(grid, u), grid.constant(params.beta * base / params.alpha)


def from_file(grid: Grid, params: ModelParams, u_path: str, v_path: str):
    def load(path):
        path = Path(path)
        if path.suffix == ".csv":
            return read_csv(path, grid)
        f = read_snapshot(path)
        if f.grid != grid:
            raise DomainError(f"snapshot {path} grid {f.grid} does not match {grid}")
        return f

    return load(u_path), load(v_path)


def build(recipe: str, grid: Grid, params: ModelParams, **kwargs):
    try:
        fn = {
            "constant": constant,
            "gaussian_bump": gaussian_bump,
            "cosine_mode": cosine_mode,
            "from_file": from_file,
        }[recipe]
    except KeyError:
        raise DomainError(f"unknown initial condition {recipe!r}; choose from {RECIPES}") from None
    return fn(grid, params, **kwargs)
