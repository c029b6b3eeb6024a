"""Run configuration: flat ``key = value`` files with section headers.

Every key, its type and default live in :data:`SCHEMA`; parsing,
serialisation and the ``--help`` key listing are all driven from it.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .diagnostics import Monitors, default_monitors
from .grid import Grid
from .params import DomainError, ModelParams, RawParams, scale_parameters
from .stepper import StepperConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str  # float, int, str, bool, floats
    default: Any
    doc: str


SCHEMA: tuple[Key, ...] = (
    Key("model", "chi", "float", 0.5, "scaled chemotactic coefficient"),
    Key("model", "k", "float", 1.0, "scaled chemical diffusion"),
    Key("model", "alpha", "float", 1.0, "scaled degradation rate"),
    Key("model", "beta", "float", 1.0, "scaled production rate"),
    Key("model", "c", "float", 1.0, "sensitivity saturation offset"),
    Key("model", "dim", "int", 2, "spatial dimension (1 or 2)"),
    Key("model", "scale", "bool", False, "derive chi, k, alpha, beta from the raw d1..c2 keys"),
    Key("model", "d1", "float?", None, "raw cell motility (scale = true)"),
    Key("model", "d2", "float?", None, "raw chemical diffusion (scale = true)"),
    Key("model", "chi0", "float?", None, "raw chemotactic coefficient (scale = true)"),
    Key("model", "c1", "float?", None, "raw degradation (scale = true)"),
    Key("model", "c2", "float?", None, "raw production (scale = true)"),
    Key("grid", "n", "int", 64, "cells per axis"),
    Key("grid", "nx", "int?", None, "cells along x (overrides n)"),
    Key("grid", "ny", "int?", None, "cells along y (overrides n)"),
    Key("grid", "length", "float", 1.0, "box edge length"),
    Key("grid", "lx", "float?", None, "edge length along x (overrides length)"),
    Key("grid", "ly", "float?", None, "edge length along y (overrides length)"),
    Key("stepper", "dt0", "float", 1e-4, "initial time step"),
    Key("stepper", "t_end", "float", 1.0, "final time"),
    Key("stepper", "cfl_safety", "float", 0.5, "safety factor on the taxis CFL bound"),
    Key("stepper", "dt_min", "float", 1e-12, "step-size underflow floor"),
    Key("stepper", "blowup_factor", "float", 1e6, "sup u growth factor flagged as numerical blow-up"),
    Key("stepper", "snapshot_every", "float", 0.1, "diagnostic sampling interval"),
    Key("stepper", "scheme", "str", "ImexEuler", "ImexEuler or ExplicitEuler"),
    Key("ic", "recipe", "str", "gaussian_bump", "constant | gaussian_bump | cosine_mode | from_file"),
    Key("ic", "amplitude", "float", 9.0, "gaussian_bump: bump height"),
    Key("ic", "width", "float", 0.1, "gaussian_bump: width relative to the box edge"),
    Key("ic", "mode", "int", 1, "cosine_mode: mode index"),
    Key("ic", "base", "float", 1.0, "cosine_mode: background level"),
    Key("ic", "cos_amplitude", "float", 0.5, "cosine_mode: mode amplitude"),
    Key("ic", "u_star", "float", 1.0, "constant: u level"),
    Key("ic", "v_star", "float?", None, "constant: v level (default beta*u_star/alpha)"),
    Key("ic", "u_path", "str?", None, "from_file: u field (.csv or binary snapshot)"),
    Key("ic", "v_path", "str?", None, "from_file: v field"),
    Key("ic", "noise", "float", 0.0, "relative uniform noise on u0, drawn from the seed"),
    Key("diagnostics", "p", "floats", (), "monitored p exponents (empty: defaults)"),
    Key("diagnostics", "q", "floats", (), "monitored q exponents (empty: defaults)"),
    Key("output", "dir", "str", "out", "output directory (env KSLOG_OUTPUT_DIR, --output win)"),
    Key("output", "snapshots", "str", "final", "none | final | all"),
    Key("output", "format", "str", "bin", "snapshot format: bin or csv"),
    Key("run", "seed", "int", 0, "seed for randomised initial data"),
    Key("picard", "T", "float", 0.01, "Picard slab length"),
    Key("picard", "n_iter", "int", 10, "Picard iterations"),
    Key("picard", "dt", "float", 1e-4, "stepper step for the cross-validation"),
    Key("sweep", "chi_grid", "floats", (), "chi values (comma separated)"),
    Key("sweep", "k_grid", "floats", (), "k values (comma separated)"),
    Key("sweep", "workers", "int", 1, "worker processes"),
    Key("sweep", "window", "float", 0.5, "trailing fraction used to call growth"),
)

_BY_NAME = {(k.section, k.name.lower()): k for k in SCHEMA}
SECTIONS = tuple(dict.fromkeys(k.section for k in SCHEMA))


def _parse_value(key: Key, text: str):
    text = text.strip()
    kind = key.kind.rstrip("?")
    if key.kind.endswith("?") and text.lower() in ("", "none"):
        return None
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "floats":
        if not text:
            return ()
        return tuple(float(x) for x in re.split(r"[,\s]+", text) if x)
    return text


def _format_value(key: Key, value) -> str:
    kind = key.kind.rstrip("?")
    if value is None:
        return "none"
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def key_help() -> str:
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for k in SCHEMA:
            if k.section == sec:
                lines.append(f"  {k.name:<15} {k.doc} (default: {_format_value(k, k.default)})")
    return "\n".join(lines)


@dataclass
class RunConfig:
    values: dict[tuple[str, str], Any] = field(default_factory=dict)

    def __post_init__(self):
        full = {(k.section, k.name): k.default for k in SCHEMA}
        full.update(self.values)
        self.values = full

    def __getitem__(self, key: str):
        sec, name = key.split(".", 1)
        return self.values[(sec, _canonical(sec, name).name)]

    def set(self, dotted: str, text: str) -> None:
        sec, _, name = dotted.partition(".")
        key = _canonical(sec, name)
        try:
            self.values[(key.section, key.name)] = _parse_value(key, text)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {name}: {exc}") from None

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    # ---------------------------------------------------------- builders

    def model_params(self) -> tuple[ModelParams, float]:
        g = lambda n: self.values[("model", n)]  # noqa: E731
        try:
            if g("scale"):
                missing = [n for n in ("d1", "d2", "chi0", "c1", "c2") if g(n) is None]
                if missing:
                    raise ConfigError(f"[model] scale = true needs keys {missing}")
                raw = RawParams(g("d1"), g("d2"), g("chi0"), g("c1"), g("c2"), g("c"))
                params, ts = scale_parameters(raw)
                return params.replace(dim=g("dim")), ts
            return ModelParams(chi=g("chi"), k=g("k"), alpha=g("alpha"), beta=g("beta"),
                               c=g("c"), dim=g("dim")), 1.0
        except DomainError as exc:
            raise ConfigError(f"[model] {exc}") from None

    def grid(self) -> Grid:
        dim = self.values[("model", "dim")]
        n = self.values[("grid", "n")]
        L = self.values[("grid", "length")]
        cells = [self.values[("grid", "nx")] or n, self.values[("grid", "ny")] or n][:dim]
        lengths = [self.values[("grid", "lx")] or L, self.values[("grid", "ly")] or L][:dim]
        try:
            return Grid(lengths=tuple(lengths), cells=tuple(cells))
        except DomainError as exc:
            raise ConfigError(f"[grid] {exc}") from None

    def stepper_config(self) -> StepperConfig:
        s = {k.name: self.values[("stepper", k.name)] for k in SCHEMA if k.section == "stepper"}
        try:
            return StepperConfig(**s)
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"[stepper] {exc}") from None

    def monitors(self, params: ModelParams) -> Monitors:
        ps = self.values[("diagnostics", "p")]
        qs = self.values[("diagnostics", "q")]
        default = default_monitors(params)
        if any(p < 1 for p in ps):
            raise ConfigError("[diagnostics] p values must be >= 1")
        if any(q < 1 for q in qs):
            raise ConfigError("[diagnostics] q values must be >= 1")
        return Monitors(ps=tuple(ps) or default.ps, qs=tuple(qs) or default.qs)

    def initial_fields(self, params: ModelParams, grid: Grid):
        from . import initial

        ic = lambda n: self.values[("ic", n)]  # noqa: E731
        recipe = ic("recipe")
        kwargs = {
            "constant": {"u_star": ic("u_star"), "v_star": ic("v_star")},
            "gaussian_bump": {"amplitude": ic("amplitude"), "width": ic("width")},
            "cosine_mode": {"mode": ic("mode"), "amplitude": ic("cos_amplitude"),
                            "base": ic("base")},
            "from_file": {"u_path": ic("u_path"), "v_path": ic("v_path")},
        }.get(recipe)
        if kwargs is None:
            raise ConfigError(f"[ic] recipe: unknown {recipe!r}; choose from {initial.RECIPES}")
        if recipe == "from_file" and (kwargs["u_path"] is None or kwargs["v_path"] is None):
            raise ConfigError("[ic] from_file needs u_path and v_path")
        try:
            u, v = initial.build(recipe, grid, params, **kwargs)
        except (DomainError, OSError) as exc:
            raise ConfigError(f"[ic] {exc}") from None
        noise = ic("noise")
        if noise:
            if not 0 <= noise < 1:
                raise ConfigError("[ic] noise must lie in [0, 1)")
            rng = np.random.default_rng(self.values[("run", "seed")])
            u = u * (1.0 + noise * rng.uniform(-1.0, 1.0, grid.shape))
        return u, v

    def validate(self):
        """Build every run object so precondition failures surface before a run."""
        params, _ = self.model_params()
        try:
            params.require_simulable()
        except DomainError as exc:
            raise ConfigError(f"[model] {exc}") from None
        grid = self.grid()
        stepper = self.stepper_config()
        monitors = self.monitors(params)
        u, v = self.initial_fields(params, grid)
        if not (np.any(u.values > 0) or np.any(v.values > 0)):
            raise ConfigError("[ic] initial data vanish identically")
        if self.values[("output", "snapshots")] not in ("none", "final", "all"):
            raise ConfigError("[output] snapshots must be none, final or all")
        if self.values[("output", "format")] not in ("bin", "csv"):
            raise ConfigError("[output] format must be bin or csv")
        return params, grid, stepper, monitors, (u, v)

    # ----------------------------------------------------------- text

    def to_ini(self) -> str:
        out = []
        for sec in SECTIONS:
            out.append(f"[{sec}]")
            for k in SCHEMA:
                if k.section == sec:
                    out.append(f"{k.name} = {_format_value(k, self.values[(sec, k.name)])}")
            out.append("")
        return "\n".join(out)


def _canonical(section: str, name: str) -> Key:
    key = _BY_NAME.get((section, name.lower()))
    if key is None:
        raise ConfigError(f"unknown key [{section}] {name}")
    return key


def _line_of(text: str, section: str, name: str) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(name)}\s*[=:]", s, re.IGNORECASE):
            return i
    return None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for name, raw in cp.items(sec):
            try:
                key = _canonical(sec, name)
                values[(sec, key.name)] = _parse_value(key, raw)
            except (ConfigError, ValueError) as exc:
                line = _line_of(text, sec, name)
                where = f"{source}:{line}" if line else source
                raise ConfigError(f"{where}: [{sec}] {name}: {exc}") from None
    return RunConfig(values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def float_list_repr(xs) -> str:
    return ", ".join("inf" if x == math.inf else format(x, "g") for x in xs)
