"""Model parameters, scaling, and the analytic region machinery.

Everything here is a pure function of its arguments.  Unbounded interval
endpoints are represented by ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """An argument falls outside the mathematical domain of an operation."""


class EmptyIntervalError(DomainError):
    pass


class IterationOverflowError(RuntimeError):
    pass


SIGN_TOL = 1e-10
DEFAULT_MAX_ITERS = 10_000


@dataclass(frozen=True)
class RawParams:
    """Coefficients of the unscaled system (d1, d2, chi0, c1, c2, c)."""

    d1: float
    d2: float
    chi0: float
    c1: float
    c2: float
    c: float

    def __post_init__(self):
        for name in ("d1", "d2", "chi0", "c1", "c2", "c"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive, got {val!r}")


@dataclass(frozen=True)
class ModelParams:
    chi: float
    k: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    c: float = 1.0
    dim: int = 2

    def __post_init__(self):
        for name in ("k", "alpha", "beta", "c"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive, got {val!r}")
        if not np.isfinite(self.chi):
            raise DomainError(f"chi must be finite, got {self.chi!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be an integer >= 1, got {self.dim!r}")

    @property
    def shift(self) -> float:
        """Distance of chi from the parabola vertex (k - 1) / 2."""
        return self.chi - (self.k - 1.0) / 2.0

    def require_simulable(self) -> None:
        if self.chi < 0:
            raise DomainError("simulation requires chi >= 0 (chemoattraction)")
        if self.dim not in (1, 2):
            raise DomainError(f"simulation supports dim 1 or 2, got {self.dim}")

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Thresholds:
    k1: float
    k2: float
    chi1: float
    chi2: float


class RegionLabel(str, Enum):
    STRONG = "StrongRegion"
    BORDER = "BorderRegion"
    OUTSIDE = "Outside"


@dataclass(frozen=True)
class RegionVerdict:
    in_iplus_half_n: bool
    in_iplus_n: bool
    theorem_applies: bool
    label: RegionLabel


def scale_parameters(raw: RawParams) -> tuple[ModelParams, float]:
    """Nondimensionalize by the cell motility.

    Returns the scaled parameters and the time scale ``d1`` such that the
    scaled time is ``d1 * t``.  The returned ``dim`` defaults to 2.
    """
    params = ModelParams(
        chi=raw.chi0 / raw.d1,
        k=raw.d2 / raw.d1,
        alpha=raw.c1 / raw.d1,
        beta=raw.c2 / raw.d1,
        c=raw.c,
    )
    return params, raw.d1


def unscale_parameters(params: ModelParams, time_scale: float) -> RawParams:
    d1 = time_scale
    return RawParams(
        d1=d1,
        d2=params.k * d1,
        chi0=params.chi * d1,
        c1=params.alpha * d1,
        c2=params.beta * d1,
        c=params.c,
    )


def f_indicator(p: float, chi: float, k: float) -> float:
    """The quadratic indicator (chi - (k-1)/2)^2 - k/p."""
    if not p > 0:
        raise DomainError(f"p must be positive, got {p!r}")
    if not k > 0:
        raise DomainError(f"k must be positive, got {k!r}")
    return (chi - (k - 1.0) / 2.0) ** 2 - k / p


def thresholds(N: int, k: float) -> Thresholds:
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N!r}")
    if not k > 0:
        raise DomainError(f"k must be positive, got {k!r}")
    root = 2.0 * math.sqrt(2.0 / N + 4.0 / N**2)
    centre = 1.0 + 4.0 / N
    half_width = math.sqrt(2.0 * k / N)
    vertex = (k - 1.0) / 2.0
    return Thresholds(
        k1=centre - root,
        k2=centre + root,
        chi1=vertex - half_width,
        chi2=vertex + half_width,
    )


def in_iplus(p: float, params: ModelParams) -> bool:
    return params.chi > 0 and f_indicator(p, params.chi, params.k) < 0


def classify_region(params: ModelParams) -> RegionVerdict:
    N = params.dim
    half = in_iplus(N / 2.0, params)
    full = in_iplus(float(N), params)
    th = thresholds(N, params.k)
    chi, k = params.chi, params.k
    applies = (th.k1 < k < th.k2 and 0 < chi < th.chi2) or (
        k >= th.k2 and th.chi1 < chi < th.chi2
    )
    if full:
        label = RegionLabel.STRONG
    elif half:
        label = RegionLabel.BORDER
    else:
        label = RegionLabel.OUTSIDE
    return RegionVerdict(
        in_iplus_half_n=half, in_iplus_n=full, theorem_applies=applies, label=label
    )


def admissible_p_interval(params: ModelParams) -> tuple[float, float]:
    """Open interval of exponents p for which the weighted L^p estimate holds."""
    lo = params.dim / 2.0
    s2 = params.shift**2
    hi = math.inf if s2 == 0.0 else params.k / s2
    if params.chi <= 0 or not hi > lo:
        raise EmptyIntervalError(
            f"chi={params.chi} is outside I+(N/2); p-interval ({lo}, {hi}) is empty"
        )
    return lo, hi


def gradv_q_upper(params: ModelParams) -> float:
    """Supremum of exponents q with a time-local bound on the L^q norm of grad v."""
    if not in_iplus(params.dim / 2.0, params):
        raise DomainError(f"chi={params.chi} is outside I+(N/2)")
    denom = params.shift**2 - params.k / params.dim
    if denom < 0:
        return math.inf
    if denom == 0:
        # boundary of I+(N): the (.)^+ convention gives +inf
        return math.inf
    return params.k / denom


def bootstrap_gap(params: ModelParams) -> float:
    """2/N - (chi - (k-1)/2)^2 / k, the per-step gain in 1/mu."""
    return 2.0 / params.dim - params.shift**2 / params.k


def bootstrap_sequence(
    mu1: float, params: ModelParams, max_iters: int = DEFAULT_MAX_ITERS
) -> list[float]:
    """Exponent sequence lifting L^mu control of u towards L^infinity.

    The sequence is returned up to and including its first infinite entry.
    """
    N = params.dim
    verdict = classify_region(params)
    if verdict.label is not RegionLabel.BORDER:
        raise DomainError(
            f"bootstrap needs chi in I+(N/2) minus I+(N); got {verdict.label.value}"
        )
    gap = bootstrap_gap(params)
    # gap > 0 in the border region because f(N/2) < 0
    upper = 1.0 / gap
    if not (N / 2.0 < mu1 < upper):
        raise DomainError(f"mu1 must lie in ({N / 2.0}, {upper}), got {mu1!r}")
    seq = [float(mu1)]
    for _ in range(max_iters):
        mu = seq[-1]
        if mu >= upper:
            seq.append(math.inf)
            return seq
        seq.append(1.0 / (1.0 / mu - gap))
    raise IterationOverflowError(
        f"bootstrap did not reach infinity within {max_iters} iterations"
    )


def eq16_lhs(p: float, params: ModelParams, v: np.ndarray) -> np.ndarray:
    """Combined |grad v|^2 coefficient after Young's inequality, per unit u^p.

    Uses the weight (v+c)^((1-p)/2) and sensitivity chi/(v+c).
    """
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError("v samples must be nonnegative")
    w = v + params.c
    phi = w ** ((1.0 - p) / 2.0)
    dphi = (1.0 - p) / 2.0 * w ** (-(p + 1.0) / 2.0)
    ddphi = (p * p - 1.0) / 4.0 * w ** (-(p + 3.0) / 2.0)
    sens = params.chi / w
    k = params.k
    cross = (p - 1.0) * phi * sens - (k + 1.0) * dphi
    return cross**2 / (4.0 * (p - 1.0) * phi) + (dphi * sens - k / p * ddphi)


def _sign(x: float, tol: float) -> int:
    if abs(x) < tol:
        return 0
    return 1 if x > 0 else -1


def verify_eq16_equivalence(
    p: float, params: ModelParams, v_samples: Sequence[float], tol: float = SIGN_TOL
) -> bool:
    """True iff the substituted coefficient has the sign of f(p) at every sample."""
    lhs = eq16_lhs(p, params, np.asarray(v_samples, dtype=float))
    target = _sign(f_indicator(p, params.chi, params.k), tol)
    return all(_sign(float(x), tol) == target for x in lhs)
