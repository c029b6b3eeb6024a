import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslog import diagnostics as diag
from kslog.grid import DomainError, Field, Grid
from kslog.initial import constant, gaussian_bump
from kslog.params import ModelParams, gradv_q_upper
from kslog.stepper import StepperConfig, simulate


def test_lp_constant():
    g = Grid.box(8, dim=2)
    assert diag.lp_norm(g.constant(2.0), 3) == pytest.approx(2.0, rel=1e-14)
    assert diag.lp_norm(g.constant(2.0), math.inf) == 2.0


def test_lp_cosine():
    g = Grid.box(256)
    assert diag.lp_norm(g.sample(lambda x: np.cos(np.pi * x)), 2) == pytest.approx(
        1 / math.sqrt(2), abs=1e-6)


def test_lp_rejects_small_p():
    with pytest.raises(DomainError):
        diag.lp_norm(Grid.box(8).constant(1.0), 0.5)


@given(st.integers(0, 2**31), st.floats(0.2, 3.0), st.floats(1.0, 8.0), st.floats(1.0, 8.0))
def test_lp_power_mean(seed, L, p1, p2):
    rng = np.random.default_rng(seed)
    g = Grid.box(16, length=L)
    f = g.field(rng.standard_normal(16))
    p1, p2 = min(p1, p2), max(p1, p2)
    vol = g.volume
    a = diag.lp_norm(f, p1) * vol ** (-1 / p1)
    b = diag.lp_norm(f, p2) * vol ** (-1 / p2)
    assert a <= b * (1 + 1e-12)
    assert diag.lp_norm(f, 1) <= diag.lp_norm(f, 2) * vol**0.5 * (1 + 1e-12)


def test_weighted_functional_examples():
    g = Grid.box(8, dim=2)
    one = g.constant(1.0)
    assert diag.weighted_functional(one, one, 2, 1.0) == pytest.approx(2**-0.5, rel=1e-14)
    assert diag.weighted_functional(g.constant(0.0), one, 2, 1.0) == 0.0
    rng = np.random.default_rng(0)
    u = g.field(rng.uniform(0, 2, g.shape))
    v = g.field(rng.uniform(0, 2, g.shape))
    mass = u.values.sum() * g.cell_volume
    assert diag.weighted_functional(u, v, 1 + 1e-9, 1.0) == pytest.approx(mass, rel=1e-8)
    with pytest.raises(DomainError):
        diag.weighted_functional(u, v, 1.0, 1.0)


def test_yp_bound_steady():
    series = [(t, 0.7) for t in np.linspace(0, 5, 11)]
    rep = diag.check_yp_bound(series, 1.0, 2.0)
    assert rep.passed and rep.max_ratio == 1.0


def test_yp_bound_violation():
    ts = np.linspace(0, 1, 11)
    series = [(t, 1.0) for t in ts]
    series[-1] = (1.0, 2.0)
    # bound at t = 1 is e^{0.5} < 2
    rep = diag.check_yp_bound(series, 1.0, 2.0)
    assert not rep.passed and rep.worst_t == 1.0


def test_yp_bound_degenerate():
    with pytest.raises(DomainError):
        diag.check_yp_bound([(0.0, 0.0), (1.0, 0.0)], 1.0, 2.0)
    with pytest.raises(DomainError):
        diag.check_yp_bound([], 1.0, 2.0)


def test_holder_constant_equality():
    g = Grid.box(8, dim=2, length=1.7)
    lhs, rhs, ok = diag.holder_interpolation_check(g.constant(1.3), g.constant(0.4), 2.5, 0.9)
    assert ok and abs(lhs - rhs) <= 1e-12 * rhs


def test_holder_zero():
    g = Grid.box(8)
    lhs, rhs, ok = diag.holder_interpolation_check(g.constant(0.0), g.constant(1.0), 2.0, 1.0)
    assert lhs == 0 and ok


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.floats(1.01, 8.0), st.floats(0.05, 5.0), st.integers(1, 2))
def test_holder_random(seed, p, c, dim):
    rng = np.random.default_rng(seed)
    g = Grid.box(8, dim=dim)
    u = g.field(rng.exponential(1.0, g.shape))
    v = g.field(rng.exponential(2.0, g.shape))
    assert diag.holder_interpolation_check(u, v, p, c)[2]


def test_grad_norms():
    g = Grid.box(512)
    v = g.sample(lambda x: np.cos(np.pi * x))
    assert diag.grad_lq_norm(g.constant(3.0), 2) == 0
    assert diag.grad_lq_norm(v, math.inf) == pytest.approx(math.pi, rel=1e-4)
    assert diag.grad_lq_norm(v, 2) == pytest.approx(math.pi / math.sqrt(2), rel=1e-4)
    with pytest.raises(DomainError):
        diag.grad_lq_norm(v, 0.5)


def test_running_max():
    assert diag.running_m_tau([(0, 1), (1, 2), (2, 1.5)]) == [(0, 1), (1, 2), (2, 2)]
    const = [(t, 3.0) for t in range(4)]
    assert diag.running_m_tau(const) == const
    mono = [(t, float(t)) for t in range(4)]
    assert diag.running_m_tau(mono) == mono
    with pytest.raises(DomainError):
        diag.running_m_tau([(1, 1), (0, 2)])


def test_default_monitors():
    strong = diag.default_monitors(ModelParams(chi=0.5))
    assert strong.ps == (2.0, 2.5) and strong.qs == (2.0, math.inf)
    border = diag.default_monitors(ModelParams(chi=0.8))
    assert 0.9 * gradv_q_upper(ModelParams(chi=0.8)) in border.qs
    unbounded = diag.default_monitors(ModelParams(chi=1.0, k=3.0))
    assert diag.UNBOUNDED_P_CAP in unbounded.ps
    outside = diag.default_monitors(ModelParams(chi=1.5))
    assert outside.ps == (2.0,)


def test_header_matches_rows(tmp_path):
    params = ModelParams(chi=0.8)
    g = Grid.box(16, dim=2)
    u, v = gaussian_bump(g, params)
    res = simulate(u, v, params, StepperConfig(t_end=0.3))
    diag.write_diagnostics_csv(res.series, res.monitors, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["t", "mass", "sup_u", "sup_v"] and header[-1] == "m_tau"
    assert all(len(line.split(",")) == len(header) for line in lines[1:])
    assert len(lines) == len(res.series) + 1


def test_monitors_on_steady_run():
    params = ModelParams(chi=0.5)
    g = Grid.box(16, dim=2)
    u, v = constant(g, params)
    res = simulate(u, v, params, StepperConfig(t_end=2.0))
    for p in res.monitors.ps:
        assert diag.check_yp_bound(diag.yp_series(res.series, p), params.alpha, p).passed


@pytest.mark.parametrize("chi", [0.3, 0.5, 0.8])
def test_monitors_inside_region(chi):
    params = ModelParams(chi=chi)
    g = Grid.box(32, dim=2)
    u, v = gaussian_bump(g, params)
    res = simulate(u, v, params, StepperConfig(t_end=2.0))
    for p in res.monitors.ps:
        assert diag.check_yp_bound(diag.yp_series(res.series, p), params.alpha, p).passed
    m = diag.running_m_tau([(r.t, r.sup_v) for r in res.series])
    half = [val for t, val in m if t >= 1.0]
    assert math.isfinite(m[-1][1]) and half[-1] <= 1.05 * half[0]
    for q in res.monitors.qs:
        assert all(math.isfinite(r.grad_v_lq[q]) for r in res.series)


def test_record_state_matches_measure():
    g = Grid.box(8, dim=2)
    rng = np.random.default_rng(2)
    u = g.field(rng.uniform(0, 1, g.shape))
    v = g.field(rng.uniform(0, 1, g.shape))
    mons = diag.Monitors()
    r = diag.record_state(u, v, 0.0, 1.0, mons)
    assert r.mass == pytest.approx(u.values.sum() * g.cell_volume)
    assert r.lp_u[2.0] == pytest.approx(diag.lp_norm(u, 2))
    assert r.grad_v_lq[math.inf] == pytest.approx(diag.grad_lq_norm(v, math.inf))
    assert isinstance(r, diag.DiagRecord) and isinstance(u, Field)
