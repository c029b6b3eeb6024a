import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslog.grid import DomainError, Grid
from kslog.initial import constant, cosine_mode, gaussian_bump
from kslog.params import ModelParams
from kslog.semigroup import (
    ContractionError,
    SpectralField,
    apply_semigroup,
    barycentric_matrix,
    chebyshev_nodes,
    cross_validate,
    default_test_set,
    eigenmode_fields,
    first_nonzero_eigenvalue,
    from_spectral,
    laplace_eigenvalues,
    measure_smoothing_constant,
    picard_solve,
    random_fields,
    spectral_divergence,
    spectral_gradient,
    to_spectral,
)


def test_constant_is_zero_mode():
    s = to_spectral(Grid.box(16, dim=2).constant(3.0))
    c = s.coeffs.ravel()
    assert abs(c[0]) > 0 and np.abs(c[1:]).max() < 1e-13


def test_cosine_is_single_mode():
    g = Grid.box(32)
    s = to_spectral(g.sample(lambda x: np.cos(np.pi * x)))
    c = np.abs(s.coeffs)
    assert c.argmax() == 1
    assert np.delete(c, 1).max() < 1e-13


@given(st.integers(0, 2**31), st.integers(1, 2))
def test_transform_roundtrip(seed, dim):
    rng = np.random.default_rng(seed)
    g = Grid((1.0, 2.0)[:dim], (12, 20)[:dim])
    f = g.field(rng.standard_normal(g.shape))
    assert np.abs(from_spectral(to_spectral(f)).values - f.values).max() < 1e-12


def test_eigenvalues():
    g = Grid((1.0, 2.0), (8, 8))
    lam = laplace_eigenvalues(g)
    assert lam[0, 0] == 0
    assert lam[1, 0] == pytest.approx(math.pi**2)
    assert lam[0, 1] == pytest.approx(math.pi**2 / 4)
    assert first_nonzero_eigenvalue(Grid.box(16)) == math.pi**2


def test_semigroup_identity_and_decay():
    g = Grid.box(64)
    f = g.sample(lambda x: np.cos(np.pi * x))
    s = to_spectral(f)
    assert np.array_equal(apply_semigroup(s, 0.0).coeffs, s.coeffs)
    out = from_spectral(apply_semigroup(s, 0.1)).values
    assert np.allclose(out, math.exp(-math.pi**2 * 0.1) * f.values, atol=1e-14)
    assert math.exp(-math.pi**2 * 0.1) == pytest.approx(0.37268, abs=1e-4)
    c = to_spectral(g.constant(2.0))
    assert np.allclose(from_spectral(apply_semigroup(c, 0.7, shift=1.0)).values,
                       2 * math.exp(-0.7), atol=1e-14)
    with pytest.raises(DomainError):
        apply_semigroup(s, -1.0)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31))
def test_semigroup_property(t1, t2, seed):
    rng = np.random.default_rng(seed)
    g = Grid.box(16, dim=2)
    s = to_spectral(g.field(rng.standard_normal(g.shape)))
    a = apply_semigroup(s, t1 + t2, k=1.5, shift=0.3).coeffs
    b = apply_semigroup(apply_semigroup(s, t1, k=1.5, shift=0.3), t2, k=1.5, shift=0.3).coeffs
    assert np.abs(a - b).max() <= 1e-13 * max(1.0, np.abs(s.coeffs).max())


@settings(max_examples=30)
@given(st.floats(1e-4, 2), st.integers(0, 2**31))
def test_heat_positivity_and_mass(t, seed):
    # resolved nonnegative data; grid-scale jumps show Gibbs-type undershoot
    rng = np.random.default_rng(seed)
    g = Grid.box(32)
    x = g.centers()[0]
    centres = rng.uniform(0, 1, 3)
    widths = rng.uniform(0.1, 0.3, 3)
    f = g.field(sum(np.exp(-(((x - c) / w) ** 2)) for c, w in zip(centres, widths)))
    s = to_spectral(f)
    out = apply_semigroup(s, t)
    assert from_spectral(out).values.min() >= -1e-10 * max(1.0, f.values.max())
    assert out.coeffs[0] == s.coeffs[0]


def test_spectral_gradient_divergence():
    g = Grid.box(64)
    f = g.sample(lambda x: np.cos(2 * np.pi * x))
    (grad,) = spectral_gradient(to_spectral(f).coeffs, g)
    x = g.centers()[0]
    assert np.allclose(grad, -2 * np.pi * np.sin(2 * np.pi * x), atol=1e-10)
    lap = spectral_divergence([grad], g)
    assert np.allclose(lap, -(2 * np.pi) ** 2 * to_spectral(f).coeffs, atol=1e-8)


# --------------------------------------------------------- smoothing


def test_gradient_estimate_eigenmodes():
    g = Grid.box(256)
    ts = np.geomspace(1e-3, 10, 200)
    rep = measure_smoothing_constant(math.inf, math.inf, 0.5, 1.0, eigenmode_fields(g), ts,
                                     estimate="gradient")
    assert rep.nu == math.pi**2
    assert math.isfinite(rep.constant) and rep.refinement_ratio < 1.05
    json.loads(rep.to_json())


def test_gradient_estimate_first_mode_closed_form():
    # for w = cos(pi x) the ratio is pi e^{-pi^2 t} / ((1 + t^{-1/2}) e^{-pi^2 t})
    g = Grid.box(512)
    ts = np.geomspace(1e-3, 10, 50)
    rep = measure_smoothing_constant(math.inf, math.inf, 0.5, 1.0, eigenmode_fields(g, 1), ts,
                                     estimate="gradient")
    expect = max(math.pi / (1 + t**-0.5) for t in ts)
    assert rep.constant == pytest.approx(expect, rel=1e-3)


def test_mean_zero_estimate_rejects_constants():
    g = Grid.box(32)
    with pytest.raises(DomainError):
        measure_smoothing_constant(2, 2, 0.5, 1.0, [g.constant(1.0)], [0.1, 1.0],
                                   estimate="fractional_mean_zero")


def test_mean_zero_estimate_finite():
    g = Grid.box(64)
    rep = measure_smoothing_constant(2, 2, 0.5, 1.0, eigenmode_fields(g),
                                     np.geomspace(1e-3, 10, 60), estimate="fractional_mean_zero")
    assert rep.passed and math.isfinite(rep.constant)


def test_fractional_degenerate_theta():
    # theta -> 0, p = q: e^{-A t} on mode lambda decays as e^{-(lambda+1) t}
    g = Grid.box(64)
    rep = measure_smoothing_constant(2, 2, 1e-9, 1.0, eigenmode_fields(g, 3),
                                     np.geomspace(1e-3, 5, 40), estimate="fractional")
    assert math.isfinite(rep.constant) and rep.constant >= 1.0 - 1e-6


def test_smoothing_validation():
    g = Grid.box(16)
    with pytest.raises(DomainError):
        measure_smoothing_constant(2, 1, 0.5, 1.0, eigenmode_fields(g), [0.1, 1.0])
    with pytest.raises(DomainError):
        measure_smoothing_constant(2, 2, 1.5, 1.0, eigenmode_fields(g), [0.1, 1.0])
    with pytest.raises(DomainError):
        measure_smoothing_constant(2, 2, 0.5, 1.0, eigenmode_fields(g), [0.0, 1.0])
    with pytest.raises(DomainError):
        measure_smoothing_constant(2, 2, 0.5, 1.0, eigenmode_fields(g), [0.1, 1.0], "other")


def test_test_set_reproducible():
    g = Grid.box(16, dim=2)
    a = default_test_set(g)
    b = default_test_set(g)
    assert len(a) == 32 + 80
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert len(random_fields(g)) == 32


# ------------------------------------------------------------ Picard


def test_chebyshev_interpolation_exact_for_polynomials():
    nodes = chebyshev_nodes(0.5, 9)
    assert nodes[0] == 0 and nodes[-1] == 0.5
    targets = np.linspace(0, 0.5, 23)
    P = barycentric_matrix(nodes, targets)
    assert np.allclose(P @ nodes**5, targets**5, atol=1e-13)


def test_picard_constant_fixed_point():
    params = ModelParams(chi=0.0, dim=1)
    g = Grid.box(32)
    u0, v0 = constant(g, params, u_star=2.0)
    res = picard_solve(u0, v0, params, 0.1, n_iter=4)
    assert res.differences[1] < 1e-10
    assert np.allclose(res.u_final.values, 2.0, atol=1e-12)


def test_picard_chi0_nonsteady_v():
    # chi = 0, u0 constant, v0 = 0: v(t) = u0 (1 - e^{-t}) exactly
    params = ModelParams(chi=0.0, dim=1)
    g = Grid.box(16)
    res = picard_solve(g.constant(1.5), g.constant(0.0), params, 0.2, n_iter=6)
    assert np.allclose(res.v_final.values, 1.5 * (1 - math.exp(-0.2)), atol=1e-10)


def test_picard_steady_any_chi():
    params = ModelParams(chi=3.0)
    g = Grid.box(16, dim=2)
    u0, v0 = constant(g, params)
    res = picard_solve(u0, v0, params, 0.05, n_iter=3)
    assert res.differences[1] < 1e-10


def test_picard_contraction():
    params = ModelParams(chi=0.5, dim=1)
    g = Grid.box(128)
    u0, v0 = gaussian_bump(g, params)
    res = picard_solve(u0, v0, params, 0.01)
    assert res.ratios and all(r < 0.5 for r in res.ratios)
    payload = json.loads(res.to_json(chi=0.5))
    assert payload["chi"] == 0.5 and payload["max_ratio_from_2"] < 0.5


def test_picard_linear_exact():
    # chi = 0 cosine data: the mild solution is exact to quadrature accuracy
    params = ModelParams(chi=0.0, dim=1)
    g = Grid.box(32)
    u0, v0 = cosine_mode(g, params)
    res = picard_solve(u0, v0, params, 0.1, n_iter=8)
    x = g.centers()[0]
    expect = 1.0 + 0.5 * np.cos(np.pi * x) * math.exp(-math.pi**2 * 0.1)
    assert np.allclose(res.u_final.values, expect, atol=1e-12)


def test_picard_validation():
    g = Grid.box(8)
    params = ModelParams(chi=0.5, dim=1)
    with pytest.raises(DomainError):
        picard_solve(g.constant(1.0), g.constant(1.0), params, 0.0)
    with pytest.raises(DomainError):
        picard_solve(g.constant(1.0), g.constant(1.0), params, 0.1, n_iter=1)
    with pytest.raises(DomainError):
        picard_solve(g.constant(1.0), Grid.box(16).constant(1.0), params, 0.1)


def test_picard_divergence_detected():
    params = ModelParams(chi=200.0, dim=1)
    g = Grid.box(64)
    u0, v0 = gaussian_bump(g, params, amplitude=200, width=0.03)
    with pytest.raises(ContractionError):
        picard_solve(u0, v0, params, 1.0, n_iter=12)


# -------------------------------------------------- cross-validation


def test_cross_validate_steady():
    params = ModelParams(chi=0.5, dim=1)
    g = Grid.box(32)
    u0, v0 = constant(g, params)
    cv = cross_validate(u0, v0, params, 0.01)
    assert cv.discrepancy_u < 1e-10 and cv.discrepancy_v < 1e-10


def test_cross_validate_linear_first_order():
    params = ModelParams(chi=0.0, dim=1)
    g = Grid.box(64)
    u0, v0 = cosine_mode(g, params)
    a = cross_validate(u0, v0, params, 0.05, dt=1e-3)
    b = cross_validate(u0, v0, params, 0.05, dt=5e-4)
    assert 1.6 < a.discrepancy_u / b.discrepancy_u < 2.4


def test_spectral_field_type():
    g = Grid.box(8)
    s = to_spectral(g.constant(1.0))
    assert isinstance(s, SpectralField) and s.grid == g
