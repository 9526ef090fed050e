import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqswap.errors import ContractViolation, ParameterDomainError, TruncationError
from freqswap.spectral import (
    AmplitudeMatrix,
    JsaParams,
    SpectralGrid,
    blur_jsa,
    build_jsa,
    default_grids,
    edge_mass,
    overlap_integral,
    reduced_density,
    schmidt_decompose,
)
from freqswap.units import domega_dlambda, nm_to_omega, omega_to_nm, width_nm_to_omega

W0 = float(nm_to_omega(830.0))

# frozen from a scipy dblquad of the unnormalized shipped JSA (independent of the package)
NORM2_SHIPPED = 29.315852446781676


def p_with(r, ss=0.6, si=1.7):
    return JsaParams(W0, ss, si, r / (2 * ss * si))


correlations = st.floats(-0.95, 0.95)


def test_grid_contract():
    g = SpectralGrid(1.0, 2.0, 5)
    assert g.step == pytest.approx(0.5)
    assert np.all(np.diff(g.points) > 0)
    with pytest.raises(ContractViolation):
        SpectralGrid(1.0, 2.0, 1)
    with pytest.raises(ContractViolation):
        SpectralGrid(1.0, 0.0, 8)


def test_params_domain():
    with pytest.raises(ParameterDomainError, match="positive-definite"):
        JsaParams(W0, 0.5, 2.0, 0.5)
    with pytest.raises(ParameterDomainError):
        JsaParams(W0, -0.5, 2.0, 0.0)
    with pytest.raises(ParameterDomainError):
        JsaParams(W0, 0.5, 2.0, 0.0, eta=0.5)


def test_units_round_trip():
    lam = np.linspace(800, 860, 7)
    np.testing.assert_allclose(omega_to_nm(nm_to_omega(lam)), lam, rtol=1e-14)
    # finite-difference Jacobian
    h = 1e-4
    fd = -(nm_to_omega(830 + h) - nm_to_omega(830 - h)) / (2 * h)
    assert domega_dlambda(830.0) == pytest.approx(fd, rel=1e-8)
    assert width_nm_to_omega(1.5, 830.0) == pytest.approx(1.5 * fd, rel=1e-8)


def test_separable_rank_one():
    p = JsaParams(W0, 0.5, 2.0, 0.0)
    jsa = build_jsa(p, *default_grids(p))
    s = np.linalg.svd(jsa.values * np.sqrt(jsa.cell), compute_uv=False)
    assert s[1] < 1e-10
    assert schmidt_decompose(jsa).K == pytest.approx(1.0, abs=1e-6)
    assert reduced_density(jsa, "idler").purity() == pytest.approx(1.0, abs=1e-8)


def test_equal_widths_symmetric():
    p = JsaParams(W0, 0.9, 0.9, 0.3)
    g, _ = default_grids(p)
    jsa = build_jsa(p, g, g)
    np.testing.assert_array_equal(jsa.values, jsa.values.T)
    rs = reduced_density(jsa, "signal").values
    ri = reduced_density(jsa, "idler").values
    assert np.max(np.abs(rs - ri)) < 1e-10


def test_normalization_matches_closed_form(params, grids):
    jsa = build_jsa(params, *grids)
    assert jsa.norm2() == pytest.approx(1.0, abs=1e-10)
    # analytic amplitude integrates to one against the independent quadrature value
    assert params.norm_const ** -2 == pytest.approx(NORM2_SHIPPED, rel=1e-10)
    raw = np.sum(np.abs(params.amplitude(grids[0].points[:, None], grids[1].points[None, :])) ** 2) * jsa.cell
    # short of one only by the analytic tail mass outside +-6 marginal std
    assert raw == pytest.approx(1.0, abs=1e-8)


def test_truncation_error(params):
    gs, gi = default_grids(params, 256, 2.0)
    assert edge_mass(params, gs, gi) > 1e-4
    with pytest.raises(TruncationError):
        build_jsa(params, gs, gi)


def test_reduced_density_contract(params, grids):
    jsa = build_jsa(params, *grids)
    bad = AmplitudeMatrix(jsa.grid_row, jsa.grid_col, 2 * jsa.values)
    with pytest.raises(ContractViolation):
        reduced_density(bad)
    with pytest.raises(ContractViolation):
        schmidt_decompose(bad)


def test_purity_equals_inverse_schmidt(params, grids):
    jsa = build_jsa(params, *grids)
    K = schmidt_decompose(jsa).K
    for side in ("signal", "idler"):
        pur = reduced_density(jsa, side).purity()
        assert pur == pytest.approx(1 / K, rel=1e-8)
    assert 1 / K == pytest.approx(0.25, abs=0.02)


def test_schmidt_matches_analytic(params, grids):
    K = schmidt_decompose(build_jsa(params, *grids)).K
    assert K == pytest.approx(1 / np.sqrt(1 - params.correlation**2), rel=1e-7)


def test_grid_convergence_under_doubling(params):
    k1 = schmidt_decompose(build_jsa(params, *default_grids(params, 256))).K
    k2 = schmidt_decompose(build_jsa(params, *default_grids(params, 511))).K
    assert abs(k1 - k2) / k2 < 1e-4


def test_blurred_schmidt(params, grids):
    from freqswap.fit import blurred_schmidt_number

    blur = float(width_nm_to_omega(0.5, 830.0))
    k_num = schmidt_decompose(blur_jsa(build_jsa(params, *grids), blur, blur)).K
    assert k_num == pytest.approx(blurred_schmidt_number(params, blur, blur), rel=1e-4)
    assert 2.7 <= k_num <= 3.1


def test_gaussian_overlap_closed_form():
    g = SpectralGrid(0.0, 24.0, 2001)
    s, d = 0.7, 0.9

    def unit(m):
        return (2 * np.pi * s**2) ** -0.25 * np.exp(-((g.points - m) ** 2) / (4 * s**2))

    ov = overlap_integral(unit(0.0), unit(d), g.step)
    assert ov.real == pytest.approx(np.exp(-(d**2) / (8 * s**2)), abs=1e-10)
    assert overlap_integral(unit(0.3), unit(0.3), g.step).real == pytest.approx(1.0, abs=1e-10)
    e = np.eye(3)
    assert overlap_integral(e[0], e[1], 1.0) == 0


def test_overlap_grid_mismatch(params):
    a = build_jsa(params, *default_grids(params, 64))
    b = build_jsa(params, *default_grids(params, 65))
    with pytest.raises(ContractViolation):
        overlap_integral(a, b)
    with pytest.raises(ContractViolation):
        overlap_integral(np.ones(3), np.ones(4), 1.0)


@given(correlations)
def test_prop_density_invariants(r):
    p = p_with(r)
    jsa = build_jsa(p, *default_grids(p, 96))
    assert jsa.norm2() == pytest.approx(1.0, abs=1e-10)
    for side in ("signal", "idler"):
        rho = reduced_density(jsa, side)
        assert np.max(np.abs(rho.values - rho.values.conj().T)) < 1e-12
        assert rho.trace() == pytest.approx(1.0, abs=1e-10)
        assert rho.eigenvalues().min() > -1e-10


@given(correlations)
def test_prop_schmidt(r):
    p = p_with(r)
    jsa = build_jsa(p, *default_grids(p, 128))
    sr = schmidt_decompose(jsa)
    assert np.sum(sr.coefficients) == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(sr.coefficients) <= 1e-15)
    assert sr.K >= 1 - 1e-12
    assert 1 / sr.K == pytest.approx(reduced_density(jsa, "idler").purity(), rel=1e-6)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_prop_overlap_conjugate_symmetric(x, y):
    g = SpectralGrid(0.0, 10.0, 101)
    a = np.exp(-((g.points - x) ** 2)) * np.exp(1j * g.points)
    b = np.exp(-((g.points - y) ** 2) / 2) * np.exp(-0.5j * g.points)
    assert overlap_integral(a, b, g.step) == pytest.approx(np.conj(overlap_integral(b, a, g.step)), abs=1e-14)
