import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import omegas
from freqswap.errors import InvalidBackgroundError, NullStateError
from freqswap.filters import FilterBank, default_bank
from freqswap.mixed import (
    BackgroundModel,
    background_correct,
    fringe_visibility,
    heralded_purity_gaussian,
    mismatched_fringe,
    mixed_herald_probability,
    mixed_heralded_state,
    mixed_integrated_fringe,
    mixed_observables,
    purity_and_hom,
    shift_for_overlap,
    source_mismatch,
    unresolved_bank,
)
from freqswap.pure import (
    FringeCurve,
    conditional_mode,
    default_tau,
    fringe_pure,
    heralded_jsi,
    herald_probability,
    integrated_closed_forms,
)
from freqswap.spectral import SpectralGrid, build_jsa, default_grids, overlap_integral

# oracle: 2-D scipy dblquad of the filter-weighted herald density (1.5 nm gaussian filters)
MIXED_P_DBLQUAD = {
    (0, 0): 2.219547010072411e-4,
    (0, 1): 4.867353490953156e-4,
    (-1, 1): 7.363159062090094e-4,
    (-2, 2): 4.297996412770275e-4,
}


def test_delta_reduces_to_pure(params, grids, delta_bank, tau):
    for j, k in [(-1, 1), (-4, 2), (0, 3)]:
        Oj, Ok = omegas(delta_bank, j, k)
        pm = mixed_herald_probability(params, delta_bank, j, k, grids[0])
        pp = herald_probability(params, Oj, Ok, grids[0])
        assert pm == pytest.approx(pp, rel=1e-10)
        st_ = mixed_heralded_state(params, delta_bank, j, k, grids[0])
        assert len(st_) == 1
        ob = mixed_observables(st_, grids, tau)
        F = heralded_jsi(params, Oj, Ok, grids[0]).intensity()
        assert np.max(np.abs(ob.F - F)) <= 1e-10 * F.max()
        P = fringe_pure(params, Oj, Ok, tau, "exact", grids[0]).probability
        assert np.max(np.abs(ob.fringe.probability - P)) < 1e-10


def test_mixed_probability_quadrature_oracle(params, grids):
    bank = default_bank("gaussian", 1.5, 16)
    for (j, k), ref in MIXED_P_DBLQUAD.items():
        assert mixed_herald_probability(params, bank, j, k, grids[0]) == pytest.approx(ref, rel=1e-8)


def test_node_count_convergence(params, grids):
    b8 = default_bank("gaussian", 1.5, 8)
    b16 = default_bank("gaussian", 1.5, 16)
    for j, k in [(0, 0), (0, 1), (-3, 2), (4, 4)]:
        a = mixed_herald_probability(params, b8, j, k, grids[0])
        b = mixed_herald_probability(params, b16, j, k, grids[0])
        assert abs(a - b) / b < 1e-4


def test_diagonal_ridge(params, gauss_bank, grids):
    for j in gauss_bank.labels:
        pjj = mixed_herald_probability(params, gauss_bank, j, j, grids[0])
        assert pjj > 0
        for k in (j - 1, j + 1):
            if k in gauss_bank.labels:
                assert pjj < mixed_herald_probability(params, gauss_bank, j, k, grids[0])


def test_width_to_zero_limit(params, grids, delta_bank):
    Oj, Ok = omegas(delta_bank, -1, 2)
    ref = herald_probability(params, Oj, Ok, grids[0])
    errs = [
        abs(mixed_herald_probability(params, default_bank("gaussian", w, 8), -1, 2, grids[0]) - ref)
        for w in (1.5, 0.15, 0.015)
    ]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / ref < 1e-4


def test_fidelity_narrow_filters(params, delta_bank, grids):
    bank = FilterBank(delta_bank.centers, 1e-3 * params.sigma_i, "gaussian", 8, delta_bank.labels)
    for j, k in [(-2, 2), (-1, 0), (1, 4)]:
        st_ = mixed_heralded_state(params, bank, j, k, grids[0])
        Oj, Ok = omegas(delta_bank, j, k)
        a = conditional_mode(params, Oj, grids[0]).amplitude
        b = conditional_mode(params, Ok, grids[0]).amplitude
        assert st_.fidelity(a, b) > 0.999


def _brute_kernel(params, bank, j, k, grid):
    """rho(w1,w2;w1',w2') by explicit loops over filter nodes and grid points."""
    w = grid.points
    dw = grid.step
    n = len(w)

    def f(x, y):
        xs, yi = x - params.omega0, y - params.omega0
        e = -(xs / (2 * params.sigma_s)) ** 2 - (yi / (2 * params.sigma_i)) ** 2 - params.alpha * xs * yi
        return np.exp(e)

    xj, wj = bank.nodes(bank.index(j))
    xk, wk = bank.nodes(bank.index(k))
    K = np.zeros((n, n, n, n))
    p = 0.0
    for m in range(len(xj)):
        for q in range(len(xk)):
            fa = f(w, xj[m])
            fb = f(w, xk[q])
            g = np.outer(fa, fb) - np.outer(fb, fa)
            K += wj[m] * wk[q] * g[:, :, None, None] * g[None, None, :, :]
            p += wj[m] * wk[q] * 0.5 * np.sum(g * g) * dw * dw
    # normalization constant of f cancels between kernel and p
    return K.reshape(n * n, n * n) / (2 * p)


def test_kernel_brute_force_small_grid(params):
    g = SpectralGrid(params.center_s, 12 * params.marginal_std_s, 32)
    bank = default_bank("gaussian", 1.5, 4)
    for j, k in [(-1, 2), (0, 0)]:
        st_ = mixed_heralded_state(params, bank, j, k, g)
        brute = _brute_kernel(params, bank, j, k, g)
        assert np.max(np.abs(st_.kernel() - brute)) < 1e-8


def test_ensemble_validity(params):
    g = SpectralGrid(params.center_s, 12 * params.marginal_std_s, 24)
    bank = default_bank("gaussian", 1.5, 4)
    st_ = mixed_heralded_state(params, bank, -1, 1, g)
    assert np.all(st_.weights >= 0)
    assert np.sum(st_.weights) == pytest.approx(1.0, abs=1e-8)
    for m in range(len(st_)):
        A = st_.member(m)
        assert np.sum(np.abs(A) ** 2) * g.step**2 == pytest.approx(1.0, abs=1e-10)
        assert np.max(np.abs(np.diag(A))) == 0.0
    K = st_.kernel()
    assert np.max(np.abs(K - K.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(K).min() > -1e-10 * np.abs(K).max()


def test_null_herald(params, delta_bank):
    with pytest.raises(NullStateError):
        mixed_heralded_state(params, delta_bank, 2, 2)


def test_finite_width_diagonal_vanishes(params, gauss_bank, grids):
    st_ = mixed_heralded_state(params, gauss_bank, 0, 0, grids[0])
    assert np.max(np.abs(np.diag(st_.jsi()))) < 1e-12


def test_visibility_improves_as_filters_narrow(params, grids, delta_bank, tau):
    Oj, Ok = omegas(delta_bank, -2, 2)
    ref = fringe_pure(params, Oj, Ok, tau, "exact", grids[0])
    sel = np.abs(tau) <= 2 * np.pi / ref.meta["beat"]
    v_delta = fringe_visibility(ref.probability[sel])
    vis = []
    for w in (1.5, 0.75, 0.375):
        st_ = mixed_heralded_state(params, default_bank("gaussian", w, 8), -2, 2, grids[0])
        vis.append(fringe_visibility(mixed_observables(st_, grids, tau).fringe.probability[sel]))
    assert vis[0] < vis[1] < vis[2] < v_delta


def test_mixed_integrated_matches_closed_form(params, grids):
    tau = default_tau(params, 256)
    nb = 12
    h = 12 * params.marginal_std_i / nb
    c = params.center_i + h * (np.arange(nb) - (nb - 1) / 2)
    bank = FilterBank(c, h, "tophat", 6, (), np.stack([c - h / 2, c + h / 2], axis=1))
    P_bank, _ = mixed_integrated_fringe(params, bank, tau, grids[0])
    _, P, _ = integrated_closed_forms(params, *grids, tau)
    assert np.max(np.abs(P_bank - P)) / P.max() < 1e-3


def test_purity_delta_is_one(params, delta_bank):
    r = purity_and_hom(params, delta_bank, -1, 2)
    assert r["purity_j"] == pytest.approx(1.0, abs=1e-8)
    assert r["purity_k"] == pytest.approx(1.0, abs=1e-8)


def test_purity_matches_closed_form(params, gauss_bank):
    from freqswap.units import width_nm_to_omega

    for j in (-4, 0, 3):
        r = purity_and_hom(params, gauss_bank, j)
        assert r["hom_visibility"] == pytest.approx(r["purity_j"], rel=1e-12)
        fwhm = float(gauss_bank.widths[gauss_bank.index(j)])
        assert r["purity_j"] == pytest.approx(heralded_purity_gaussian(params, fwhm), rel=1e-6)
    assert heralded_purity_gaussian(params, float(width_nm_to_omega(1.5, 830.0))) == pytest.approx(0.78, abs=0.05)


def test_unresolved_purity_is_inverse_schmidt(params):
    r = purity_and_hom(params, unresolved_bank(params), 0)
    assert r["purity_j"] == pytest.approx(np.sqrt(1 - params.correlation**2), rel=1e-4)


def test_purity_monotone_in_width(params):
    widths = [0.25, 0.75, 1.5, 3.0, 6.0]
    for j in range(-4, 5):
        pur = [purity_and_hom(params, default_bank("gaussian", w, 16), j)["purity_j"] for w in widths]
        assert np.all(np.diff(pur) <= 1e-12)


def test_identical_sources(params, delta_bank):
    r = source_mismatch(params, params, delta_bank)
    np.testing.assert_allclose(r.V, 1.0, atol=1e-10)
    assert r.overlap_f1_f2 == pytest.approx(1.0, abs=1e-10)
    assert r.contrast == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("axis", ["signal", "idler"])
def test_overlap_target_and_bound(params, delta_bank, axis):
    d = shift_for_overlap(params, 0.8, axis)
    p2 = params.replace(**{"shift_s" if axis == "signal" else "shift_i": d})
    r = source_mismatch(params, p2, delta_bank)
    assert r.overlap_f1_f2 == pytest.approx(0.8, abs=1e-6)
    assert r.contrast == pytest.approx(0.8, abs=1e-6)
    assert np.all(r.V >= r.overlap_f1_f2**2 - 1e-8)
    # pump-phase fringes are complementary
    np.testing.assert_allclose(r.pcc_plus + r.pcc_minus, 1.0)


def test_visibility_factorization(params, grids, delta_bank, tau):
    p2 = params.replace(shift_s=shift_for_overlap(params, 0.8))
    for j, k in [(-2, 2), (-1, 3)]:
        Oj, Ok = omegas(delta_bank, j, k)
        V = source_mismatch(params, p2, delta_bank, j, k, grids).V[0, 1]
        mm = mismatched_fringe(params, p2, Oj, Ok, tau, grids[0]).probability
        ref = fringe_pure(params, Oj, Ok, tau, "exact", grids[0]).probability
        v_mm = np.max(np.abs(mm - 0.5)) / 0.5
        v_ref = np.max(np.abs(ref - 0.5)) / 0.5
        assert v_mm == pytest.approx(V * v_ref, abs=1e-3)


def test_mismatch_uses_conditional_mode_overlaps(params, grids, delta_bank):
    p2 = params.replace(shift_i=0.7)
    r = source_mismatch(params, p2, delta_bank, -1, 1, grids)
    m1 = [conditional_mode(params, o, grids[0]) for o in omegas(delta_bank, -1, 1)]
    m2 = [conditional_mode(p2, o, grids[0]) for o in omegas(delta_bank, -1, 1)]
    expect = abs(overlap_integral(m1[0], m2[0]) * overlap_integral(m1[1], m2[1]))
    assert r.V[0, 1] == pytest.approx(expect, rel=1e-12)
    f1 = build_jsa(params, *grids)
    f2 = build_jsa(p2, *grids)
    assert r.overlap_f1_f2 == pytest.approx(abs(overlap_integral(f1, f2)), rel=1e-12)


def _symmetric_fringe(n_periods=6):
    # cosine under a flat-top window: extremes sit exactly at 1/2 +- 1/2
    om = 2 * np.pi
    tau = np.arange(-4000, 4001) / 200.0
    win = np.clip(1.5 - np.abs(tau) / n_periods, 0, 1)
    return tau, win * np.cos(om * tau)


def test_background_identity():
    tau, g = _symmetric_fringe()
    fr = FringeCurve(tau, 0.5 * (1 + 0.6 * g))
    out = background_correct(fr, BackgroundModel(0.0, 0.0))
    np.testing.assert_array_equal(out.probability, fr.probability)


def test_background_constructed_inverse():
    # a unit-visibility fringe plus a flat level equal to its mean reads as visibility 1/2
    tau, g = _symmetric_fringe()
    sig = 0.5 * (1 + g)
    level = float(sig.mean())
    raw = FringeCurve(tau, 0.5 * (sig + level))
    assert fringe_visibility(raw.probability) == pytest.approx(0.5, abs=5e-3)
    out = background_correct(raw, BackgroundModel(level=0.5 * level))
    assert fringe_visibility(out.probability) == pytest.approx(1.0, abs=1e-6)


def test_background_quarter_fractions_double_visibility():
    tau, g = _symmetric_fringe()
    sig = 0.5 * (1 + 0.7 * g)
    # double pairs from either source add 1/4 + 1/4 of the total as a flat level
    raw = FringeCurve(tau, 0.5 * sig + 0.25)
    r = fringe_visibility(background_correct(raw, BackgroundModel(0.25, 0.25)).probability) / fringe_visibility(raw.probability)
    assert r == pytest.approx(2.0, abs=1e-3)


def test_background_too_large():
    tau, g = _symmetric_fringe()
    fr = FringeCurve(tau, 0.5 * (1 + g))
    with pytest.raises(InvalidBackgroundError):
        background_correct(fr, BackgroundModel(level=0.2))
    with pytest.raises(InvalidBackgroundError):
        BackgroundModel(0.6, 0.5)
    with pytest.raises(InvalidBackgroundError):
        BackgroundModel(level=-1.0)


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.45), st.floats(0.0, 0.45))
def test_prop_background_inverse(v, f1, f2):
    tau, g = _symmetric_fringe()
    sig = 0.5 * (1 + v * g)
    frac = f1 + f2
    raw = FringeCurve(tau, (1 - frac) * sig + frac * 0.5)
    out = background_correct(raw, BackgroundModel(f1, f2))
    np.testing.assert_allclose(out.probability, sig, atol=1e-12)
