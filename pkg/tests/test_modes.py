import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqswap.errors import ContractViolation
from freqswap.filters import FilterBank, default_bank
from freqswap.modes import (
    JsiTable,
    from_model,
    multiplex_report,
    overlap_matrix,
    select_orthogonal,
    symmetrize,
    table_subset,
)
from freqswap.pure import heralded_state
from freqswap.spectral import default_grids, overlap_integral, schmidt_decompose, build_jsa

# oracle: plain double-loop cosine overlap of F(-2,2) and F(-1,1) on the default grid
COS_M2P2_M1P1 = 0.15731234953723894


@pytest.fixture(scope="module")
def model_table(params, delta_bank):
    return symmetrize(from_model(params, delta_bank))


def _toy(entries, weights=None, n=6):
    ax = np.arange(n, dtype=float)
    return JsiTable(ax, ax, dict(entries), dict(weights or {}))


def test_symmetrize_identity_on_symmetric(model_table, params, delta_bank):
    raw = from_model(params, delta_bank)
    for key in raw.keys():
        np.testing.assert_allclose(model_table.entries[key], raw.entries[key], rtol=0, atol=1e-15)


def test_symmetrize_single_entry():
    F = np.arange(36.0).reshape(6, 6)
    out = symmetrize(_toy({(2, -1): F}))
    expect = 0.5 * (F + F.T)
    np.testing.assert_allclose(out.entries[(-1, 2)], expect / expect.sum())


def test_symmetrize_noisy_pair(rng):
    F = rng.random((8, 8))
    noisy = F.T + 0.01 * rng.random((8, 8))
    out = symmetrize(_toy({(0, 1): F, (1, 0): noisy}, {(0, 1): 2.0, (1, 0): 3.0}, n=8))
    G = out.entries[(0, 1)]
    np.testing.assert_array_equal(G, G.T)
    assert out.weights[(0, 1)] == 5.0
    assert 0 < out.meta["asymmetry"][(0, 1)] < 0.1


def test_symmetrize_empty():
    with pytest.raises(ContractViolation):
        symmetrize(_toy({}))


def test_overlap_matrix_basics():
    a = np.zeros((6, 6))
    b = np.zeros((6, 6))
    a[:3, :3] = 1
    b[3:, 3:] = 1
    ov = overlap_matrix(_toy({(0, 1): a, (0, 2): b}))
    np.testing.assert_allclose(np.diag(ov.cosine), 1.0)
    assert ov.value((0, 1), (0, 2)) == 0.0


def test_overlap_brute_force(model_table):
    ov = overlap_matrix(model_table)
    assert ov.value((-2, 2), (-1, 1)) == pytest.approx(COS_M2P2_M1P1, abs=1e-10)


def test_overlap_grid_mismatch():
    t1 = _toy({(0, 1): np.ones((6, 6))})
    t2 = JsiTable(np.arange(6.0) + 1, np.arange(6.0), {(0, 1): np.ones((6, 6))}, {})
    with pytest.raises(ContractViolation):
        overlap_matrix(t1, t2)
    with pytest.raises(ContractViolation):
        JsiTable(np.arange(6.0), np.arange(6.0), {(0, 1): np.ones((5, 6))}, {})


def test_select_all_at_epsilon_one(model_table):
    assert len(select_orthogonal(model_table, 1.0)) == len(model_table)


def test_epsilon_domain(model_table):
    for eps in (0.0, -0.1, 1.5):
        with pytest.raises(ContractViolation):
            select_orthogonal(model_table, eps)


def test_greedy_order_and_tie_break():
    a = np.zeros((6, 6))
    a[0, 1] = a[1, 0] = 1
    t = _toy({(1, 2): a, (0, 3): a, (0, 2): a}, {(1, 2): 1.0, (0, 3): 1.0, (0, 2): 2.0})
    ms = select_orthogonal(t, 0.5)
    assert ms.keys == [(0, 2)]
    t2 = _toy({(1, 2): a, (0, 3): a}, {(1, 2): 1.0, (0, 3): 1.0})
    assert select_orthogonal(t2, 0.5).keys == [(0, 3)]


def test_orthogonality_certificate(model_table):
    ms = select_orthogonal(model_table, 0.15)
    X = np.stack([model_table.entries[k].ravel() for k in ms.keys])
    g = X @ X.T
    cos = g / np.sqrt(np.outer(np.diag(g), np.diag(g)))
    off = cos[~np.eye(len(ms), dtype=bool)]
    assert off.max() <= 0.15


def test_idempotence_model(model_table):
    ms = select_orthogonal(model_table, 0.15)
    again = select_orthogonal(table_subset(model_table, ms.keys), 0.15)
    assert again.keys == ms.keys


def test_bound_compliance_alpha_sweep(params, delta_bank):
    """|ModeSet| <= floor(K(K-1)/2) for delta-limit model tables, eps <= 0.15."""
    bound_alpha = 1 / (2 * params.sigma_s * params.sigma_i)
    report = []
    for r in np.linspace(0.3, 0.97, 10):
        q = params.replace(alpha=r * bound_alpha)
        K = schmidt_decompose(build_jsa(q, *default_grids(q))).K
        n = len(select_orthogonal(symmetrize(from_model(q, delta_bank)), 0.15))
        report.append((round(r, 3), round(K, 3), int(np.floor(K * (K - 1) / 2)), n))
    bad = [x for x in report if x[3] > x[2]]
    assert not bad, f"(r, K, bound, selected) exceeding the bound: {bad}"


def test_intensity_orthogonality_implies_state_orthogonality(params, delta_bank, model_table):
    # |<psi_n|psi_m>| <= sum sqrt(F_n F_m): zero intensity overlap forces zero state overlap
    g = default_grids(params)[0]
    keys = model_table.keys()[::5]
    states = {
        k: heralded_state(params, delta_bank.centers[delta_bank.index(k[0])], delta_bank.centers[delta_bank.index(k[1])], g).amplitude()
        for k in keys
    }
    for a in keys:
        for b in keys:
            s = abs(overlap_integral(states[a], states[b]))
            bhat = np.sum(np.sqrt(model_table.entries[a] * model_table.entries[b]))
            assert s <= bhat + 1e-12
    # exactly disjoint case: two sources far apart
    far = params.replace(shift_s=40.0, shift_i=40.0)
    gw = default_grids(params, 512, 30.0)[0]
    A = heralded_state(params, params.omega0 - 3, params.omega0 + 3, gw).amplitude()
    B = heralded_state(far, far.center_i - 3, far.center_i + 3, gw).amplitude()
    assert np.sum(A.intensity() * B.intensity()) * A.cell < 1e-30
    assert abs(overlap_integral(A, B)) < 1e-12


def test_single_channel_report(model_table):
    ms = select_orthogonal(table_subset(model_table, [(-1, 1)]), 0.15)
    rpt = multiplex_report(ms, model_table.weights)
    assert rpt.channels[0]["rate_share"] == 1.0
    assert rpt.channels[0]["max_crosstalk"] == 0.0


def test_discarded_fraction_arithmetic(params, delta_bank, model_table):
    ms = select_orthogonal(model_table, 0.15)
    rpt = multiplex_report(ms, model_table.weights)
    allw = sum(model_table.weights.values())
    sel = sum(model_table.weights[k] for k in ms.keys)
    assert 0 < rpt.discarded_fraction < 1
    assert rpt.discarded_fraction == pytest.approx(1 - sel / allw, rel=1e-12)
    assert sum(c["rate_share"] for c in rpt.channels) == pytest.approx(1.0)
    assert max(c["max_crosstalk"] for c in rpt.channels) <= 0.15


def test_mirror_symmetric_shares(params):
    # bank symmetric in angular frequency about the source centre
    h = 0.9
    bank = FilterBank.delta(params.center_i + h * np.arange(-3, 4), h, tuple(range(-3, 4)))
    t = symmetrize(from_model(params, bank))
    ms = select_orthogonal(t, 1.0)
    rpt = multiplex_report(ms, t.weights)
    share = {(c["j"], c["k"]): c["rate_share"] for c in rpt.channels}
    for (j, k), v in share.items():
        assert v == pytest.approx(share[(-k, -j)], rel=1e-9)


@st.composite
def tables(draw):
    n = draw(st.integers(2, 7))
    seed = draw(st.integers(0, 2**31))
    r = np.random.default_rng(seed)
    entries = {(0, i + 1): r.random((5, 5)) ** 4 for i in range(n)}
    weights = {k: float(r.random()) for k in entries}
    return _toy(entries, weights, n=5)


@given(tables(), st.floats(0.05, 1.0))
def test_prop_selection_idempotent_and_certified(t, eps):
    ms = select_orthogonal(t, eps)
    assert select_orthogonal(table_subset(t, ms.keys), eps).keys == ms.keys
    if len(ms) > 1:
        assert ms.max_crosstalk() <= eps
