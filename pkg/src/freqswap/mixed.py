"""Finite-resolution heralding: mixed heralded states as weighted ensembles of
antisymmetrized pure amplitudes, their observables, purity and HOM bounds,
source distinguishability and the flat multi-pair background.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidBackgroundError, NullStateError
from .filters import FilterBank
from .pure import (
    TAU_CHUNK,
    FringeCurve,
    _phase_matrix,
    _signal_grid,
    conditional_mode,
    default_tau,
    idler_rho,
)
from .spectral import JsaParams, SpectralGrid, build_jsa, default_grids, overlap_integral

NULL_HERALD = 1e-12


def _nodes(bank: FilterBank, label):
    return bank.nodes(bank.index(label))


def mixed_herald_probability(params: JsaParams, bank: FilterBank, j, k, grid: SpectralGrid | None = None) -> float:
    """Filter-averaged p_jk = 1/2 sum w_m w_n [rho_mm rho_nn - |rho_mn|^2]."""
    xj, wj = _nodes(bank, j)
    xk, wk = _nodes(bank, k)
    r = idler_rho(params, np.concatenate([xj, xk]), np.concatenate([xj, xk]), grid)
    d = np.real(np.diag(r))
    nj = len(xj)
    block = np.outer(d[:nj], d[nj:]) - np.abs(r[:nj, nj:]) ** 2
    return float(0.5 * wj @ block @ wk)


@dataclass(frozen=True)
class MixedHeralded:
    """rho_jk = sum_m w_m |A_m><A_m| with A_m = (a_m (x) b_m - b_m (x) a_m) / norm_m."""

    j: object
    k: object
    grid: SpectralGrid
    weights: np.ndarray
    a: np.ndarray = field(repr=False)  # (members, N) raw conditional slices
    b: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)  # ||a(x)b - b(x)a||
    p_jk: float = 0.0

    def __len__(self):
        return len(self.weights)

    def member(self, m: int) -> np.ndarray:
        A = np.outer(self.a[m], self.b[m])
        return (A - A.T) / self.norms[m]

    def jsi(self) -> np.ndarray:
        F = np.zeros((self.grid.n_points, self.grid.n_points))
        for m in range(len(self)):
            F += self.weights[m] * np.abs(self.member(m)) ** 2
        return F

    def kernel(self) -> np.ndarray:
        """Dense four-index kernel as an (N^2, N^2) matrix; small grids only."""
        vecs = np.stack([self.member(m).ravel() for m in range(len(self))], axis=1)
        return (vecs * self.weights) @ vecs.conj().T

    def fidelity(self, a, b) -> float:
        """<psi|rho|psi> for psi proportional to a (x) b - b (x) a."""
        dw = self.grid.step
        a = np.asarray(a)
        b = np.asarray(b)
        na = np.sum(np.abs(a) ** 2) * dw
        nb = np.sum(np.abs(b) ** 2) * dw
        nab = np.sum(np.conj(a) * b) * dw
        npsi = np.sqrt(2 * (na * nb - abs(nab) ** 2))
        ac = self.a.conj() @ a * dw
        bd = self.b.conj() @ b * dw
        ad = self.a.conj() @ b * dw
        bc = self.b.conj() @ a * dw
        amp = 2 * (ac * bd - ad * bc) / (self.norms * npsi)
        return float(np.sum(self.weights * np.abs(amp) ** 2))


def mixed_heralded_state(
    params: JsaParams, bank: FilterBank, j, k, grid: SpectralGrid | None = None
) -> MixedHeralded:
    grid = _signal_grid(params, grid)
    xj, wj = _nodes(bank, j)
    xk, wk = _nodes(bank, k)
    w = grid.points
    fa = params.amplitude(w[None, :], xj[:, None])
    fb = params.amplitude(w[None, :], xk[:, None])
    a, b, wts, norms = [], [], [], []
    for m in range(len(xj)):
        for n in range(len(xk)):
            na = np.sum(np.abs(fa[m]) ** 2)
            nb = np.sum(np.abs(fb[n]) ** 2)
            nab = np.sum(np.conj(fa[m]) * fb[n])
            det = na * nb - abs(nab) ** 2
            # coincident nodes carry no antisymmetric amplitude
            if det <= 1e-12 * na * nb:
                continue
            n2 = 2 * det * grid.step**2
            a.append(fa[m])
            b.append(fb[n])
            wts.append(wj[m] * wk[n] * n2)
            norms.append(np.sqrt(n2))
    wts = np.array(wts)
    p = 0.25 * wts.sum() if len(wts) else 0.0
    if p <= NULL_HERALD:
        raise NullStateError(f"herald probability for bins ({j}, {k}) is {p:.3g}; heralded state is null")
    return MixedHeralded(j, k, grid, wts / wts.sum(), np.array(a), np.array(b), np.array(norms), float(p))


def kernel_direct(params: JsaParams, bank: FilterBank, j, k, grid: SpectralGrid) -> np.ndarray:
    """Brute-force quadrature of the heralded four-index kernel (oracle for small grids).

    rho(w1, w2; w1', w2') = 1/(4 p) sum_mn w_m w_n g(w1, w2) g*(w1', w2'),
    g = f(w1, Om) f(w2, On') - f(w1, On') f(w2, Om).
    """
    xj, wj = _nodes(bank, j)
    xk, wk = _nodes(bank, k)
    w = grid.points
    n = len(w)
    K = np.zeros((n * n, n * n), dtype=complex)
    for m, Om in enumerate(xj):
        for q, On in enumerate(xk):
            g = np.outer(params.amplitude(w, Om), params.amplitude(w, On)) - np.outer(
                params.amplitude(w, On), params.amplitude(w, Om)
            )
            v = g.ravel()
            K += wj[m] * wk[q] * np.outer(v, v.conj())
    p = mixed_herald_probability(params, bank, j, k, grid)
    return K / (4 * p)


def _ensemble_fringe(a, b, weights, grid: SpectralGrid, tau: np.ndarray) -> np.ndarray:
    dw = grid.step
    na = np.sum(np.abs(a) ** 2, axis=1) * dw
    nb = np.sum(np.abs(b) ** 2, axis=1) * dw
    nab = np.sum(np.conj(a) * b, axis=1) * dw
    norm = 2 * (na * nb - np.abs(nab) ** 2)
    out = np.empty(len(tau))
    for s in range(0, len(tau), TAU_CHUNK):
        e = _phase_matrix(grid, tau[s:s + TAU_CHUNK])
        xaa = e @ (np.abs(a) ** 2).T * dw
        xbb = e @ (np.abs(b) ** 2).T * dw
        xab = e @ (np.conj(a) * b).T * dw
        xba = e @ (np.conj(b) * a).T * dw
        num = 2 * np.real(xaa * np.conj(xbb)) - np.abs(xab) ** 2 - np.abs(xba) ** 2
        out[s:s + TAU_CHUNK] = (0.5 * (1.0 + num / norm)) @ weights
    return out


@dataclass(frozen=True)
class MixedObservables:
    F: np.ndarray = field(repr=False)
    fringe: FringeCurve = None


def mixed_observables(state: MixedHeralded, grids=None, tau=None) -> MixedObservables:
    """F_jk = sum w |A_m|^2 and the weighted per-member pure fringe kernel."""
    if grids is not None:
        g = grids[0] if isinstance(grids, tuple) else grids
        if not g.matches(state.grid):
            raise ContractViolation("grids differ from the grid the state was built on")
    if tau is None:
        raise ContractViolation("tau grid required")
    tau = np.asarray(tau, dtype=float)
    P = _ensemble_fringe(state.a, state.b, state.weights, state.grid, tau)
    return MixedObservables(state.jsi(), FringeCurve(tau, P, label=f"{state.j},{state.k}", model="mixed"))


def mixed_integrated_fringe(params: JsaParams, bank: FilterBank, tau, grid: SpectralGrid | None = None):
    """sum_jk area_j area_k p_jk P_jk(tau) / sum of weights, over every ordered bin pair."""
    tau = np.asarray(tau, dtype=float)
    acc = np.zeros(len(tau))
    tot = 0.0
    for j in bank.labels:
        for k in bank.labels:
            try:
                st = mixed_heralded_state(params, bank, j, k, grid)
            except NullStateError:
                continue
            wt = st.p_jk * bank.area(bank.index(j)) * bank.area(bank.index(k))
            acc += wt * _ensemble_fringe(st.a, st.b, st.weights, st.grid, tau)
            tot += wt
    return acc / tot, tot


def conditional_state_gram(params: JsaParams, bank: FilterBank, j, grid: SpectralGrid | None = None):
    """Nodes, weights and the Gram matrix <f(., Om)|f(., On)> for filter j."""
    x, w = _nodes(bank, j)
    return x, w, idler_rho(params, x, x, grid)


def purity_and_hom(params: JsaParams, bank: FilterBank, j, k=None, grid: SpectralGrid | None = None) -> dict:
    """Purity of the signal heralded through filter j (and k) and the HOM visibility Tr(rho_j rho_k)."""
    k = j if k is None else k
    xj, wj = _nodes(bank, j)
    xk, wk = _nodes(bank, k)
    r = idler_rho(params, np.concatenate([xj, xk]), np.concatenate([xj, xk]), grid)
    d = np.real(np.diag(r))
    nj = len(xj)
    tj = wj @ d[:nj]
    tk = wk @ d[nj:]
    pj = wj @ np.abs(r[:nj, :nj]) ** 2 @ wj / tj**2
    pk = wk @ np.abs(r[nj:, nj:]) ** 2 @ wk / tk**2
    v = wj @ np.abs(r[:nj, nj:]) ** 2 @ wk / (tj * tk)
    return {"purity_j": float(pj), "purity_k": float(pk), "hom_visibility": float(v)}


def unresolved_bank(params: JsaParams, half_span: float = 6.0, M: int = 96) -> FilterBank:
    """A single tophat filter passing the whole idler marginal."""
    s = half_span * params.marginal_std_i
    return FilterBank([params.center_i], [2 * s], "tophat", M, (0,))


def heralded_purity_gaussian(params: JsaParams, fwhm: float) -> float:
    """Closed form for a Gaussian |t|^2 of the given FWHM; independent of the bin centre."""
    r2 = params.correlation**2
    var_mi = params.marginal_std_i**2
    if fwhm <= 0:
        return 1.0
    s2 = (fwhm / (2 * np.sqrt(2 * np.log(2)))) ** 2
    v = 1.0 / (1.0 / s2 + 1.0 / var_mi) if np.isfinite(s2) else var_mi
    return float(1.0 / np.sqrt(1.0 + r2 * v / params.sigma_i**2))


def shift_for_overlap(params: JsaParams, target: float, axis: str = "signal") -> float:
    """Translation of one source along ``axis`` that gives |int f1* f2| = target."""
    if not 0 < target <= 1:
        raise ContractViolation(f"target overlap must lie in (0, 1], got {target}")
    P = params.precision
    q = P[0, 0] if axis == "signal" else P[1, 1]
    return float(np.sqrt(8 * np.log(1 / target) / q))


@dataclass(frozen=True)
class MismatchResult:
    V: np.ndarray
    labels: tuple
    overlap_f1_f2: float
    overlap_complex: complex
    phases: np.ndarray = field(repr=False)
    pcc_plus: np.ndarray = field(repr=False)
    pcc_minus: np.ndarray = field(repr=False)

    @property
    def contrast(self) -> float:
        p = self.pcc_plus
        return float((p.max() - p.min()) / (p.max() + p.min()))


def source_mismatch(
    params1: JsaParams,
    params2: JsaParams,
    bank: FilterBank,
    j=None,
    k=None,
    grids=None,
    phases=None,
) -> MismatchResult:
    """Per-bin distinguishability V_jk, the source overlap and the pump-phase fringe.

    With ``j``/``k`` omitted V is returned for every bin pair of the bank.
    """
    grid_s, grid_i = default_grids(params1) if grids is None else grids
    f1 = build_jsa(params1, grid_s, grid_i)
    f2 = build_jsa(params2, grid_s, grid_i)
    ov = overlap_integral(f1, f2)
    labels = bank.labels if j is None else (j, k)
    m1 = [conditional_mode(params1, bank.centers[bank.index(l)], grid_s) for l in labels]
    m2 = [conditional_mode(params2, bank.centers[bank.index(l)], grid_s) for l in labels]
    d = np.array([overlap_integral(a, b) for a, b in zip(m1, m2)])
    V = np.abs(np.outer(d, d))
    phases = np.linspace(0, 4 * np.pi, 201) if phases is None else np.asarray(phases, dtype=float)
    re = np.real(np.exp(1j * phases) * ov)
    return MismatchResult(V, tuple(labels), float(abs(ov)), complex(ov), phases, 0.5 * (1 + re), 0.5 * (1 - re))


def mismatched_fringe(
    params1: JsaParams, params2: JsaParams, Omega_j: float, Omega_k: float, tau, grid: SpectralGrid | None = None
) -> FringeCurve:
    """Heralded fringe when signal 1 comes from source 1 and signal 2 from source 2."""
    grid = _signal_grid(params1, grid)
    w = grid.points
    a = params1.amplitude(w, Omega_j)[None, :]
    b = params2.amplitude(w, Omega_k)[None, :]
    c = params1.amplitude(w, Omega_k)[None, :]
    d = params2.amplitude(w, Omega_j)[None, :]
    tau = np.asarray(tau, dtype=float)
    from .pure import fringe_from_terms

    P = fringe_from_terms([(1.0, a[0], b[0]), (-1.0, c[0], d[0])], grid, tau)
    return FringeCurve(tau, P, model="mismatch")


@dataclass(frozen=True)
class BackgroundModel:
    """Flat four-fold background from double pairs of a single source.

    ``level`` is an absolute flat level in fringe units; when None it is set to
    (fraction_source1 + fraction_source2) times the far-delay baseline.
    """

    fraction_source1: float = 0.25
    fraction_source2: float = 0.25
    level: float | None = None

    def __post_init__(self):
        f1, f2 = self.fraction_source1, self.fraction_source2
        if not (0 <= f1 <= 1 and 0 <= f2 <= 1 and f1 + f2 < 1):
            raise InvalidBackgroundError(f"background fractions ({f1}, {f2}) must lie in [0, 1] and sum below 1")
        if self.level is not None and self.level < 0:
            raise InvalidBackgroundError(f"background level must be >= 0, got {self.level}")


def far_baseline(fringe: FringeCurve, outer: float = 0.1) -> float:
    t = np.abs(fringe.tau)
    sel = t >= np.quantile(t, 1 - outer)
    return float(np.mean(fringe.probability[sel]))


def background_correct(fringe: FringeCurve, bg: BackgroundModel) -> FringeCurve:
    """Subtract a flat background and rescale so the far-delay baseline is 1/2."""
    base = far_baseline(fringe)
    level = (bg.fraction_source1 + bg.fraction_source2) * base if bg.level is None else bg.level
    pmin = float(np.min(fringe.probability))
    if level > pmin * (1 + 1e-12):
        raise InvalidBackgroundError(f"background level {level:.6g} exceeds the fringe minimum {pmin:.6g}")
    meta = dict(fringe.meta, background_level=level, fractions=(bg.fraction_source1, bg.fraction_source2))
    if level == 0:
        return FringeCurve(fringe.tau, fringe.probability, fringe.label, fringe.model, meta)
    sig = fringe.probability - level
    scale = 0.5 / (base - level)
    out = sig * scale
    meta["clipped"] = int(np.sum((out < 0) | (out > 1)))
    return FringeCurve(fringe.tau, np.clip(out, 0, 1), fringe.label, fringe.model, meta)


def fringe_visibility(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    return float((p.max() - p.min()) / (p.max() + p.min()))
