"""Delta-resolved entanglement swapping: conditional modes, heralding
probabilities, heralded joint spectra and two-photon interference fringes.

Herald frequencies are passed as angular frequencies ``Omega`` (rad/ps);
bin indices only enter through :class:`~freqswap.filters.FilterBank` labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ContractViolation, CoverageError, DegenerateHeraldError, NullStateError
from .filters import FilterBank
from .spectral import (
    AmplitudeMatrix,
    JsaParams,
    SpectralGrid,
    build_jsa,
    default_grids,
    reduced_density,
    require_same_grid,
)

NULL_TOL = 1e-12
TAU_CHUNK = 512


@dataclass(frozen=True)
class ConditionalMode:
    Omega: float
    center: float
    width: float
    grid: SpectralGrid
    amplitude: np.ndarray = field(repr=False)
    weight: float = 1.0  # rho(Omega, Omega): norm^2 of the raw slice


@dataclass(frozen=True)
class HeraldedBellPure:
    j: object
    k: object
    Omega_j: float
    Omega_k: float
    modes: tuple
    c_jk: float
    p_jk: float

    @property
    def overlap(self) -> complex:
        a, b = self.modes
        return complex(np.sum(np.conj(a.amplitude) * b.amplitude) * a.grid.step)

    @property
    def beat(self) -> float:
        return abs(self.modes[0].center - self.modes[1].center)

    def amplitude(self) -> AmplitudeMatrix:
        a, b = (m.amplitude for m in self.modes)
        psi = (np.outer(a, b) - np.outer(b, a)) / np.sqrt(2 * self.c_jk)
        g = self.modes[0].grid
        return AmplitudeMatrix(g, g, psi)


@dataclass(frozen=True)
class FringeCurve:
    tau: np.ndarray
    probability: np.ndarray
    label: str = ""
    model: str = "exact"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probability, dtype=float)
        if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
            raise ContractViolation(f"fringe {self.label} leaves [0, 1]: range [{p.min()}, {p.max()}]")
        object.__setattr__(self, "probability", np.clip(p, 0.0, 1.0))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))

    def visibility(self, lo=None, hi=None) -> float:
        sel = np.ones_like(self.tau, dtype=bool)
        if lo is not None:
            sel &= self.tau >= lo
        if hi is not None:
            sel &= self.tau <= hi
        p = self.probability[sel]
        return float((p.max() - p.min()) / (p.max() + p.min()))


def _signal_grid(params, grid):
    return default_grids(params)[0] if grid is None else grid


def default_tau(params: JsaParams, n: int = 2048, half_span: float = 6.0) -> np.ndarray:
    return np.linspace(-half_span / params.sigma_s, half_span / params.sigma_s, n)


def conditional_mode(
    params: JsaParams, Omega: float, grid: SpectralGrid | None = None, idler_grid: SpectralGrid | None = None
) -> ConditionalMode:
    """Signal amplitude heralded by an idler at ``Omega``, unit normalized on ``grid``."""
    grid = _signal_grid(params, grid)
    if idler_grid is not None and not idler_grid.contains(Omega):
        raise ContractViolation(f"Omega={Omega} outside the idler grid [{idler_grid.lo}, {idler_grid.hi}]")
    raw = params.amplitude(grid.points, Omega)
    n2 = float(np.sum(np.abs(raw) ** 2) * grid.step)
    if not np.sqrt(n2) >= NULL_TOL:
        raise DegenerateHeraldError(f"slice f(., {Omega}) has norm {np.sqrt(n2):.3g}; herald too far detuned")
    center = float(params.conditional_center(Omega))
    return ConditionalMode(float(Omega), center, params.sigma_s, grid, raw / np.sqrt(n2), n2)


def idler_rho(params: JsaParams, Omega1, Omega2, grid: SpectralGrid | None = None) -> np.ndarray:
    """rho(Omega1_a, Omega2_b) = sum_w f(w, Omega1_a) f*(w, Omega2_b) dw on the signal grid."""
    grid = _signal_grid(params, grid)
    w = grid.points[:, None]
    f1 = params.amplitude(w, np.atleast_1d(Omega1)[None, :])
    f2 = params.amplitude(w, np.atleast_1d(Omega2)[None, :])
    return (f1.T @ f2.conj()) * grid.step


def idler_rho_closed(params: JsaParams, Omega1, Omega2) -> np.ndarray:
    """Analytic idler density matrix of the Gaussian model (oracle for :func:`idler_rho`)."""
    y1 = np.atleast_1d(np.asarray(Omega1, dtype=float))[:, None] - params.center_i
    y2 = np.atleast_1d(np.asarray(Omega2, dtype=float))[None, :] - params.center_i
    c2 = params.norm_const**2
    s, si, a = params.sigma_s, params.sigma_i, params.alpha
    expo = -(y1**2 + y2**2) / (4 * si**2) + a**2 * s**2 * (y1 + y2) ** 2 / 2
    return c2 * np.sqrt(2 * np.pi) * s * np.exp(expo)


def herald_probability(params: JsaParams, Omega_j: float, Omega_k: float, grid: SpectralGrid | None = None) -> float:
    """p_jk = 1/2 [rho_jj rho_kk - |rho_jk|^2], a density per unit Omega^2."""
    if Omega_j == Omega_k:
        return 0.0
    r = idler_rho(params, [Omega_j, Omega_k], [Omega_j, Omega_k], grid)
    return float(0.5 * (r[0, 0].real * r[1, 1].real - abs(r[0, 1]) ** 2))


def herald_matrix(params: JsaParams, Omegas, grid: SpectralGrid | None = None) -> np.ndarray:
    r = idler_rho(params, Omegas, Omegas, grid)
    d = np.real(np.diag(r))
    p = 0.5 * (np.outer(d, d) - np.abs(r) ** 2)
    np.fill_diagonal(p, 0.0)
    return np.clip(p, 0.0, None)


def heralded_state(
    params: JsaParams, Omega_j: float, Omega_k: float, grid: SpectralGrid | None = None, j=None, k=None
) -> HeraldedBellPure:
    if Omega_j == Omega_k:
        raise NullStateError(f"identical herald bins (Omega={Omega_j}) herald a null state")
    grid = _signal_grid(params, grid)
    mj = conditional_mode(params, Omega_j, grid)
    mk = conditional_mode(params, Omega_k, grid)
    ov = np.sum(np.conj(mj.amplitude) * mk.amplitude) * grid.step
    c = float(1.0 - abs(ov) ** 2)
    if c < NULL_TOL:
        raise NullStateError(f"conditional modes for Omega={Omega_j}, {Omega_k} coincide (C={c:.3g})")
    p = 0.5 * mj.weight * mk.weight * c
    return HeraldedBellPure(j, k, float(Omega_j), float(Omega_k), (mj, mk), c, float(p))


def heralded_jsi(params: JsaParams, Omega_j: float, Omega_k: float, grid: SpectralGrid | None = None) -> AmplitudeMatrix:
    """Antisymmetric heralded amplitude on grid x grid; ``.intensity()`` is F_jk."""
    return heralded_state(params, Omega_j, Omega_k, grid).amplitude()


def _phase_matrix(grid: SpectralGrid, tau: np.ndarray) -> np.ndarray:
    # phase referenced to the grid centre; it cancels in every fringe
    return np.exp(1j * np.outer(tau, grid.points - grid.center))


def xfun(x: np.ndarray, y: np.ndarray, grid: SpectralGrid, tau: np.ndarray) -> np.ndarray:
    """X(x, y)(tau) = sum_w x*(w) y(w) exp(i w tau) dw."""
    return _phase_matrix(grid, tau) @ (np.conj(x) * y) * grid.step


def fringe_from_terms(terms, grid: SpectralGrid, tau: np.ndarray) -> np.ndarray:
    """Coincidence probability behind a 50:50 beamsplitter for psi = sum c_m u_m(1) v_m(2).

    Photon 1 and photon 2 arrive on different ports, photon 2 delayed by tau;
    P = 1/2 (1 - Re S / N) with S the exchange integral and N the norm.
    """
    tau = np.asarray(tau, dtype=float)
    cs = [complex(t[0]) for t in terms]
    us = [t[1] for t in terms]
    vs = [t[2] for t in terms]
    dw = grid.step
    norm = 0.0
    for n in range(len(terms)):
        for m in range(len(terms)):
            norm += (
                np.conj(cs[n]) * cs[m]
                * np.sum(np.conj(us[n]) * us[m]) * dw
                * np.sum(np.conj(vs[n]) * vs[m]) * dw
            )
    norm = float(np.real(norm))
    if norm < NULL_TOL:
        raise NullStateError("two-photon state has zero norm")
    s = np.zeros(len(tau), dtype=complex)
    for n in range(len(terms)):
        for m in range(len(terms)):
            s += np.conj(cs[n]) * cs[m] * xfun(us[n], vs[m], grid, tau) * np.conj(xfun(us[m], vs[n], grid, tau))
    return 0.5 * (1.0 - np.real(s) / norm)


def fringe_pure(
    params: JsaParams,
    Omega_j: float,
    Omega_k: float,
    tau=None,
    model: str = "exact",
    grid: SpectralGrid | None = None,
) -> FringeCurve:
    """P_jk(tau) for the heralded singlet; ``model`` is 'exact' or 'approximate'."""
    if Omega_j == Omega_k:
        raise NullStateError(f"identical herald bins (Omega={Omega_j}) herald a null state")
    tau = default_tau(params) if tau is None else np.asarray(tau, dtype=float)
    env = np.exp(-(params.sigma_s**2) * tau**2)
    if model == "approximate":
        dw = params.conditional_center(Omega_j) - params.conditional_center(Omega_k)
        p = 0.5 * (1.0 + env * np.cos(dw * tau))
        return FringeCurve(tau, p, model="approximate", meta={"beat": abs(float(dw))})
    if model != "exact":
        raise ValueError(f"model must be 'exact' or 'approximate', got {model!r}")
    st = heralded_state(params, Omega_j, Omega_k, grid)
    o2 = abs(st.overlap) ** 2
    dw = st.modes[0].center - st.modes[1].center
    p = 0.5 * (1.0 + env * np.cos(dw * tau) - o2 * (1.0 + env)) / (1.0 - o2)
    return FringeCurve(tau, p, model="exact", meta={"beat": abs(dw), "c_jk": st.c_jk, "p_jk": st.p_jk})


def beat_frequency(fringe: FringeCurve) -> tuple[float, float]:
    """Dominant nonzero angular frequency of P - 1/2 and the Fourier bin width (rad/ps)."""
    t = fringe.tau
    dt = t[1] - t[0]
    spec = np.abs(np.fft.rfft(fringe.probability - 0.5))
    freqs = 2 * np.pi * np.fft.rfftfreq(len(t), dt)
    i = 1 + int(np.argmax(spec[1:]))
    return float(freqs[i]), float(freqs[1])


def tiling_bank(params: JsaParams, n_bins: int = 64, half_span: float = 6.0) -> FilterBank:
    """Delta bank of ``n_bins`` equally spaced herald frequencies tiling the idler marginal."""
    h = 2 * half_span * params.marginal_std_i / n_bins
    centers = params.center_i + h * (np.arange(n_bins) - (n_bins - 1) / 2)
    return FilterBank.delta(centers, h)


def bank_coverage(params: JsaParams, bank: FilterBank) -> float:
    lo, hi = bank.support()
    z = np.sqrt(2) * params.marginal_std_i
    return float(1.0 - 0.5 * erfc((params.center_i - lo) / z) - 0.5 * erfc((hi - params.center_i) / z))


@dataclass(frozen=True)
class IntegratedResult:
    grid: SpectralGrid
    tau: np.ndarray
    p: np.ndarray = field(repr=False)
    F_sum: np.ndarray = field(repr=False)
    F_closed: np.ndarray = field(repr=False)
    P_sum: np.ndarray = field(repr=False)
    P_closed: np.ndarray = field(repr=False)
    total_sum: float
    total_closed: float
    max_dF: float
    max_dP: float


def integrated_closed_forms(params: JsaParams, grid_s: SpectralGrid, grid_i: SpectralGrid, tau: np.ndarray):
    """Unresolved-BSM JSI and fringe from the signal and idler density matrices.

    Returns (F, P, total) with F normalized to unit mass, P the conditional
    coincidence probability and ``total = 1/2 (1 - Tr rho^2)``.
    """
    jsa = build_jsa(params, grid_s, grid_i)
    rs = reduced_density(jsa, "signal").values
    pur = float(np.sum(np.abs(rs) ** 2) * grid_s.step**2)
    total = 0.5 * (1.0 - pur)
    if total <= NULL_TOL:
        raise NullStateError(f"source is separable (Tr rho^2 = {pur:.12g}); no pair is heralded")
    d = np.real(np.diag(rs))
    F = 0.5 * (np.outer(d, d) - np.abs(rs) ** 2) / total
    np.fill_diagonal(F, 0.0)
    P = np.empty(len(tau))
    m = np.abs(rs) ** 2
    for a in range(0, len(tau), TAU_CHUNK):
        e = _phase_matrix(grid_s, tau[a:a + TAU_CHUNK])
        chi = e @ d * grid_s.step
        cross = np.real(np.sum((e @ m) * np.conj(e), axis=1)) * grid_s.step**2
        P[a:a + TAU_CHUNK] = 0.25 * (1.0 - pur + np.abs(chi) ** 2 - cross) / total
    return F, P, total


def integrated_observables(
    params: JsaParams,
    bank: FilterBank,
    grids=None,
    tau=None,
    min_coverage: float = 0.999,
) -> IntegratedResult:
    """Weighted sums over a delta bank next to the closed-form unresolved results."""
    if bank.shape != "delta":
        raise ContractViolation("integrated_observables expects a delta-limit bank")
    cov = bank_coverage(params, bank)
    if cov < min_coverage:
        raise CoverageError(f"bank covers {cov:.5f} of the idler marginal (< {min_coverage})")
    grid_s, grid_i = default_grids(params) if grids is None else grids
    tau = default_tau(params) if tau is None else np.asarray(tau, dtype=float)
    n = len(bank)
    meas = bank.widths
    # raw conditional slices (norm^2 = rho(Omega, Omega))
    G = params.amplitude(grid_s.points[:, None], bank.centers[None, :])
    rho_d = np.sum(np.abs(G) ** 2, axis=0) * grid_s.step
    phi = G / np.sqrt(rho_d)
    p = herald_matrix(params, bank.centers, grid_s)
    wts = p * np.outer(meas, meas)

    F_sum = np.zeros((grid_s.n_points, grid_s.n_points))
    ov_all = (np.conj(phi).T @ phi) * grid_s.step
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n) if 1.0 - abs(ov_all[j, k]) ** 2 > NULL_TOL]
    if not pairs:
        raise NullStateError("every herald pair of the bank is null")
    jj = np.array([q[0] for q in pairs], dtype=int)
    kk = np.array([q[1] for q in pairs], dtype=int)
    ov = ov_all[jj, kk]
    cs = 1.0 - np.abs(ov) ** 2
    total = float(2 * wts[jj, kk].sum())
    for (j, k), c in zip(pairs, cs):
        A = np.outer(phi[:, j], phi[:, k])
        F_sum += 2 * wts[j, k] * np.abs(A - A.T) ** 2 / (2 * c)
    prods = np.conj(phi[:, jj]) * phi[:, kk]
    P_acc = np.zeros(len(tau))
    for a in range(0, len(tau), TAU_CHUNK):
        e = _phase_matrix(grid_s, tau[a:a + TAU_CHUNK])
        xs = (e @ (np.abs(phi) ** 2)) * grid_s.step
        xjk = (e @ prods) * grid_s.step
        Pjk = 0.5 * (1.0 + (np.real(xs[:, jj] * np.conj(xs[:, kk])) - np.abs(xjk) ** 2) / cs)
        P_acc[a:a + TAU_CHUNK] = Pjk @ (2 * wts[jj, kk])
    F_sum /= total
    P_sum = P_acc / total

    F_closed, P_closed, total_closed = integrated_closed_forms(params, grid_s, grid_i, tau)
    max_dF = float(np.max(np.abs(F_sum - F_closed)) / np.max(F_closed))
    max_dP = float(np.max(np.abs(P_sum - P_closed)) / np.max(P_closed))
    return IntegratedResult(
        grid_s, tau, p, F_sum, F_closed, P_sum, P_closed, total, total_closed, max_dF, max_dP
    )
