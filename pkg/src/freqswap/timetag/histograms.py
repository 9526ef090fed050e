"""Histogram estimators over coincidence events, and the matching model predictions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import jensenshannon
from scipy.special import ndtr
from scipy.stats import chisquare

from ..errors import ContractViolation
from ..filters import bin_wavelengths
from ..spectral import JsaParams
from ..units import domega_dlambda, omega_to_nm
from .coincidence import CoincidenceEvents, find_coincidences
from .records import iter_chunks, read_meta
from .synth import ROLES, CoincidenceConfig, segments_for, tofs_from_dict
from .tofs import TofsConfig

S1, S2, IC, ID = range(4)


@dataclass(frozen=True)
class Binning:
    """Wavelength binning (nm): herald bins as (lo, hi) intervals, signal and source JSI edges."""

    labels: tuple
    idler_bins: np.ndarray
    signal_edges: np.ndarray
    source_signal_edges: np.ndarray
    source_idler_edges: np.ndarray

    def idler_bin(self, lam) -> np.ndarray:
        """Index into ``labels`` for each wavelength, -1 when outside every bin."""
        lam = np.asarray(lam, dtype=float)
        out = np.full(lam.shape, -1, dtype=np.int64)
        for i, (lo, hi) in enumerate(self.idler_bins):
            out[(lam >= lo) & (lam < hi)] = i
        return out


def default_binning(params: JsaParams | None = None, center_nm: float = 830.0, pitch_nm: float = 1.5, jmax: int = 4,
                    signal_half_nm: float = 5.0, signal_step_nm: float = 0.25, source_bins: int = 64) -> Binning:
    labels, lam = bin_wavelengths(center_nm, pitch_nm, jmax)
    idler = np.stack([lam - pitch_nm / 2, lam + pitch_nm / 2], axis=1)
    n_sig = int(round(2 * signal_half_nm / signal_step_nm))
    sig = np.linspace(center_nm - signal_half_nm, center_nm + signal_half_nm, n_sig + 1)
    if params is None:
        hs, hi = 3.5, 14.0
    else:
        hs = 4 * params.marginal_std_s / domega_dlambda(center_nm)
        hi = 4 * params.marginal_std_i / domega_dlambda(center_nm)
    src_s = np.linspace(center_nm - hs, center_nm + hs, source_bins + 1)
    src_i = np.linspace(center_nm - hi, center_nm + hi, source_bins + 1)
    return Binning(labels, idler, sig, src_s, src_i)


@dataclass
class Histograms:
    mode: str
    labels: tuple
    p_counts: np.ndarray
    signal_jsi: np.ndarray
    source_jsi: np.ndarray
    fringe_coinc: np.ndarray
    fringe_bunched: np.ndarray
    fringe_fourfold: np.ndarray
    taus: np.ndarray
    out_of_range: dict = field(default_factory=dict)
    n_events: dict = field(default_factory=dict)

    def merge(self, other: "Histograms") -> None:
        for name in ("p_counts", "signal_jsi", "source_jsi", "fringe_coinc", "fringe_bunched", "fringe_fourfold"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for d_self, d_other in ((self.out_of_range, other.out_of_range), (self.n_events, other.n_events)):
            for k, v in d_other.items():
                d_self[k] = d_self.get(k, 0) + v

    def fringe_probability(self) -> np.ndarray:
        """Coincident / (coincident + bunched) per segment and bin pair; nan where empty."""
        tot = self.fringe_coinc + self.fringe_bunched
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.fringe_coinc / np.maximum(tot, 1), np.nan)


def _empty(mode, binning: Binning, n_seg: int, taus) -> Histograms:
    n = len(binning.labels)
    b = len(binning.signal_edges) - 1
    return Histograms(
        mode,
        binning.labels,
        np.zeros((n, n), np.int64),
        np.zeros((n, n, b, b), np.int64),
        np.zeros((len(binning.source_signal_edges) - 1, len(binning.source_idler_edges) - 1), np.int64),
        np.zeros((n_seg, n, n), np.int64),
        np.zeros((n_seg, n, n), np.int64),
        np.zeros(n_seg, np.int64),
        np.asarray(taus, dtype=float),
        {},
        {},
    )


def _wavelengths(events: CoincidenceEvents, tofs: dict, role: int, rep: int) -> np.ndarray:
    t = events.times[:, role] - events.pulse * rep
    return tofs[ROLES[role]].wavelength(t)


def _bump(d, key, n):
    d[key] = d.get(key, 0) + int(n)


def histograms_from_tags(
    events: CoincidenceEvents,
    tofs: dict,
    binning: Binning,
    mode: str = "swap",
    segments=None,
    rep_period: int = 12500,
) -> Histograms:
    """Accumulate the histograms of one run mode from per-pulse role occupancy.

    swap    exclusive four-folds: herald bins (j, k) and the signal-pair JSI
    source  exclusive two-folds signal1 + one idler: the source JSI
    fringe  herald (one tag on each idler) split by segment into coincident
            and bunched signal outcomes; also every-role four-folds
    """
    segments = segments or [{"start": 0, "stop": np.iinfo(np.int64).max, "tau_ps": 0.0}]
    taus = [s["tau_ps"] for s in segments]
    h = _empty(mode, binning, len(segments), taus)
    if not len(events):
        return h
    cnt = events.counts
    if mode == "swap":
        ev = events.take((cnt == 1).all(axis=1))
        _bump(h.n_events, "fourfold", len(ev))
        jc = binning.idler_bin(_wavelengths(ev, tofs, IC, rep_period))
        jd = binning.idler_bin(_wavelengths(ev, tofs, ID, rep_period))
        inside = (jc >= 0) & (jd >= 0)
        _bump(h.out_of_range, "idler", np.sum(~inside))
        np.add.at(h.p_counts, (jc[inside], jd[inside]), 1)
        l1 = _wavelengths(ev, tofs, S1, rep_period)
        l2 = _wavelengths(ev, tofs, S2, rep_period)
        e = binning.signal_edges
        b1 = np.searchsorted(e, l1, side="right") - 1
        b2 = np.searchsorted(e, l2, side="right") - 1
        nb = len(e) - 1
        win = np.ones(len(ev), dtype=bool)
        for r, lam in ((S1, l1), (S2, l2)):
            win &= tofs[ROLES[r]].in_window(lam)
        sig_ok = (b1 >= 0) & (b1 < nb) & (b2 >= 0) & (b2 < nb)
        _bump(h.out_of_range, "signal_window", np.sum(inside & ~win))
        _bump(h.out_of_range, "signal", np.sum(inside & win & ~sig_ok))
        ok = inside & sig_ok & win
        np.add.at(h.signal_jsi, (jc[ok], jd[ok], b1[ok], b2[ok]), 1)
    elif mode == "source":
        one_idler = (cnt[:, IC] + cnt[:, ID]) == 1
        ev = events.take((cnt[:, S1] == 1) & one_idler)
        _bump(h.n_events, "twofold", len(ev))
        ls = _wavelengths(ev, tofs, S1, rep_period)
        ic = ev.counts[:, IC] == 1
        li = np.where(ic, _wavelengths(ev, tofs, IC, rep_period), _wavelengths(ev, tofs, ID, rep_period))
        es, ei = binning.source_signal_edges, binning.source_idler_edges
        bs = np.searchsorted(es, ls, side="right") - 1
        bi = np.searchsorted(ei, li, side="right") - 1
        ok = (bs >= 0) & (bs < len(es) - 1) & (bi >= 0) & (bi < len(ei) - 1)
        _bump(h.out_of_range, "source", np.sum(~ok))
        np.add.at(h.source_jsi, (bs[ok], bi[ok]), 1)
    elif mode == "fringe":
        starts = np.array([s["start"] for s in segments])
        seg = np.searchsorted(starts, events.pulse, side="right") - 1
        four = (cnt >= 1).all(axis=1)
        np.add.at(h.fringe_fourfold, seg[four], 1)
        _bump(h.n_events, "fourfold_any", np.sum(four))
        herald = (cnt[:, IC] == 1) & (cnt[:, ID] == 1)
        ev = events.take(herald)
        sg = seg[herald]
        jc = binning.idler_bin(_wavelengths(ev, tofs, IC, rep_period))
        jd = binning.idler_bin(_wavelengths(ev, tofs, ID, rep_period))
        inside = (jc >= 0) & (jd >= 0)
        _bump(h.out_of_range, "idler", np.sum(~inside))
        c1, c2 = ev.counts[:, S1], ev.counts[:, S2]
        coinc = inside & (c1 >= 1) & (c2 >= 1)
        bunched = inside & (((c1 >= 2) & (c2 == 0)) | ((c2 >= 2) & (c1 == 0)))
        np.add.at(h.fringe_coinc, (sg[coinc], jc[coinc], jd[coinc]), 1)
        np.add.at(h.fringe_bunched, (sg[bunched], jc[bunched], jd[bunched]), 1)
        _bump(h.n_events, "herald", np.sum(inside))
    else:
        raise ContractViolation(f"unknown run mode {mode!r}")
    return h


def analyze_file(path, binning: Binning, config: CoincidenceConfig | None = None, chunk: int = 1 << 20) -> Histograms:
    """Stream a tag file through the coincidence finder into histograms."""
    meta = read_meta(path)
    tofs = {r: tofs_from_dict(d) for r, d in meta["tofs"].items()}
    rep = int(meta["rep_period"])
    if config is None:
        config = CoincidenceConfig(window=float(rep), channels=meta["channels"], delays=meta.get("delays", {}))
    segs = meta.get("segments") or segments_for(meta["n_pulses"], None)
    mode = meta["mode"]
    total = _empty(mode, binning, len(segs), [s["tau_ps"] for s in segs])
    n_tags = [0]

    def chunks():
        for c, t in iter_chunks(path, chunk):
            n_tags[0] += len(t)
            yield c, t

    for ev in find_coincidences(chunks(), config, order=None, rep_period=rep, stream=True):
        total.merge(histograms_from_tags(ev, tofs, binning, mode, segs, rep))
    total.n_events["tags"] = n_tags[0]
    return total


def _acceptance(edges_lo, edges_hi, lam, sigma) -> np.ndarray:
    """(bins, points) probability that a photon at ``lam`` is assigned to each bin."""
    lo = np.asarray(edges_lo)[:, None]
    hi = np.asarray(edges_hi)[:, None]
    if sigma <= 0:
        return ((lam[None, :] >= lo) & (lam[None, :] < hi)).astype(float)
    return ndtr((hi - lam[None, :]) / sigma) - ndtr((lo - lam[None, :]) / sigma)


def timing_sigma_nm(tofs: TofsConfig) -> float:
    """Wavelength blur from jitter plus integer-ps rounding."""
    return float(np.sqrt(tofs.jitter_sigma**2 + 1.0 / 12.0) / abs(tofs.dispersion))


def expected_pjk(params: JsaParams, tofs_c: TofsConfig, tofs_d: TofsConfig, binning: Binning, n: int = 700):
    """Bin probabilities of the herald pair (including blur), by 2-D quadrature of p(Om, Om').

    Returns (matrix over labels, probability of falling outside every bin).
    """
    from ..pure import idler_rho_closed

    s = params.marginal_std_i
    om = np.linspace(params.center_i - 8 * s, params.center_i + 8 * s, n)
    r = idler_rho_closed(params, om, om)
    d = np.diag(r)
    p = 0.5 * (np.outer(d, d) - np.abs(r) ** 2)
    p /= p.sum()
    lam = omega_to_nm(om)
    ac = _acceptance(binning.idler_bins[:, 0], binning.idler_bins[:, 1], lam, timing_sigma_nm(tofs_c))
    ad = _acceptance(binning.idler_bins[:, 0], binning.idler_bins[:, 1], lam, timing_sigma_nm(tofs_d))
    m = ac @ p @ ad.T
    return m, float(1.0 - m.sum())


def expected_source_jsi(params: JsaParams, tofs_s: TofsConfig, tofs_i: TofsConfig, binning: Binning, n: int = 600):
    """Bin probabilities of the source JSI in wavelength, blurred by each spectrometer."""
    es, ei = binning.source_signal_edges, binning.source_idler_edges
    ms, mi = 8 * params.marginal_std_s, 8 * params.marginal_std_i
    ws = np.linspace(params.center_s - ms, params.center_s + ms, n)
    wi = np.linspace(params.center_i - mi, params.center_i + mi, n)
    dens = np.abs(params.amplitude(ws[:, None], wi[None, :])) ** 2
    mass = dens / dens.sum()
    a_s = _acceptance(es[:-1], es[1:], omega_to_nm(ws), timing_sigma_nm(tofs_s))
    a_i = _acceptance(ei[:-1], ei[1:], omega_to_nm(wi), timing_sigma_nm(tofs_i))
    return a_s @ mass @ a_i.T


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits between two histograms (normalized here)."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    return float(jensenshannon(p / p.sum(), q / q.sum(), base=2) ** 2)


@dataclass(frozen=True)
class GoodnessOfFit:
    statistic: float
    dof: int
    pvalue: float
    n: int


def pjk_goodness(hist: Histograms, params: JsaParams, tofs: dict, binning: Binning, min_expected: float = 5.0):
    """Pearson chi-square of herald-bin counts (plus the out-of-bin count) against the model.

    Cells expecting fewer than ``min_expected`` counts are pooled into one.
    """
    m, out = expected_pjk(params, tofs["idler_c"], tofs["idler_d"], binning)
    obs = np.append(hist.p_counts.ravel(), hist.out_of_range.get("idler", 0)).astype(float)
    exp = np.append(m.ravel(), out) * obs.sum()
    big = exp >= min_expected
    o = np.append(obs[big], obs[~big].sum())
    e = np.append(exp[big], exp[~big].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    res = chisquare(o, e * o.sum() / e.sum())
    return GoodnessOfFit(float(res.statistic), len(o) - 1, float(res.pvalue), int(obs.sum()))


def source_divergence(hist: Histograms, params: JsaParams, tofs: dict, binning: Binning) -> float:
    e = expected_source_jsi(params, tofs["signal1"], tofs["idler_c"], binning)
    return js_divergence(hist.source_jsi, e)
