"""Monte-Carlo time-tag synthesis for the two-source swapping experiment.

Per pulse at most one generation event per source at order eta. With
classes none / one pair from source 1 / one pair from source 2 / one pair from
each / two pairs from source 1 / two pairs from source 2, the four-photon
classes have weights eta^2, eta^2/2, eta^2/2. Every four-photon class is taken
to send one idler to each beamsplitter output (herald success common to all
classes), so double pairs of a single source are a quarter of the four-fold
signal each.

Run modes
  swap    signals to their own spectrometers, idlers through the BSM
  fringe  signals combined on a beamsplitter, delay tau per segment
  source  source 1 alone, signal and idler straight to their spectrometers
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..spectral import JsaParams
from ..units import omega_to_nm
from .records import TagWriter, write_meta
from .tofs import TofsConfig

ROLES = ("signal1", "signal2", "idler_c", "idler_d")
S1, S2, IC, ID = range(4)
BLOCK = 1 << 18
MODES = ("swap", "fringe", "source")


@dataclass(frozen=True)
class CoincidenceConfig:
    window: float = 12500.0
    channels: dict = field(default_factory=lambda: {r: i for i, r in enumerate(ROLES)})
    delays: dict = field(default_factory=dict)
    efficiencies: dict = field(default_factory=dict)
    dark_prob: float = 0.0

    def __post_init__(self):
        if not self.window > 0:
            raise ConfigurationError("coincidence window must be positive")
        if set(self.channels) != set(ROLES):
            raise ConfigurationError(f"channel map must assign exactly the roles {ROLES}")
        if len(set(self.channels.values())) != len(ROLES):
            raise ConfigurationError("two roles share a detector channel")
        for r, e in self.efficiencies.items():
            if r not in ROLES or not 0 < e <= 1:
                raise ConfigurationError(f"efficiency for {r!r} must lie in (0, 1], got {e}")
        if not 0 <= self.dark_prob < 1:
            raise ConfigurationError("dark_prob must lie in [0, 1)")

    def channel(self, role_idx: int) -> int:
        return int(self.channels[ROLES[role_idx]])

    def efficiency(self, role_idx: int) -> float:
        return float(self.efficiencies.get(ROLES[role_idx], 1.0))

    def delay(self, role_idx: int) -> float:
        return float(self.delays.get(ROLES[role_idx], 0.0))


def class_probabilities(eta: float, mode: str, block_source2: bool = False) -> np.ndarray:
    """[none, single1, single2, psi12, psi11, psi22] per pulse."""
    e2 = eta**2
    p = np.array([0.0, eta, eta, e2, e2 / 2, e2 / 2])
    if mode == "source":
        p[[2, 3, 5]] = 0.0
    elif block_source2:
        # a pair-from-each pulse leaves a single source-1 pair
        p[1] += p[3]
        p[[2, 3, 5]] = 0.0
    p[0] = 1.0 - p[1:].sum()
    return p


def fringe_kernel(params: JsaParams, Om1, Om2, tau) -> np.ndarray:
    """Coincidence probability of the pure heralded singlet for idlers at (Om1, Om2)."""
    dc = params.steering * (np.asarray(Om1) - np.asarray(Om2))
    x = dc**2 / (4 * params.sigma_s**2)
    one_minus_o2 = -np.expm1(-x)
    env = np.exp(-(params.sigma_s**2) * np.asarray(tau) ** 2)
    num = one_minus_o2 + env * (np.cos(dc * tau) - np.exp(-x))
    with np.errstate(invalid="ignore", divide="ignore"):
        p = 0.5 * num / one_minus_o2
    return np.clip(np.nan_to_num(p, nan=0.5), 0.0, 1.0)


def sample_pairs(params: JsaParams, n: int, rng) -> np.ndarray:
    """(n, 2) signal/idler angular frequencies drawn from |f|^2."""
    cov = np.linalg.inv(params.precision)
    return rng.multivariate_normal([params.center_s, params.center_i], cov, size=n, method="cholesky")


def sample_herald_idlers(params: JsaParams, n: int, rng) -> np.ndarray:
    """(n, 2) idler pairs from the normalized herald density p(Om, Om')."""
    out = np.empty((0, 2))
    s = params.marginal_std_i
    while len(out) < n:
        m = max(64, int(1.5 * (n - len(out))) + 16)
        cand = rng.normal(params.center_i, s, size=(m, 2))
        acc = -np.expm1(-(params.alpha * params.sigma_s) ** 2 * (cand[:, 0] - cand[:, 1]) ** 2)
        out = np.vstack([out, cand[rng.random(m) < acc]])
    return out[:n]


def sample_heralded_signals(params: JsaParams, idlers: np.ndarray, rng) -> np.ndarray:
    """(n, 2) signal pairs from F(w1, w2) heralded by each idler pair, by mixture rejection."""
    n = len(idlers)
    c = params.conditional_center(idlers)
    s = params.sigma_s
    out = np.empty((n, 2))
    todo = np.arange(n)
    while len(todo):
        c1, c2 = c[todo, 0], c[todo, 1]
        flip = rng.random(len(todo)) < 0.5
        m1 = np.where(flip, c2, c1)
        m2 = np.where(flip, c1, c2)
        w1 = rng.normal(m1, s)
        w2 = rng.normal(m2, s)
        la = -((w1 - c1) ** 2 + (w2 - c2) ** 2) / (4 * s**2)
        lb = -((w1 - c2) ** 2 + (w2 - c1) ** 2) / (4 * s**2)
        d = -np.abs(la - lb)
        ratio = (-np.expm1(d)) ** 2 / (2 * (1 + np.exp(2 * d)))
        ok = rng.random(len(todo)) < ratio
        out[todo[ok], 0] = w1[ok]
        out[todo[ok], 1] = w2[ok]
        todo = todo[~ok]
    return out


@dataclass
class _Photons:
    pulse: list = field(default_factory=list)
    role: list = field(default_factory=list)
    omega: list = field(default_factory=list)

    def add(self, pulse, role, omega):
        pulse = np.asarray(pulse, dtype=np.int64)
        self.pulse.append(pulse)
        self.role.append(np.broadcast_to(np.asarray(role, dtype=np.int64), pulse.shape).copy())
        self.omega.append(np.asarray(omega, dtype=float))

    def arrays(self):
        if not self.pulse:
            z = np.zeros(0)
            return z.astype(np.int64), z.astype(np.int64), z
        return np.concatenate(self.pulse), np.concatenate(self.role), np.concatenate(self.omega)


def _coin(rng, n):
    return rng.random(n) < 0.5


def _generate_block(params, mode, tau_of_pulse, pulses, cls, rng, ph: _Photons):
    """Append the photons of every non-empty pulse in the block."""
    for src, single in ((1, 1), (2, 2)):
        pu = pulses[cls == single]
        if not len(pu):
            continue
        pr = sample_pairs(params, len(pu), rng)
        if mode == "fringe":
            ph.add(pu, np.where(_coin(rng, len(pu)), S1, S2), pr[:, 0])
        else:
            ph.add(pu, S1 if src == 1 else S2, pr[:, 0])
        if mode == "source":
            ph.add(pu, IC, pr[:, 1])
        else:
            ph.add(pu, np.where(_coin(rng, len(pu)), IC, ID), pr[:, 1])

    pu = pulses[cls == 3]
    if len(pu):
        idl = sample_herald_idlers(params, len(pu), rng)
        sig = sample_heralded_signals(params, idl, rng)
        ph.add(pu, IC, idl[:, 0])
        ph.add(pu, ID, idl[:, 1])
        if mode == "fringe":
            coinc = rng.random(len(pu)) < fringe_kernel(params, idl[:, 0], idl[:, 1], tau_of_pulse(pu))
            first = np.where(_coin(rng, len(pu)), S1, S2)
            second = np.where(coinc, S1 + S2 - first, first)
            ph.add(pu, first, sig[:, 0])
            ph.add(pu, second, sig[:, 1])
        else:
            ph.add(pu, S1, sig[:, 0])
            ph.add(pu, S2, sig[:, 1])

    for code, sig_role in ((4, S1), (5, S2)):
        pu = pulses[cls == code]
        if not len(pu):
            continue
        a = sample_pairs(params, len(pu), rng)
        b = sample_pairs(params, len(pu), rng)
        if mode == "source":
            ph.add(pu, IC, a[:, 1])
            ph.add(pu, IC, b[:, 1])
        else:
            to_c = _coin(rng, len(pu))
            ph.add(pu, np.where(to_c, IC, ID), a[:, 1])
            ph.add(pu, np.where(to_c, ID, IC), b[:, 1])
        if mode == "fringe":
            split = _coin(rng, len(pu))
            first = np.where(_coin(rng, len(pu)), S1, S2)
            ph.add(pu, first, a[:, 0])
            ph.add(pu, np.where(split, S1 + S2 - first, first), b[:, 0])
        else:
            ph.add(pu, sig_role, a[:, 0])
            ph.add(pu, sig_role, b[:, 0])


def map_to_tags(tofs: TofsConfig, pulses, wavelengths_nm, rng, delay: float = 0.0) -> np.ndarray:
    """Arrival times (integer ps) for photons of the given wavelengths."""
    t = np.asarray(pulses, dtype=np.int64) * tofs.rep_period + tofs.delay(wavelengths_nm) + delay
    if tofs.jitter_fwhm > 0:
        t = t + rng.normal(0.0, tofs.jitter_sigma, np.shape(t))
    return np.rint(t).astype(np.int64)


@dataclass
class SynthResult:
    channels: np.ndarray | None
    times: np.ndarray | None
    meta: dict


def segments_for(n_pulses: int, taus) -> list:
    if taus is None or len(taus) == 0:
        return [{"start": 0, "stop": int(n_pulses), "tau_ps": 0.0}]
    edges = np.linspace(0, n_pulses, len(taus) + 1).astype(np.int64)
    return [{"start": int(a), "stop": int(b), "tau_ps": float(t)} for a, b, t in zip(edges[:-1], edges[1:], taus)]


def synth_timetags(
    params: JsaParams,
    tofs: dict,
    coinc: CoincidenceConfig,
    n_pulses: int,
    seed: int,
    mode: str = "swap",
    taus=None,
    block_source2: bool = False,
    out_path=None,
) -> SynthResult:
    """Generate a time-ordered tag stream; written to ``out_path`` when given.

    ``tofs`` maps each role to its :class:`TofsConfig`. Output depends only on
    (params, configs, n_pulses, seed, mode, taus, block_source2).
    """
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if int(n_pulses) < 1:
        raise ConfigurationError("n_pulses must be >= 1")
    missing = set(ROLES) - set(tofs)
    if missing:
        raise ConfigurationError(f"no TOFS configuration for roles {sorted(missing)}")
    reps = {tofs[r].rep_period for r in ROLES}
    if len(reps) != 1:
        raise ConfigurationError("all spectrometers must share one repetition period")
    rep = reps.pop()
    n_pulses = int(n_pulses)
    segs = segments_for(n_pulses, taus if mode == "fringe" else None)
    starts = np.array([s["start"] for s in segs])
    tau_arr = np.array([s["tau_ps"] for s in segs])

    def tau_of_pulse(pu):
        return tau_arr[np.searchsorted(starts, pu, side="right") - 1]

    probs = class_probabilities(params.eta, mode, block_source2)
    cum = np.cumsum(probs)
    class_counts = np.zeros(6, dtype=np.int64)
    pre_eff_fourfold = 0
    out_ch, out_t = [], []
    writer = TagWriter(out_path) if out_path is not None else None
    n_tags = 0
    try:
        for b, lo in enumerate(range(0, n_pulses, BLOCK)):
            hi = min(lo + BLOCK, n_pulses)
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
            pulses = np.arange(lo, hi, dtype=np.int64)
            cls = np.searchsorted(cum, rng.random(hi - lo), side="right")
            cls = np.minimum(cls, 5)
            class_counts += np.bincount(cls, minlength=6)
            busy = cls > 0
            ph = _Photons()
            _generate_block(params, mode, tau_of_pulse, pulses[busy], cls[busy], rng, ph)
            pu, role, om = ph.arrays()
            lam = omega_to_nm(om) if len(om) else om
            keep = np.ones(len(pu), dtype=bool)
            for r in range(4):
                sel = role == r
                keep[sel] &= tofs[ROLES[r]].in_window(lam[sel])
            # four-fold candidates before detector efficiency
            if len(pu):
                occ = np.zeros((hi - lo, 4), dtype=bool)
                occ[pu[keep] - lo, role[keep]] = True
                pre_eff_fourfold += int(np.sum(occ.all(axis=1)))
            effs = np.array([coinc.efficiency(r) for r in range(4)])
            keep &= rng.random(len(pu)) < effs[role]
            pu, role, lam = pu[keep], role[keep], lam[keep]
            times = np.empty(len(pu), dtype=np.int64)
            for r in range(4):
                sel = role == r
                times[sel] = map_to_tags(tofs[ROLES[r]], pu[sel], lam[sel], rng, coinc.delay(r))
            chans = np.array([coinc.channel(r) for r in range(4)])[role]
            if coinc.dark_prob > 0:
                for r in range(4):
                    nd = rng.binomial(hi - lo, coinc.dark_prob)
                    dp = rng.choice(pulses, size=nd, replace=False)
                    dt = dp * rep + rng.integers(0, rep, size=nd)
                    times = np.concatenate([times, dt])
                    chans = np.concatenate([chans, np.full(nd, coinc.channel(r))])
            order = np.lexsort((chans, times))
            chans, times = chans[order], times[order]
            n_tags += len(times)
            if writer is not None:
                writer.write(chans, times)
            else:
                out_ch.append(chans)
                out_t.append(times)
    finally:
        if writer is not None:
            writer.close()

    meta = {
        "format": "freqswap-tags-v1",
        "mode": mode,
        "n_pulses": n_pulses,
        "seed": int(seed),
        "rep_period": int(rep),
        "block_source2": bool(block_source2),
        "segments": segs,
        "class_counts": dict(zip(["none", "single1", "single2", "psi12", "psi11", "psi22"], map(int, class_counts))),
        "fourfold_pre_efficiency": int(pre_eff_fourfold),
        "n_tags": int(n_tags),
        "channels": {r: int(coinc.channels[r]) for r in ROLES},
        "efficiencies": {r: coinc.efficiency(i) for i, r in enumerate(ROLES)},
        "delays": {r: coinc.delay(i) for i, r in enumerate(ROLES)},
        "source": {
            "omega0": float(params.omega0),
            "sigma_s": float(params.sigma_s),
            "sigma_i": float(params.sigma_i),
            "alpha": float(params.alpha),
            "eta": float(params.eta),
        },
        "tofs": {r: _tofs_dict(tofs[r]) for r in ROLES},
    }
    if writer is not None:
        write_meta(out_path, meta)
        return SynthResult(None, None, meta)
    ch = np.concatenate(out_ch) if out_ch else np.zeros(0, dtype=np.int64)
    tt = np.concatenate(out_t) if out_t else np.zeros(0, dtype=np.int64)
    return SynthResult(ch, tt, meta)


def _tofs_dict(t: TofsConfig) -> dict:
    return {
        "dispersion": float(t.dispersion),
        "reference_wavelength": float(t.reference_wavelength),
        "jitter_fwhm": float(t.jitter_fwhm),
        "rep_period": int(t.rep_period),
        "spectral_window": None if t.spectral_window is None else float(t.spectral_window),
        "offset_ps": float(t.offset_ps),
    }


def tofs_from_dict(d: dict) -> TofsConfig:
    return TofsConfig(**d)


def default_tofs(mode: str = "swap") -> dict:
    """Grating spectrometers on the signals, fibre spools on the idlers.

    The source-JSI mode puts both photons on spools.
    """
    cfbg1 = TofsConfig(944.0, 830.0, 30.0, 12500, 10.0)
    cfbg2 = TofsConfig(946.0, 830.0, 30.0, 12500, 10.0)
    spool = TofsConfig(-54.0, 830.0, 30.0, 12500, None)
    if mode == "source":
        return {"signal1": spool, "signal2": spool, "idler_c": spool, "idler_d": spool}
    return {"signal1": cfbg1, "signal2": cfbg2, "idler_c": spool, "idler_d": spool}
