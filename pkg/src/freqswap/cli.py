"""Command-line entry point: ``freqswap <command> [--config PATH] [--out DIR] ...``.

Every command writes CSV / structured-text outputs, ``params_used.txt`` and a
``manifest.txt`` with checksums into the output directory. Exit codes: 0 ok,
2 configuration error, 3 numerical or contract failure, 4 I/O error; failures
print one line ``freqswap: error code=<n> kind=<Exception>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, validate_config
from .errors import ConfigurationError, FreqSwapError, InvalidBackgroundError, NullStateError, ParameterDomainError
from .fit import BLUR_NM, blurred_schmidt_number
from .io import RunManifest, Timer, load_matrix, parse_manifest, read_columns, save_matrix, write_columns, write_fringe, write_jsi
from .io import write_report, write_rows, write_text
from .mixed import (
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
from .modes import JsiTable, from_model, multiplex_report, overlap_matrix, select_orthogonal, symmetrize
from .pure import (
    FringeCurve,
    beat_frequency,
    fringe_pure,
    herald_probability,
    heralded_jsi,
    heralded_state,
    integrated_observables,
    tiling_bank,
)
from .spectral import blur_jsa, build_jsa, reduced_density, schmidt_decompose
from .timetag import analyze_file, calibrate_dispersion, default_binning, read_meta, synth_calibration_scan
from .timetag.histograms import pjk_goodness, source_divergence
from .timetag.synth import ROLES, CoincidenceConfig, synth_timetags, tofs_from_dict
from .units import omega_to_nm, width_nm_to_omega

COMMANDS = (
    "validate",
    "jsi",
    "fringes",
    "schmidt",
    "purity",
    "mismatch",
    "select-modes",
    "synth",
    "analyze",
    "calibrate",
    "report",
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

PLOT_SCRIPT = '''"""Plot every CSV in this directory (needs matplotlib; not a package dependency)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def load(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    cols = {}
    for i, h in enumerate(head):
        try:
            cols[h] = np.array([float(r[i]) if r[i] else np.nan for r in body])
        except ValueError:
            pass
    return cols


def plot(path):
    c = load(path)
    fig, ax = plt.subplots()
    if "omega1_nm" in c and "density" in c:
        x, y = np.unique(c["omega1_nm"]), np.unique(c["omega2_nm"])
        z = c["density"].reshape(len(x), len(y))
        ax.pcolormesh(y, x, z, shading="auto")
        ax.set_xlabel("omega2 [nm]")
        ax.set_ylabel("omega1 [nm]")
    elif "tau_ps" in c:
        for name, v in c.items():
            if name != "tau_ps":
                ax.plot(c["tau_ps"], v, label=name)
        ax.set_xlabel("tau [ps]")
        ax.legend()
    else:
        plt.close(fig)
        return
    ax.set_title(path.name)
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    root = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
    for p in sorted(root.rglob("*.csv")):
        plot(p)
'''


def pair_tag(j, k) -> str:
    return f"j{int(j):+d}_k{int(k):+d}"


@dataclass
class Context:
    cfg: RunConfig
    root: Path
    base: Path
    quiet: bool = False
    input: str | None = None
    config_path: str | None = None
    overrides: tuple = ()
    timer: Timer = field(default_factory=Timer)
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def path(self, *parts) -> Path:
        p = self.base.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def sub(self, name: str) -> "Context":
        return Context(
            self.cfg, self.root, self.base / name, self.quiet, self.input, self.config_path, self.overrides,
            self.timer, self.outputs, self.summary,
        )

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)


# -- model commands ---------------------------------------------------------


def cmd_validate(ctx: Context) -> dict:
    rep = validate_config(ctx.config_path, ctx.overrides, out=ctx.cfg.output_dir, seed=ctx.cfg.seed)
    ctx.add(write_report(ctx.path("validate.txt"), _flatten_validation(rep)))
    for w in rep["warnings"]:
        ctx.say(f"warning: {w}")
    ctx.say(f"valid: {rep['valid']}  warnings: {len(rep['warnings'])}  edge_mass: {rep['edge_mass']:.3g}")
    return rep


def _flatten_validation(rep: dict) -> dict:
    out = {k: v for k, v in rep.items() if k not in ("bins", "warnings")}
    out["warnings"] = {str(i): w for i, w in enumerate(rep["warnings"])}
    out["bins"] = {
        f"j{b['j']:+d}": {k: v for k, v in b.items() if k != "j"} for b in rep["bins"]
    }
    return out


def cmd_schmidt(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    with ctx.timer("schmidt"):
        gs, gi = cfg.grids(p)
        jsa = build_jsa(p, gs, gi)
        sr = schmidt_decompose(jsa)
        rho_s = reduced_density(jsa, "signal")
        rho_i = reduced_density(jsa, "idler")
        blur = float(width_nm_to_omega(BLUR_NM, cfg.bank.center_nm))
        k_blur = blurred_schmidt_number(p, blur, blur)
        k_blur_num = schmidt_decompose(blur_jsa(jsa, blur, blur)).K
    coeffs = np.asarray(sr.coefficients)
    n = min(len(coeffs), 64)
    ctx.add(write_columns(ctx.path("schmidt_coefficients.csv"), {"n": np.arange(n), "lambda": coeffs[:n]}))
    rep = {
        "K": sr.K,
        "K_analytic": 1.0 / np.sqrt(1.0 - p.correlation**2),
        "K_blur_0p5nm": k_blur,
        "K_blur_0p5nm_numeric": k_blur_num,
        "purity_signal": rho_s.purity(),
        "purity_idler": rho_i.purity(),
        "correlation": p.correlation,
        "mode_bound": int(np.floor(sr.K * (sr.K - 1) / 2)),
    }
    ctx.add(write_report(ctx.path("schmidt.txt"), rep))
    ctx.summary["schmidt"] = rep
    ctx.say(f"K = {sr.K:.4f}  K(0.5 nm blur) = {k_blur:.4f}")
    return rep


def _bank_pairs(bank, diagonal=False):
    labs = list(bank.labels)
    return [(j, k) for a, j in enumerate(labs) for k in labs[a if diagonal else a + 1:]]


def cmd_jsi(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    gs, gi = cfg.grids(p)
    with ctx.timer("jsi_source"):
        jsa = build_jsa(p, gs, gi)
        ctx.add(write_jsi(ctx.path("jsi_source.csv"), gs, gi, jsa.intensity()))
    delta = cfg.filter_bank("delta")
    ge = cfg.export_grid(p)
    rows = []
    with ctx.timer("jsi_heralded"):
        for j, k in _bank_pairs(delta):
            Oj, Ok = delta.centers[delta.index(j)], delta.centers[delta.index(k)]
            pjk = herald_probability(p, Oj, Ok, gs)
            try:
                st = heralded_state(p, Oj, Ok, gs, j, k)
                F = heralded_jsi(p, Oj, Ok, ge)
            except NullStateError:
                rows.append([j, k, omega_to_nm(Oj), omega_to_nm(Ok), pjk, 0.0, 0.0, True])
                continue
            ctx.add(write_jsi(ctx.path("heralded", f"F_{pair_tag(j, k)}.csv"), ge, ge, F.intensity()))
            rows.append([j, k, omega_to_nm(Oj), omega_to_nm(Ok), pjk, st.c_jk, st.beat, False])
    tot = sum(2 * r[4] for r in rows)
    header = ["j", "k", "lambda_j_nm", "lambda_k_nm", "p_jk", "p_norm", "c_jk", "beat_rad_per_ps", "null"]
    out_rows = [r[:5] + [r[4] / tot if tot > 0 else 0.0] + r[5:] for r in rows]
    ctx.add(write_rows(ctx.path("pairs.csv"), header, out_rows))
    rep = {"pairs": len(rows), "null_pairs": sum(r[-1] for r in rows)}
    bank = cfg.filter_bank()
    if bank.shape != "delta":
        with ctx.timer("jsi_mixed"):
            mrows = []
            for j, k in _bank_pairs(bank, diagonal=True):
                pm = mixed_herald_probability(p, bank, j, k, ge)
                mrows.append([j, k, pm])
                try:
                    st = mixed_heralded_state(p, bank, j, k, ge)
                except NullStateError:
                    continue
                ctx.add(write_jsi(ctx.path("heralded_bank", f"F_{pair_tag(j, k)}.csv"), ge, ge, st.jsi()))
            ctx.add(write_rows(ctx.path("pairs_bank.csv"), ["j", "k", "p_jk"], mrows))
        rep["bank_shape"] = bank.shape
    ctx.summary["jsi"] = rep
    ctx.say(f"wrote heralded JSIs for {rep['pairs'] - rep['null_pairs']} of {rep['pairs']} pairs")
    return rep


def cmd_fringes(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    gs, gi = cfg.grids(p)
    tau = cfg.tau_grid(p)
    delta = cfg.filter_bank("delta")
    rows = []
    with ctx.timer("fringes_pairs"):
        for j, k in _bank_pairs(delta):
            Oj, Ok = delta.centers[delta.index(j)], delta.centers[delta.index(k)]
            try:
                fr = fringe_pure(p, Oj, Ok, tau, cfg.tau.model, gs)
            except NullStateError:
                ctx.add(write_fringe(ctx.path("pairs", f"P_{pair_tag(j, k)}.csv"), tau, rate=np.zeros_like(tau)))
                rows.append([j, k, 0.0, None, None, None, None, True])
                continue
            pjk = herald_probability(p, Oj, Ok, gs)
            f_peak, f_bin = beat_frequency(fr)
            ctx.add(
                write_fringe(ctx.path("pairs", f"P_{pair_tag(j, k)}.csv"), tau, probability=fr.probability, rate=pjk * fr.probability)
            )
            rows.append([j, k, pjk, fr.meta["beat"], f_peak, f_bin, fr.visibility(), False])
    ctx.add(
        write_rows(
            ctx.path("fringes_pairs.csv"),
            ["j", "k", "p_jk", "beat_model", "beat_fourier", "fourier_bin", "visibility", "null"],
            rows,
        )
    )
    rep = {"model": cfg.tau.model, "pairs": len(rows)}
    with ctx.timer("fringes_integrated"):
        try:
            res = integrated_observables(p, tiling_bank(p, cfg.tau.integrated_bins, cfg.grid.half_span), (gs, gi), tau)
        except NullStateError:
            ctx.add(write_fringe(ctx.path("fringe_integrated.csv"), tau, rate=np.zeros_like(tau)))
            rep["integrated"] = "null"
        else:
            ctx.add(
                write_fringe(
                    ctx.path("fringe_integrated.csv"),
                    tau,
                    probability_sum=res.P_sum,
                    probability_closed=res.P_closed,
                    rate=res.total_closed * res.P_closed,
                )
            )
            ctx.add(write_jsi(ctx.path("jsi_integrated.csv"), gs, gs, res.F_closed))
            ctx.add(write_jsi(ctx.path("jsi_integrated_sum.csv"), gs, gs, res.F_sum))
            i0 = int(np.argmin(np.abs(tau)))
            far = np.abs(tau) > 0.8 * np.abs(tau).max()
            dip = float(res.P_closed.min())
            rep.update(
                integrated_max_dF=res.max_dF,
                integrated_max_dP=res.max_dP,
                integrated_total=res.total_closed,
                P_at_zero=float(res.P_closed[i0]),
                P_min=float(res.P_closed.min()),
                P_far=float(res.P_closed[far].mean()),
                central_peak=bool(res.P_closed[i0] > dip and res.P_closed[far].mean() > dip and abs(tau[np.argmin(res.P_closed)]) > 0),
            )
    bank = cfg.filter_bank()
    if bank.shape != "delta":
        with ctx.timer("fringes_bank"):
            mrows = []
            for j, k in _bank_pairs(bank, diagonal=True):
                try:
                    st = mixed_heralded_state(p, bank, j, k, gs)
                except NullStateError:
                    continue
                ob = mixed_observables(st, gs, tau)
                ctx.add(write_fringe(ctx.path("pairs_bank", f"P_{pair_tag(j, k)}.csv"), tau, probability=ob.fringe.probability))
                mrows.append([j, k, st.p_jk, ob.fringe.visibility()])
            ctx.add(write_rows(ctx.path("fringes_bank.csv"), ["j", "k", "p_jk", "visibility"], mrows))
            if mrows:
                P_bank, _ = mixed_integrated_fringe(p, bank, tau, gs)
                ctx.add(write_fringe(ctx.path("fringe_integrated_bank.csv"), tau, probability=P_bank))
    ctx.summary["fringes"] = rep
    ctx.add(write_report(ctx.path("fringes.txt"), rep))
    ctx.say(f"wrote {len(rows)} pair fringes ({cfg.tau.model}) and the integrated fringe")
    return rep


def cmd_purity(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    gs, _ = cfg.grids(p)
    bank = cfg.filter_bank()
    labs = list(bank.labels)
    rows = []
    with ctx.timer("purity"):
        for a, j in enumerate(labs):
            k = labs[a + 1] if a + 1 < len(labs) else labs[a - 1]
            r = purity_and_hom(p, bank, j, k, gs)
            closed = heralded_purity_gaussian(p, bank.widths[a]) if bank.shape == "gaussian" else None
            rows.append([j, float(omega_to_nm(bank.centers[a])), r["purity_j"], closed, k, r["hom_visibility"]])
        ctx.add(
            write_rows(ctx.path("purity_bins.csv"), ["j", "lambda_nm", "purity", "purity_closed", "neighbor", "hom_visibility"], rows)
        )
        unres = purity_and_hom(p, unresolved_bank(p, cfg.grid.half_span), 0, None, gs)["purity_j"]
        widths = np.array([0.25, 0.5, 1.0, 1.5, 3.0, 6.0])
        sweep = []
        for w in widths:
            b = _single_filter(cfg, w)
            sweep.append(purity_and_hom(p, b, 0, None, gs)["purity_j"])
        ctx.add(write_columns(ctx.path("purity_sweep.csv"), {"width_nm": widths, "purity": np.array(sweep)}))
    j0 = labs.index(0) if 0 in labs else len(labs) // 2
    rep = {
        "shape": bank.shape,
        "width_nm": cfg.bank.width_nm,
        "purity_center": rows[j0][2],
        "purity_unresolved": unres,
        "inverse_K": float(np.sqrt(1.0 - p.correlation**2)),
        "sweep_monotone": bool(np.all(np.diff(sweep) <= 1e-12)),
    }
    ctx.add(write_report(ctx.path("purity.txt"), rep))
    ctx.summary["purity"] = rep
    ctx.say(f"purity ({bank.shape}, {cfg.bank.width_nm} nm) = {rep['purity_center']:.4f}; unresolved = {unres:.4f}")
    return rep


def _single_filter(cfg: RunConfig, width_nm: float):
    from .filters import build_filter_bank

    shape = cfg.bank.shape if cfg.bank.shape != "delta" else "gaussian"
    return build_filter_bank([cfg.bank.center_nm], width_nm, shape, max(cfg.bank.M, 8), (0,))


def cmd_mismatch(ctx: Context) -> dict:
    cfg = ctx.cfg
    p1 = cfg.params()
    p2 = cfg.params2()
    if p2 is None:
        p2 = p1.replace(shift_s=p1.shift_s + shift_for_overlap(p1, cfg.mismatch.target_overlap, "signal"))
    gs, gi = cfg.grids(p1)
    bank = cfg.filter_bank()
    phases = np.linspace(0.0, 4 * np.pi, cfg.mismatch.n_phases)
    with ctx.timer("mismatch"):
        res = source_mismatch(p1, p2, bank, grids=(gs, gi), phases=phases)
        labs = res.labels
        rows = [[j, k, res.V[a, b], res.overlap_f1_f2**2] for a, j in enumerate(labs) for b, k in enumerate(labs)]
        ctx.add(write_rows(ctx.path("mismatch_V.csv"), ["j", "k", "V_jk", "overlap_sq"], rows))
        ctx.add(
            write_columns(
                ctx.path("pump_phase.csv"), {"phase_rad": res.phases, "pcc_plus": res.pcc_plus, "pcc_minus": res.pcc_minus}
            )
        )
        delta = cfg.filter_bank("delta")
        j, k = labs[0], labs[-1]
        tau = cfg.tau_grid(p1)
        fr = mismatched_fringe(p1, p2, delta.centers[delta.index(j)], delta.centers[delta.index(k)], tau, gs)
        ctx.add(write_fringe(ctx.path(f"fringe_mismatch_{pair_tag(j, k)}.csv"), tau, probability=fr.probability))
    rep = {
        "overlap_f1_f2": res.overlap_f1_f2,
        "contrast": res.contrast,
        "V_min": float(res.V.min()),
        "V_ge_overlap_sq": bool(np.all(res.V >= res.overlap_f1_f2**2 - 1e-8)),
        "shift_s": p2.shift_s - p1.shift_s,
        "shift_i": p2.shift_i - p1.shift_i,
    }
    ctx.add(write_report(ctx.path("mismatch.txt"), rep))
    ctx.summary["mismatch"] = rep
    ctx.say(f"source overlap {res.overlap_f1_f2:.6f}, pump-phase contrast {res.contrast:.6f}")
    return rep


def _measured_table(path) -> tuple[JsiTable, dict]:
    z = load_matrix(path)
    labels = [int(x) for x in z["labels"]]
    edges = z["signal_edges"]
    axis = 0.5 * (edges[1:] + edges[:-1])
    entries, weights = {}, {}
    for a, j in enumerate(labels):
        for b, k in enumerate(labels):
            F = z["values"][a, b].astype(float)
            if F.sum() > 0:
                entries[(j, k)] = F
                weights[(j, k)] = float(F.sum())
    if not entries:
        raise NullStateError(f"{path}: no signal-pair counts to select modes from")
    return JsiTable(axis, axis, entries, weights, meta={"source": str(path)}), weights


def cmd_select_modes(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    with ctx.timer("select_modes"):
        if ctx.input:
            table, weights = _measured_table(ctx.input)
            source = "measured"
        else:
            bank = cfg.filter_bank("delta" if cfg.modes.table == "delta" else None)
            gs, _ = cfg.grids(p)
            table = from_model(p, bank, gs)
            weights = dict(table.weights)
            source = f"model-{bank.shape}"
        sym = symmetrize(table)
        ov = overlap_matrix(sym)
        ms = select_orthogonal(sym, cfg.modes.epsilon)
        rpt = multiplex_report(ms, weights)
    keys = ov.keys
    ctx.add(
        write_rows(
            ctx.path("overlaps.csv"),
            ["j1", "k1", "j2", "k2", "cosine"],
            [[a[0], a[1], b[0], b[1], ov.cosine[x, y]] for x, a in enumerate(keys) for y, b in enumerate(keys)],
        )
    )
    ctx.add(
        write_rows(
            ctx.path("modes.csv"),
            ["channel", "j", "k", "rate_share", "max_crosstalk"],
            [[c["channel"], c["j"], c["k"], c["rate_share"], c["max_crosstalk"]] for c in rpt.channels],
        )
    )
    K = 1.0 / np.sqrt(1.0 - p.correlation**2)
    rep = {
        "table": source,
        "epsilon": cfg.modes.epsilon,
        "n_modes": len(ms),
        "mode_bound": int(np.floor(K * (K - 1) / 2)),
        "within_bound": bool(len(ms) <= int(np.floor(K * (K - 1) / 2))),
        "max_crosstalk": ms.max_crosstalk(),
        "discarded_fraction": rpt.discarded_fraction,
        "modes": {str(n): f"({j},{k})" for n, (j, k) in enumerate(ms.keys)},
        "flagged": {str(n): f"({j},{k})" for n, (j, k) in enumerate(ms.flagged)},
    }
    ctx.add(write_report(ctx.path("modes.txt"), rep))
    ctx.summary["select_modes"] = rep
    ctx.say(f"{len(ms)} quasi-orthogonal modes at epsilon={cfg.modes.epsilon} (bound {rep['mode_bound']})")
    return rep


# -- time-tag commands --------------------------------------------------------


def _taus_for(cfg: RunConfig, p) -> list | None:
    if cfg.timetag.mode != "fringe":
        return None
    if cfg.timetag.taus_ps is not None:
        return list(cfg.timetag.taus_ps)
    return list(np.linspace(-4.0 / p.sigma_s, 4.0 / p.sigma_s, 21))


def cmd_synth(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    t = cfg.timetag
    path = ctx.path("tags.bin")
    with ctx.timer("synth"):
        res = synth_timetags(
            p, cfg.tofs(), cfg.coincidence(), t.n_pulses, cfg.seed, t.mode, _taus_for(cfg, p), t.block_source2, out_path=path
        )
    ctx.add(path)
    ctx.add(str(path) + ".meta.yaml")
    meta = res.meta
    rep = {
        "mode": t.mode,
        "n_pulses": t.n_pulses,
        "seed": cfg.seed,
        "n_tags": meta.get("n_tags", 0),
        "fourfold_pre_efficiency": meta.get("fourfold_pre_efficiency", 0),
        "class_counts": dict(meta.get("class_counts", {})),
    }
    ctx.add(write_report(ctx.path("synth.txt"), rep))
    ctx.summary.setdefault("synth", {})[t.mode] = rep
    ctx.say(f"synthesized {rep['n_tags']} tags over {t.n_pulses} pulses ({t.mode})")
    return rep


def _binning(cfg: RunConfig, p):
    b = cfg.bank
    return default_binning(p, b.center_nm, b.pitch_nm, b.jmax)


def cmd_analyze(ctx: Context, tag_path=None) -> dict:
    cfg = ctx.cfg
    p = cfg.params()
    path = Path(tag_path or ctx.input or ctx.path("tags.bin"))
    meta = read_meta(path)
    coinc = CoincidenceConfig(
        cfg.timetag.window_ps, channels=meta["channels"], delays=meta.get("delays", {}), efficiencies=meta.get("efficiencies", {})
    )
    binning = _binning(cfg, p)
    with ctx.timer("analyze"):
        h = analyze_file(path, binning, coinc)
    tofs = {r: tofs_from_dict(d) for r, d in meta["tofs"].items()}
    mode = meta["mode"]
    labs = list(binning.labels)
    lam = 0.5 * (binning.idler_bins[:, 0] + binning.idler_bins[:, 1])
    rep = {"mode": mode, "events": dict(h.n_events), "out_of_range": dict(h.out_of_range)}
    if mode == "swap":
        gof = pjk_goodness(h, p, tofs, binning)
        rows = [[j, k, lam[a], lam[b], h.p_counts[a, b]] for a, j in enumerate(labs) for b, k in enumerate(labs)]
        ctx.add(write_rows(ctx.path("p_counts.csv"), ["j", "k", "lambda_j_nm", "lambda_k_nm", "counts"], rows))
        e = binning.signal_edges
        ctx.add(save_matrix(ctx.path("signal_jsi.npz"), h.signal_jsi, labels=np.array(labs), signal_edges=e))
        tot = h.signal_jsi.sum(axis=(0, 1)).astype(float)
        ctx.add(_write_hist_jsi(ctx.path("signal_jsi_total.csv"), e, e, tot))
        rep.update(chi2=gof.statistic, chi2_dof=gof.dof, chi2_pvalue=gof.pvalue, diagonal_counts=list(np.diag(h.p_counts)))
    elif mode == "source":
        js = source_divergence(h, p, tofs, binning)
        ctx.add(_write_hist_jsi(ctx.path("source_jsi.csv"), binning.source_signal_edges, binning.source_idler_edges, h.source_jsi))
        rep.update(js_divergence_bits=js, twofolds=int(h.source_jsi.sum()))
    else:
        rep.update(_analyze_fringe(ctx, h, labs))
    ctx.add(write_report(ctx.path("analysis.txt"), rep))
    ctx.summary.setdefault("analyze", {})[mode] = rep
    ctx.say(f"analyzed {h.n_events.get('tags', 0)} tags ({mode})")
    return rep


def _write_hist_jsi(path, edges1, edges2, counts):
    """Histogram counts as a long-format density per nm^2 (unit mass)."""
    c1 = 0.5 * (edges1[1:] + edges1[:-1])
    c2 = 0.5 * (edges2[1:] + edges2[:-1])
    area = np.outer(np.diff(edges1), np.diff(edges2))
    tot = counts.sum()
    dens = counts / (tot * area) if tot > 0 else np.zeros_like(area)
    L1, L2 = np.meshgrid(c1, c2, indexing="ij")
    return write_columns(path, {"omega1_nm": L1.ravel(), "omega2_nm": L2.ravel(), "density": dens.ravel()})


def _analyze_fringe(ctx: Context, h, labs) -> dict:
    cfg = ctx.cfg
    taus = h.taus
    P = h.fringe_probability()
    rows = []
    for s, tau in enumerate(taus):
        for a, j in enumerate(labs):
            for b, k in enumerate(labs):
                c, u = h.fringe_coinc[s, a, b], h.fringe_bunched[s, a, b]
                if c + u:
                    rows.append([tau, j, k, c, u, P[s, a, b]])
    ctx.add(write_rows(ctx.path("fringe_counts.csv"), ["tau_ps", "j", "k", "coincident", "bunched", "probability"], rows))
    coinc = h.fringe_coinc.sum(axis=(1, 2)).astype(float)
    bunch = h.fringe_bunched.sum(axis=(1, 2)).astype(float)
    tot = coinc + bunch
    out = {"segments": len(taus), "heralds": int(tot.sum())}
    cols = {"fourfold": h.fringe_fourfold}
    if np.all(tot > 0):
        raw = coinc / tot
        cols["probability"] = raw
        bg = BackgroundModel(cfg.background.fraction_source1, cfg.background.fraction_source2)
        fr = FringeCurve(np.asarray(taus), raw, label="measured", model="counts")
        try:
            cor = background_correct(fr, bg)
            cols["probability_corrected"] = cor.probability
            out.update(visibility_raw=fringe_visibility(raw), visibility_corrected=fringe_visibility(cor.probability))
        except InvalidBackgroundError as exc:
            out["background"] = f"not subtracted: {exc}"
    ctx.add(write_fringe(ctx.path("fringe_measured.csv"), taus, **cols))
    return out


def cmd_calibrate(ctx: Context) -> dict:
    cfg = ctx.cfg
    c = cfg.calibration
    rows = []
    with ctx.timer("calibrate"):
        if ctx.input:
            cols = read_columns(ctx.input)
            scan = np.column_stack([cols["set_wavelength_nm"], cols["time_ps"]])
            r = calibrate_dispersion(scan)
            rows.append(["input", None, r.dispersion, r.stderr, r.intercept, r.rms_residual, r.n_points])
        else:
            tofs = cfg.tofs()
            for n, role in enumerate(c.roles):
                if role not in ROLES:
                    raise ConfigurationError(f"calibration.roles: unknown role {role!r}")
                t = tofs[role]
                lam = np.linspace(c.start_nm, c.stop_nm, c.n_steps)
                if t.spectral_window is not None:
                    lam = lam[t.in_window(lam)]
                scan, _ = synth_calibration_scan(t, lam, c.photons_per_step, c.filter_fwhm_nm, seed=cfg.seed * 1000 + n)
                ctx.add(write_columns(ctx.path(f"scan_{role}.csv"), {"set_wavelength_nm": scan[:, 0], "time_ps": scan[:, 1]}))
                r = calibrate_dispersion(scan)
                rows.append([role, t.dispersion, r.dispersion, r.stderr, r.intercept, r.rms_residual, r.n_points])
    ctx.add(
        write_rows(
            ctx.path("calibration.csv"),
            ["role", "dispersion_true", "dispersion_fit", "stderr", "intercept_ps", "rms_residual_ps", "n_points"],
            rows,
        )
    )
    rep = {str(r[0]): {"dispersion_fit": r[2], "stderr": r[3]} for r in rows}
    ctx.summary["calibrate"] = rep
    ctx.say("; ".join(f"{r[0]}: {r[2]:.2f} ps/nm" for r in rows))
    return rep


def cmd_report(ctx: Context) -> dict:
    """Model figures plus the three synthetic-data round trips and calibration."""
    for name, fn in (
        ("schmidt", cmd_schmidt),
        ("jsi", cmd_jsi),
        ("fringes", cmd_fringes),
        ("purity", cmd_purity),
        ("mismatch", cmd_mismatch),
        ("modes", cmd_select_modes),
        ("calibrate", cmd_calibrate),
    ):
        fn(ctx.sub(name))
    for mode in ("swap", "source", "fringe"):
        sub = ctx.sub(f"timetag_{mode}")
        sub.cfg = ctx.cfg.model_copy(update={"timetag": ctx.cfg.timetag.model_copy(update={"mode": mode})})
        cmd_synth(sub)
        cmd_analyze(sub)
    ctx.add(write_report(ctx.path("report.txt"), ctx.summary))
    return ctx.summary


HANDLERS = {
    "validate": cmd_validate,
    "jsi": cmd_jsi,
    "fringes": cmd_fringes,
    "schmidt": cmd_schmidt,
    "purity": cmd_purity,
    "mismatch": cmd_mismatch,
    "select-modes": cmd_select_modes,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "calibrate": cmd_calibrate,
    "report": cmd_report,
}


@dataclass
class RunOutcome:
    status: int
    manifest: RunManifest | None = None
    error: str | None = None
    result: dict | None = None


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, ParameterDomainError)):
        return EXIT_CONFIG
    if isinstance(exc, (FreqSwapError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (KeyError, ValueError)):
        return EXIT_NUMERIC
    raise exc


def run(command: str, config_path=None, overrides=(), out=None, seed=None, quiet=False, input=None) -> RunOutcome:
    """Execute one subcommand; never raises for expected failures."""
    try:
        if command not in HANDLERS:
            raise ConfigurationError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
        if config_path is not None and not Path(config_path).exists():
            raise FileNotFoundError(f"config file not found: {config_path}")
        cfg = load_config(config_path, overrides, out=out, seed=seed)
        root = Path(cfg.output_dir)
        root.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg, root, root, quiet, input, config_path, tuple(overrides))
        with ctx.timer("total"):
            result = HANDLERS[command](ctx)
        ctx.add(write_text(root / "params_used.txt", cfg.canonical()))
        ctx.add(write_text(root / "plot_outputs.py", PLOT_SCRIPT))
        manifest = RunManifest(command, cfg.digest(), __version__, cfg.seed, timings=dict(ctx.timer.timings))
        for pth in dict.fromkeys(ctx.outputs):
            manifest.add(root, pth)
        # keep outputs of earlier commands in the same directory (e.g. synth before analyze)
        if (root / "manifest.txt").exists():
            for name in parse_manifest(root / "manifest.txt"):
                if name not in manifest.files and (root / name).exists():
                    manifest.add(root, root / name)
        write_text(root / "manifest.txt", manifest.text())
        return RunOutcome(EXIT_OK, manifest, None, result)
    except Exception as exc:  # mapped to an exit code or re-raised
        code = _exit_code(exc)
        msg = " ".join(str(exc).split())
        return RunOutcome(code, None, f"freqswap: error code={code} kind={type(exc).__name__}: {msg}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqswap", description="Frequency-resolved entanglement swapping models and analysis.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="YAML run configuration (default: shipped config)")
    ap.add_argument("--out", metavar="DIR", help="output directory")
    ap.add_argument("--seed", type=int, metavar="N")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override, repeatable")
    ap.add_argument("--input", metavar="PATH", help="tag file (analyze), histogram npz (select-modes) or scan csv (calibrate)")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    res = run(args.command, args.config, args.set, args.out, args.seed, args.quiet, args.input)
    if res.error:
        print(res.error, file=sys.stderr)
    return res.status


if __name__ == "__main__":
    raise SystemExit(main())
