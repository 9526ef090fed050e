"""Quasi-orthogonal heralded mode selection and multiplexing accounting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NullStateError
from .filters import FilterBank
from .mixed import mixed_heralded_state
from .pure import heralded_state
from .spectral import JsaParams, SpectralGrid, default_grids


@dataclass
class JsiTable:
    """Heralded JSIs keyed by bin pair, stored as histograms that sum to one.

    ``cell`` is the pixel area, so ``F / cell`` is a density; ``coverage`` is
    an optional per-entry fraction of the expected mass inside the window.
    """

    axis1: np.ndarray
    axis2: np.ndarray
    entries: dict
    weights: dict
    cell: float = 1.0
    coverage: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.axis1), len(self.axis2))
        for key, F in list(self.entries.items()):
            F = np.asarray(F, dtype=float)
            if F.shape != shape:
                raise ContractViolation(f"entry {key} has shape {F.shape}, table grid is {shape}")
            s = F.sum()
            self.entries[key] = F / s if s > 0 else F
            self.weights.setdefault(key, 0.0)

    def keys(self):
        return sorted(self.entries)

    def __len__(self):
        return len(self.entries)

    def same_grid(self, other: "JsiTable") -> bool:
        return (
            self.axis1.shape == other.axis1.shape
            and self.axis2.shape == other.axis2.shape
            and np.allclose(self.axis1, other.axis1, rtol=1e-12, atol=0)
            and np.allclose(self.axis2, other.axis2, rtol=1e-12, atol=0)
        )


def from_model(
    params: JsaParams,
    bank: FilterBank,
    grid: SpectralGrid | None = None,
    include_diagonal: bool = True,
) -> JsiTable:
    """Model table over every unordered bin pair of ``bank`` (delta or finite filters)."""
    grid = default_grids(params)[0] if grid is None else grid
    entries, weights = {}, {}
    for a, j in enumerate(bank.labels):
        for k in bank.labels[a:]:
            if j == k and (bank.shape == "delta" or not include_diagonal):
                continue
            try:
                if bank.shape == "delta":
                    st = heralded_state(params, bank.centers[bank.index(j)], bank.centers[bank.index(k)], grid, j, k)
                    F, p = st.amplitude().intensity(), st.p_jk
                else:
                    st = mixed_heralded_state(params, bank, j, k, grid)
                    F, p = st.jsi(), st.p_jk
            except NullStateError:
                continue
            entries[(j, k)] = F
            weights[(j, k)] = p
    pts = grid.points
    return JsiTable(pts, pts, entries, weights, grid.step**2, meta={"source": "model", "shape": bank.shape})


def symmetrize(table: JsiTable) -> JsiTable:
    """Exchange-symmetrize every entry and merge (j, k) with (k, j).

    Uses the four-term average 1/4 (F_jk + F_jk^T + F_kj + F_kj^T), so the
    output is symmetric to rounding even for noisy inputs; the residual
    asymmetry of the merged raw entries is recorded in ``meta``.
    """
    if not len(table):
        raise ContractViolation("cannot symmetrize an empty table")
    entries, weights, cov, asym = {}, {}, {}, {}
    done = set()
    for key in table.keys():
        if key in done:
            continue
        j, k = key
        u = (min(j, k), max(j, k))
        parts = [table.entries[key]]
        wt = table.weights.get(key, 0.0)
        done.add(key)
        other = (k, j)
        if other != key and other in table.entries:
            parts.append(table.entries[other])
            wt += table.weights.get(other, 0.0)
            done.add(other)
        raw = sum(parts) / len(parts)
        F = 0.5 * (raw + raw.T)
        F = F / F.sum() if F.sum() > 0 else F
        entries[u] = F
        weights[u] = wt
        peak = np.max(np.abs(F)) or 1.0
        asym[u] = float(np.max(np.abs(raw - raw.T)) / (2 * peak))
        if key in table.coverage or other in table.coverage:
            cov[u] = min(table.coverage.get(key, 1.0), table.coverage.get(other, 1.0))
    meta = dict(table.meta, asymmetry=asym, symmetrized=True)
    return JsiTable(table.axis1, table.axis2, entries, weights, table.cell, cov, meta)


@dataclass(frozen=True)
class OverlapResult:
    keys: list
    cosine: np.ndarray
    raw: np.ndarray

    def value(self, a, b) -> float:
        return float(self.cosine[self.keys.index(a), self.keys.index(b)])


def overlap_matrix(table: JsiTable, other: JsiTable | None = None) -> OverlapResult:
    """Cosine-normalized overlaps sum F_n F_m / sqrt(sum F_n^2 sum F_m^2) and the raw density integral."""
    if other is not None and not table.same_grid(other):
        raise ContractViolation("tables are on different grids")
    keys = table.keys()
    if not keys:
        return OverlapResult([], np.zeros((0, 0)), np.zeros((0, 0)))
    X = np.stack([table.entries[k].ravel() for k in keys])
    gram = X @ X.T
    nrm = np.sqrt(np.diag(gram))
    nrm[nrm == 0] = 1.0
    cos = gram / np.outer(nrm, nrm)
    np.fill_diagonal(cos, 1.0)
    return OverlapResult(keys, cos, gram / table.cell)


@dataclass(frozen=True)
class ModeSet:
    keys: list
    epsilon: float
    overlaps: np.ndarray
    flagged: tuple = ()

    def __len__(self):
        return len(self.keys)

    def max_crosstalk(self) -> float:
        if len(self.keys) < 2:
            return 0.0
        o = self.overlaps.copy()
        np.fill_diagonal(o, 0.0)
        return float(o.max())


def select_orthogonal(table: JsiTable, epsilon: float, coverage_floor: float = 0.999) -> ModeSet:
    """Greedy selection by descending weight; ties broken by (j, k) order."""
    if not 0 < epsilon <= 1:
        raise ContractViolation(f"epsilon must lie in (0, 1], got {epsilon}")
    ov = overlap_matrix(table)
    order = sorted(range(len(ov.keys)), key=lambda i: (-table.weights.get(ov.keys[i], 0.0), ov.keys[i]))
    chosen: list[int] = []
    for i in order:
        if all(ov.cosine[i, c] <= epsilon for c in chosen):
            chosen.append(i)
    keys = [ov.keys[i] for i in chosen]
    sub = ov.cosine[np.ix_(chosen, chosen)] if chosen else np.zeros((0, 0))
    flagged = tuple(k for k in keys if table.coverage.get(k, 1.0) < coverage_floor)
    return ModeSet(keys, epsilon, sub, flagged)


def table_subset(table: JsiTable, keys) -> JsiTable:
    keys = list(keys)
    return JsiTable(
        table.axis1,
        table.axis2,
        {k: table.entries[k] for k in keys},
        {k: table.weights[k] for k in keys},
        table.cell,
        {k: table.coverage[k] for k in keys if k in table.coverage},
        dict(table.meta),
    )


@dataclass(frozen=True)
class ChannelReport:
    channels: list  # dicts: channel, j, k, rate_share, max_crosstalk
    discarded_fraction: float
    selected_total: float
    total: float


def _pair_weight(p, j, k) -> float:
    if isinstance(p, dict):
        return float(p.get((j, k), 0.0) + (p.get((k, j), 0.0) if j != k else 0.0))
    labels, mat = p
    a, b = list(labels).index(j), list(labels).index(k)
    return float(mat[a, b] + (mat[b, a] if a != b else 0.0))


def _total_weight(p) -> float:
    if isinstance(p, dict):
        return float(sum(p.values()))
    return float(np.sum(p[1]))


def multiplex_report(modeset: ModeSet, p) -> ChannelReport:
    """Rate share, crosstalk and discarded heralds for a selected mode set.

    ``p`` is either a dict keyed by (j, k) or a ``(labels, matrix)`` pair.
    """
    shares = np.array([_pair_weight(p, j, k) for j, k in modeset.keys])
    sel = float(shares.sum())
    tot = _total_weight(p)
    o = modeset.overlaps.copy() if len(modeset) else np.zeros((0, 0))
    if len(modeset):
        np.fill_diagonal(o, 0.0)
    chans = []
    for n, (j, k) in enumerate(modeset.keys):
        chans.append({
            "channel": n,
            "j": j,
            "k": k,
            "rate_share": float(shares[n] / sel) if sel > 0 else 0.0,
            "max_crosstalk": float(o[n].max()) if len(modeset) > 1 else 0.0,
        })
    disc = 1.0 - sel / tot if tot > 0 else 0.0
    return ChannelReport(chans, float(disc), sel, tot)
