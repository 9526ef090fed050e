"""Run configuration: a YAML file validated into typed sections.

Precedence (lowest first): shipped defaults, the config file, environment
variables ``FREQSWAP_OUT`` / ``FREQSWAP_SEED``, ``--set key=value`` overrides,
then the explicit ``--out`` / ``--seed`` flags.
"""
from __future__ import annotations

import copy
import hashlib
import os
from importlib import resources
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .filters import FilterBank, build_filter_bank, bin_wavelengths
from .spectral import JsaParams, SpectralGrid, default_grids, edge_mass
from .timetag.synth import ROLES, CoincidenceConfig, default_tofs
from .timetag.tofs import TofsConfig
from .units import nm_to_omega

ENV_OUT = "FREQSWAP_OUT"
ENV_SEED = "FREQSWAP_SEED"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SourceConfig(_Strict):
    omega0_nm: float = 830.0
    sigma_s: float = Field(gt=0)
    sigma_i: float = Field(gt=0)
    alpha: float
    eta: float = Field(0.04, gt=0, lt=0.5)
    shift_s: float = 0.0
    shift_i: float = 0.0

    @model_validator(mode="after")
    def _positive_definite(self):
        bound = 1.0 / (2 * self.sigma_s * self.sigma_i)
        if not abs(self.alpha) < bound:
            raise ValueError(
                f"alpha={self.alpha} makes the exponent non positive-definite: "
                f"|alpha| must be < 1/(2 sigma_s sigma_i) = {bound:.6g}"
            )
        return self

    def params(self) -> JsaParams:
        return JsaParams(
            float(nm_to_omega(self.omega0_nm)), self.sigma_s, self.sigma_i, self.alpha, self.eta, self.shift_s, self.shift_i
        )


class GridConfig(_Strict):
    n_points: int = Field(256, ge=2)
    half_span: float = Field(6.0, gt=0, description="half width in marginal standard deviations")
    export_points: int = Field(96, ge=2)


class BankConfig(_Strict):
    center_nm: float = 830.0
    pitch_nm: float = Field(1.5, gt=0)
    jmax: int = Field(4, ge=1)
    width_nm: float = Field(1.5, ge=0)
    shape: Literal["gaussian", "tophat", "delta"] = "gaussian"
    M: int = Field(8, ge=1)


class TauConfig(_Strict):
    n_points: int = Field(2048, ge=8)
    half_span: float = Field(6.0, gt=0, description="half width in units of 1/sigma_s")
    model: Literal["exact", "approximate"] = "exact"
    integrated_bins: int = Field(64, ge=4)


class ModesConfig(_Strict):
    epsilon: float = Field(0.15, gt=0, le=1)
    table: Literal["delta", "bank"] = "delta"


class MismatchConfig(_Strict):
    target_overlap: float = Field(0.8, gt=0, le=1)
    n_phases: int = Field(201, ge=3)


class TofsModel(_Strict):
    dispersion: float
    reference_wavelength: float = 830.0
    jitter_fwhm: float = Field(30.0, ge=0)
    rep_period: int = Field(12500, gt=0)
    spectral_window: float | None = None
    offset_ps: float = 6250.0

    @field_validator("dispersion")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("dispersion must be nonzero")
        return v

    def build(self) -> TofsConfig:
        return TofsConfig(**self.model_dump())


class TimetagConfig(_Strict):
    mode: Literal["swap", "fringe", "source"] = "swap"
    n_pulses: int = Field(1_000_000, ge=1)
    taus_ps: list[float] | None = None
    window_ps: float = Field(12500.0, gt=0)
    efficiencies: dict[str, float] = Field(default_factory=dict)
    delays: dict[str, float] = Field(default_factory=dict)
    dark_prob: float = Field(0.0, ge=0, lt=1)
    block_source2: bool = False
    tofs: dict[str, TofsModel] | None = None

    @field_validator("efficiencies", "delays")
    @classmethod
    def _roles(cls, v):
        bad = set(v) - set(ROLES)
        if bad:
            raise ValueError(f"unknown roles {sorted(bad)}; expected a subset of {ROLES}")
        return v

    @field_validator("tofs")
    @classmethod
    def _tofs_roles(cls, v):
        if v is not None and set(v) != set(ROLES):
            raise ValueError(f"tofs must configure exactly the roles {ROLES}")
        return v


class BackgroundConfig(_Strict):
    fraction_source1: float = Field(0.25, ge=0, le=1)
    fraction_source2: float = Field(0.25, ge=0, le=1)
    levels_file: str | None = None

    @model_validator(mode="after")
    def _sum(self):
        if self.fraction_source1 + self.fraction_source2 >= 1:
            raise ValueError("background fractions must sum below 1")
        return self


class CalibrationConfig(_Strict):
    roles: list[str] = Field(default_factory=lambda: ["signal1", "signal2", "idler_c", "idler_d"])
    start_nm: float = 820.0
    stop_nm: float = 840.0
    n_steps: int = Field(40, ge=3)
    photons_per_step: int = Field(200, ge=1)
    filter_fwhm_nm: float = Field(1.0, ge=0)


class RunConfig(_Strict):
    source: SourceConfig | None = None
    source2: SourceConfig | None = None
    grid: GridConfig = GridConfig()
    bank: BankConfig = BankConfig()
    tau: TauConfig = TauConfig()
    modes: ModesConfig = ModesConfig()
    mismatch: MismatchConfig = MismatchConfig()
    timetag: TimetagConfig = TimetagConfig()
    background: BackgroundConfig = BackgroundConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    output_dir: str = "out"
    seed: int = 1

    # derived objects
    def params(self) -> JsaParams:
        return (self.source or shipped_source()).params()

    def params2(self) -> JsaParams | None:
        return None if self.source2 is None else self.source2.params()

    def grids(self, params: JsaParams | None = None):
        return default_grids(params or self.params(), self.grid.n_points, self.grid.half_span)

    def export_grid(self, params: JsaParams | None = None) -> SpectralGrid:
        return default_grids(params or self.params(), self.grid.export_points, self.grid.half_span)[0]

    def bank_labels_nm(self):
        b = self.bank
        return bin_wavelengths(b.center_nm, b.pitch_nm, b.jmax)

    def filter_bank(self, shape: str | None = None) -> FilterBank:
        labels, lam = self.bank_labels_nm()
        shape = shape or self.bank.shape
        width = self.bank.pitch_nm if shape == "delta" else self.bank.width_nm
        if shape != "delta" and width <= 0:
            raise ConfigurationError("bank.width_nm must be positive for finite filters")
        return build_filter_bank(lam, width, shape, self.bank.M, labels)

    def tau_grid(self, params: JsaParams | None = None) -> np.ndarray:
        p = params or self.params()
        return np.linspace(-self.tau.half_span / p.sigma_s, self.tau.half_span / p.sigma_s, self.tau.n_points)

    def tofs(self, mode: str | None = None) -> dict:
        if self.timetag.tofs is not None:
            return {r: t.build() for r, t in self.timetag.tofs.items()}
        return default_tofs(mode or self.timetag.mode)

    def coincidence(self) -> CoincidenceConfig:
        t = self.timetag
        return CoincidenceConfig(t.window_ps, delays=dict(t.delays), efficiencies=dict(t.efficiencies), dark_prob=t.dark_prob)

    def canonical(self) -> str:
        """Resolved configuration without the output location; the basis of the config hash."""
        doc = self.model_dump(mode="json", exclude={"output_dir"})
        if doc["source"] is None:
            doc["source"] = shipped_source().model_dump(mode="json")
        return yaml.safe_dump(doc, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _data_text(name: str) -> str:
    return resources.files("freqswap").joinpath("data", name).read_text()


def shipped_source() -> SourceConfig:
    doc = yaml.safe_load(_data_text("default_params.yaml"))
    return SourceConfig(**doc["source"])


def shipped_params() -> JsaParams:
    return shipped_source().params()


def default_config_text() -> str:
    return _data_text("default_config.yaml")


def _parse_scalar(text: str):
    return yaml.safe_load(text)


def apply_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
    key, val = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        if node.get(p) is None:
            node[p] = {}
        node = node[p]
        if not isinstance(node, dict):
            raise ConfigurationError(f"override path {key!r} crosses a non-mapping value")
    node[parts[-1]] = _parse_scalar(val)


def load_document(path=None) -> dict:
    text = default_config_text() if path is None else open(path).read()
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}".replace("\n", " ")) from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be a mapping")
    return doc


def format_validation_error(exc: ValidationError) -> list[str]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def load_config(path=None, overrides=(), out=None, seed=None, env=None) -> RunConfig:
    env = os.environ if env is None else env
    doc = copy.deepcopy(load_document(path))
    if env.get(ENV_OUT):
        doc["output_dir"] = env[ENV_OUT]
    if env.get(ENV_SEED):
        doc["seed"] = int(env[ENV_SEED])
    for o in overrides:
        # partial overrides of a source start from the shipped parameters
        for name in ("source", "source2"):
            if o.split("=", 1)[0].startswith(name + ".") and doc.get(name) is None:
                base = doc.get("source") or yaml.safe_load(_data_text("default_params.yaml"))["source"]
                doc[name] = dict(base)
        apply_override(doc, o)
    if out is not None:
        doc["output_dir"] = str(out)
    if seed is not None:
        doc["seed"] = int(seed)
    try:
        return RunConfig(**doc)
    except ValidationError as exc:
        raise ConfigurationError("; ".join(format_validation_error(exc))) from None


def validate_config(path=None, overrides=(), out=None, seed=None) -> dict:
    """Check every embedded type without running anything; list derived quantities."""
    return config_report(load_config(path, overrides, out=out, seed=seed))


def config_report(cfg: RunConfig) -> dict:
    warnings = []
    p = cfg.params()
    gs, gi = cfg.grids(p)
    mass = edge_mass(p, gs, gi)
    if mass > 1e-4:
        warnings.append(f"grid: mass at edge {mass:.3g} above threshold 1e-4")
    labels, lam = cfg.bank_labels_nm()
    bank = cfg.filter_bank()
    half = max(abs(lam - cfg.bank.center_nm)) + cfg.bank.pitch_nm
    for role, t in cfg.tofs().items():
        try:
            h = half if t.spectral_window is None else min(half, t.spectral_window / 2)
            t.check_fits(h)
        except ConfigurationError as exc:
            warnings.append(f"timetag.tofs.{role}: {exc}")
    if cfg.params2() is not None:
        cfg.params2()
    cfg.coincidence()
    return {
        "valid": True,
        "warnings": warnings,
        "config_hash": cfg.digest(),
        "K_estimate": float(1 / np.sqrt(1 - p.correlation**2)),
        "edge_mass": mass,
        "bins": [
            {"j": j, "lambda_nm": float(l), "omega_rad_per_ps": float(nm_to_omega(l)), "width_rad_per_ps": float(w)}
            for j, l, w in zip(labels, lam, bank.widths)
        ],
        "grid_signal": (gs.lo, gs.hi, gs.n_points),
        "grid_idler": (gi.lo, gi.hi, gi.n_points),
    }
