"""Dispersion-based time-of-flight spectrometers and their calibration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import ConfigurationError, FitError
from ..units import FWHM_PER_SIGMA


@dataclass(frozen=True)
class TofsConfig:
    """Linear wavelength-to-time map t = offset + dispersion (lambda - lambda_ref).

    ``offset_ps`` places the reference wavelength inside the repetition
    period; ``spectral_window`` (nm, full width around the reference) models
    the finite band of a grating-based spectrometer.
    """

    dispersion: float  # ps/nm
    reference_wavelength: float = 830.0
    jitter_fwhm: float = 30.0
    rep_period: int = 12500
    spectral_window: float | None = None
    offset_ps: float = 6250.0

    def __post_init__(self):
        if self.dispersion == 0:
            raise ConfigurationError("TOFS dispersion must be nonzero")
        if self.jitter_fwhm < 0:
            raise ConfigurationError("jitter_fwhm must be >= 0")
        if self.rep_period <= 0:
            raise ConfigurationError("rep_period must be positive")
        if not 0 <= self.offset_ps < self.rep_period:
            raise ConfigurationError("offset_ps must lie inside the repetition period")
        if self.spectral_window is not None and self.spectral_window <= 0:
            raise ConfigurationError("spectral_window must be positive when given")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / FWHM_PER_SIGMA

    @property
    def resolution_nm(self) -> float:
        """Spectral resolution (FWHM, nm) set by the timing jitter."""
        return self.jitter_fwhm / abs(self.dispersion)

    def in_window(self, wavelength_nm) -> np.ndarray:
        lam = np.asarray(wavelength_nm, dtype=float)
        if self.spectral_window is None:
            return np.ones(lam.shape, dtype=bool)
        return np.abs(lam - self.reference_wavelength) <= self.spectral_window / 2

    def delay(self, wavelength_nm) -> np.ndarray:
        """Time offset inside the pulse period, in ps (no jitter)."""
        return self.offset_ps + self.dispersion * (np.asarray(wavelength_nm, dtype=float) - self.reference_wavelength)

    def wavelength(self, time_in_period) -> np.ndarray:
        return self.reference_wavelength + (np.asarray(time_in_period, dtype=float) - self.offset_ps) / self.dispersion

    def max_excursion(self, half_range_nm: float) -> float:
        return abs(self.dispersion) * half_range_nm

    def check_fits(self, half_range_nm: float) -> None:
        lo = self.offset_ps - self.max_excursion(half_range_nm) - 6 * self.jitter_sigma
        hi = self.offset_ps + self.max_excursion(half_range_nm) + 6 * self.jitter_sigma
        if lo < 0 or hi >= self.rep_period:
            raise ConfigurationError(
                f"TOFS map of +-{half_range_nm:.2f} nm spans [{lo:.0f}, {hi:.0f}] ps, outside one period"
            )


@dataclass(frozen=True)
class CalibrationResult:
    dispersion: float
    intercept: float
    stderr: float
    intercept_stderr: float
    n_points: int
    rms_residual: float

    def wavelength(self, t) -> np.ndarray:
        return (np.asarray(t, dtype=float) - self.intercept) / self.dispersion


def calibrate_dispersion(scan) -> CalibrationResult:
    """Least-squares line through (set wavelength [nm], tag time [ps]) pairs.

    ``scan`` is a sequence of pairs or an (n, 2) array; repeated wavelengths
    are allowed, but at least three distinct ones are required.
    """
    arr = np.asarray(scan, dtype=float).reshape(-1, 2)
    lam, t = arr[:, 0], arr[:, 1]
    if len(np.unique(lam)) < 3:
        raise FitError(f"calibration needs >= 3 distinct wavelengths, got {len(np.unique(lam))}")
    res = stats.linregress(lam, t)
    resid = t - (res.intercept + res.slope * lam)
    return CalibrationResult(
        float(res.slope),
        float(res.intercept),
        float(res.stderr),
        float(res.intercept_stderr),
        len(lam),
        float(np.sqrt(np.mean(resid**2))),
    )


def synth_calibration_scan(
    tofs: TofsConfig,
    wavelengths,
    photons_per_step: int = 200,
    filter_fwhm_nm: float = 1.0,
    seed: int = 0,
    timing_sigma: float | None = None,
):
    """Scan a bandpass filter across the spectrum and record single-photon tags.

    Returns (scan pairs, true wavelengths). Each photon has a wavelength drawn
    from the filter passband and a time with Gaussian jitter; ``timing_sigma``
    overrides the jitter standard deviation.
    """
    rng = np.random.default_rng(seed)
    lam_set = np.repeat(np.asarray(wavelengths, dtype=float), photons_per_step)
    lam_true = lam_set + rng.normal(0.0, filter_fwhm_nm / FWHM_PER_SIGMA, lam_set.shape) if filter_fwhm_nm > 0 else lam_set
    sig = tofs.jitter_sigma if timing_sigma is None else timing_sigma
    t = tofs.delay(lam_true) + rng.normal(0.0, sig, lam_set.shape)
    return np.column_stack([lam_set, t]), lam_true
