"""Detector time-tag synthesis and analysis."""
from .coincidence import CoincidenceEvents, CoincidenceFinder, find_coincidences
from .histograms import Binning, Histograms, analyze_file, default_binning, histograms_from_tags
from .records import TAG_DTYPE, TimeTag, iter_chunks, read_meta, read_tags
from .synth import ROLES, CoincidenceConfig, default_tofs, synth_timetags
from .tofs import CalibrationResult, TofsConfig, calibrate_dispersion, synth_calibration_scan

__all__ = [
    "ROLES",
    "TAG_DTYPE",
    "Binning",
    "CalibrationResult",
    "CoincidenceConfig",
    "CoincidenceEvents",
    "CoincidenceFinder",
    "Histograms",
    "TimeTag",
    "TofsConfig",
    "analyze_file",
    "calibrate_dispersion",
    "default_binning",
    "default_tofs",
    "find_coincidences",
    "histograms_from_tags",
    "iter_chunks",
    "read_meta",
    "read_tags",
    "synth_calibration_scan",
    "synth_timetags",
]
