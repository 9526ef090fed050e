"""Wavelength <-> angular frequency conversions.

Everything inside the package works in rad/ps; nanometres only appear at
file and command-line boundaries.
"""
import numpy as np

C_NM_PER_PS = 299792.458


def nm_to_omega(wavelength_nm):
    return 2.0 * np.pi * C_NM_PER_PS / np.asarray(wavelength_nm, dtype=float)


def omega_to_nm(omega):
    return 2.0 * np.pi * C_NM_PER_PS / np.asarray(omega, dtype=float)


def width_nm_to_omega(width_nm, center_nm):
    """Convert a small wavelength interval to rad/ps around `center_nm`."""
    return 2.0 * np.pi * C_NM_PER_PS * np.asarray(width_nm, dtype=float) / np.asarray(center_nm, dtype=float) ** 2


def width_omega_to_nm(width, center_omega):
    return np.asarray(width, dtype=float) * omega_to_nm(center_omega) ** 2 / (2.0 * np.pi * C_NM_PER_PS)


def domega_dlambda(wavelength_nm):
    """|d omega / d lambda| in (rad/ps)/nm, the Jacobian for densities."""
    return 2.0 * np.pi * C_NM_PER_PS / np.asarray(wavelength_nm, dtype=float) ** 2


FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
