"""Heralding-side filter banks t_j(Omega) and their quadrature rules.

Transmissions peak at 1. Quadrature weights are normalized per filter so that
``sum(w * g(nodes))`` is the filter-weighted average of ``g``; in the delta
limit this is just ``g(Omega_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .units import FWHM_PER_SIGMA, domega_dlambda, nm_to_omega

SHAPES = ("gaussian", "tophat", "delta")


@dataclass(frozen=True)
class FilterBank:
    """Filters labelled by integer bin index.

    ``widths`` are FWHM of |t|^2 (gaussian), full width (tophat) or the bin
    measure (delta), all in rad/ps; ``edges`` holds explicit (lo, hi) pairs
    for tophat filters defined in wavelength.
    """

    centers: np.ndarray
    widths: np.ndarray
    shape: str
    M: int = 1
    labels: tuple = ()
    edges: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.centers, dtype=float))
        w = np.broadcast_to(np.asarray(self.widths, dtype=float), c.shape).copy()
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown filter shape {self.shape!r}; expected one of {SHAPES}")
        m = 1 if self.shape == "delta" else int(self.M)
        if m < 1:
            raise ConfigurationError(f"quadrature node count M must be >= 1, got {self.M}")
        if self.shape != "delta" and np.any(w <= 0):
            raise ConfigurationError("filter width must be positive unless shape is delta")
        labels = tuple(self.labels) if len(self.labels) else tuple(range(len(c)))
        if len(labels) != len(c):
            raise ConfigurationError("labels and centers differ in length")
        edges = self.edges
        if self.shape == "tophat":
            if edges is None:
                edges = np.stack([c - w / 2, c + w / 2], axis=1)
            edges = np.asarray(edges, dtype=float)
            order = np.argsort(edges[:, 0])
            lo, hi = edges[order, 0], edges[order, 1]
            overlap = hi[:-1] - lo[1:]
            if np.any(overlap > 1e-9 * np.max(hi - lo)):
                raise ConfigurationError("tophat filters overlap; bin assignment would be ambiguous")
        for name, val in (("centers", c), ("widths", w), ("M", m), ("labels", labels), ("edges", edges)):
            object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.centers)

    @classmethod
    def delta(cls, centers, measure=None, labels=()):
        centers = np.asarray(centers, dtype=float)
        if measure is None:
            measure = np.gradient(centers) if len(centers) > 1 else np.ones(1)
        return cls(centers, np.abs(np.broadcast_to(measure, centers.shape)), "delta", 1, labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigurationError(f"bin {label!r} not in filter bank {self.labels}") from None

    def transmission2(self, i: int, omega) -> np.ndarray:
        """|t_i(Omega)|^2, peak 1."""
        omega = np.asarray(omega, dtype=float)
        if self.shape == "gaussian":
            s = self.widths[i] / FWHM_PER_SIGMA
            return np.exp(-((omega - self.centers[i]) ** 2) / (2 * s**2))
        if self.shape == "tophat":
            lo, hi = self.edges[i]
            return ((omega >= lo) & (omega <= hi)).astype(float)
        return (omega == self.centers[i]).astype(float)

    def area(self, i: int) -> float:
        if self.shape == "gaussian":
            return float(self.widths[i] / FWHM_PER_SIGMA * np.sqrt(2 * np.pi))
        if self.shape == "tophat":
            lo, hi = self.edges[i]
            return float(hi - lo)
        return float(self.widths[i])

    def nodes(self, i: int):
        """Quadrature nodes and normalized weights for filter ``i``."""
        if self.shape == "delta":
            return np.array([self.centers[i]]), np.ones(1)
        if self.shape == "gaussian":
            x, w = np.polynomial.hermite.hermgauss(self.M)
            s = self.widths[i] / FWHM_PER_SIGMA
            return self.centers[i] + np.sqrt(2) * s * x, w / np.sqrt(np.pi)
        x, w = np.polynomial.legendre.leggauss(self.M)
        lo, hi = self.edges[i]
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * x, w / 2

    def support(self):
        """(lo, hi) of the union of filter passbands (delta bins use their measure)."""
        if self.shape == "tophat":
            return float(self.edges[:, 0].min()), float(self.edges[:, 1].max())
        half = self.widths / 2
        return float(np.min(self.centers - half)), float(np.max(self.centers + half))


def bin_wavelengths(center_nm: float = 830.0, pitch_nm: float = 1.5, jmax: int = 4):
    labels = tuple(range(-jmax, jmax + 1))
    return labels, np.array([center_nm + pitch_nm * j for j in labels])


def build_filter_bank(centers_nm, width_nm: float, shape: str = "gaussian", M: int = 8, labels=()) -> FilterBank:
    """Filter bank from wavelength centres and a common wavelength width."""
    centers_nm = np.asarray(centers_nm, dtype=float)
    if shape != "delta" and not width_nm > 0:
        raise ConfigurationError(f"width must be positive for shape {shape!r}, got {width_nm}")
    centers = nm_to_omega(centers_nm)
    widths = domega_dlambda(centers_nm) * width_nm
    edges = None
    if shape == "tophat":
        edges = np.stack([nm_to_omega(centers_nm + width_nm / 2), nm_to_omega(centers_nm - width_nm / 2)], axis=1)
    return FilterBank(centers, widths, shape, M, labels, edges)


def default_bank(
    shape: str = "gaussian",
    width_nm: float = 1.5,
    M: int = 8,
    center_nm: float = 830.0,
    pitch_nm: float = 1.5,
    jmax: int = 4,
) -> FilterBank:
    """Nine bins j = -4..4 at 1.5 nm pitch around 830 nm; j > 0 is the red side."""
    labels, lam = bin_wavelengths(center_nm, pitch_nm, jmax)
    if shape == "delta":
        width_nm = pitch_nm
    return build_filter_bank(lam, width_nm, shape, M, labels)
