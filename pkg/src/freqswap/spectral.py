"""Frequency grids, the Gaussian joint spectral amplitude and its reductions.

Conventions
-----------
* angular frequencies in rad/ps;
* every integral is a uniform Riemann sum with weight ``grid.step`` (for the
  rapidly decaying Gaussians used here this equals the trapezoid rule to
  within the edge mass of the grid);
* amplitudes are stored complex even though the default model is real.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ContractViolation, ParameterDomainError, TruncationError

EDGE_MASS_LIMIT = 1e-4
NORM_TOL = 1e-8


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform frequency axis ``center +- span/2`` with ``n_points`` samples."""

    center: float
    span: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ContractViolation(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.span > 0:
            raise ContractViolation(f"span must be positive, got {self.span}")

    @property
    def step(self) -> float:
        return self.span / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.center - self.span / 2, self.center + self.span / 2, self.n_points)

    @property
    def lo(self) -> float:
        return self.center - self.span / 2

    @property
    def hi(self) -> float:
        return self.center + self.span / 2

    def contains(self, omega) -> bool:
        omega = np.asarray(omega)
        return bool(np.all((omega >= self.lo) & (omega <= self.hi)))

    def matches(self, other: "SpectralGrid") -> bool:
        return (
            self.n_points == other.n_points
            and np.isclose(self.center, other.center, rtol=0, atol=1e-12 * max(1.0, abs(self.center)))
            and np.isclose(self.span, other.span, rtol=1e-12, atol=0)
        )

    def refined(self, factor: int = 2) -> "SpectralGrid":
        return SpectralGrid(self.center, self.span, factor * (self.n_points - 1) + 1)


def require_same_grid(a: SpectralGrid, b: SpectralGrid) -> None:
    if not a.matches(b):
        raise ContractViolation(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True)
class JsaParams:
    """Five-parameter Gaussian source model (plus optional translations).

    ``|f|^2`` is a bivariate Gaussian with precision matrix
    ``[[1/sigma_s^2, 2 alpha], [2 alpha, 1/sigma_i^2]]``; ``shift_s`` and
    ``shift_i`` translate the whole amplitude, which is how a second,
    slightly detuned source is described.
    """

    omega0: float
    sigma_s: float
    sigma_i: float
    alpha: float
    eta: float = 0.04
    shift_s: float = 0.0
    shift_i: float = 0.0

    def __post_init__(self):
        if not (self.sigma_s > 0 and self.sigma_i > 0):
            raise ParameterDomainError(
                f"sigma_s and sigma_i must be positive (got {self.sigma_s}, {self.sigma_i})"
            )
        bound = 1.0 / (2.0 * self.sigma_s * self.sigma_i)
        if not abs(self.alpha) < bound:
            raise ParameterDomainError(
                f"alpha={self.alpha} makes the exponent non positive-definite: "
                f"|alpha| must be < 1/(2 sigma_s sigma_i) = {bound:.6g}"
            )
        if not 0.0 < self.eta < 0.5:
            raise ParameterDomainError(f"eta must lie in (0, 0.5), got {self.eta}")

    def replace(self, **changes) -> "JsaParams":
        return dataclasses.replace(self, **changes)

    @property
    def correlation(self) -> float:
        """Dimensionless coupling ``2 alpha sigma_s sigma_i`` (minus the JSI correlation coefficient)."""
        return 2.0 * self.alpha * self.sigma_s * self.sigma_i

    @property
    def precision(self) -> np.ndarray:
        return np.array([[1.0 / self.sigma_s**2, 2.0 * self.alpha], [2.0 * self.alpha, 1.0 / self.sigma_i**2]])

    @property
    def marginal_std_s(self) -> float:
        return self.sigma_s / np.sqrt(1.0 - self.correlation**2)

    @property
    def marginal_std_i(self) -> float:
        return self.sigma_i / np.sqrt(1.0 - self.correlation**2)

    @property
    def center_s(self) -> float:
        return self.omega0 + self.shift_s

    @property
    def center_i(self) -> float:
        return self.omega0 + self.shift_i

    @property
    def steering(self) -> float:
        """d(conditional signal centre)/d(idler frequency) = -2 alpha sigma_s^2."""
        return -2.0 * self.alpha * self.sigma_s**2

    def conditional_center(self, omega_idler):
        # completing the square in the signal variable of the exponent
        return self.center_s + self.steering * (np.asarray(omega_idler) - self.center_i)

    @property
    def norm_const(self) -> float:
        det = np.linalg.det(self.precision)
        return float(np.sqrt(np.sqrt(det) / (2.0 * np.pi)))

    def amplitude(self, omega_s, omega_i) -> np.ndarray:
        """Analytically normalized f(omega_s, omega_i), broadcasting its arguments."""
        x = np.asarray(omega_s, dtype=float) - self.center_s
        y = np.asarray(omega_i, dtype=float) - self.center_i
        # alpha * (x * y) keeps f(w, W) = f(W, w) bit-exact when sigma_s = sigma_i
        expo = -((x / (2 * self.sigma_s)) ** 2) - (y / (2 * self.sigma_i)) ** 2 - self.alpha * (x * y)
        return (self.norm_const * np.exp(expo)).astype(complex)


@dataclass(frozen=True)
class AmplitudeMatrix:
    grid_row: SpectralGrid
    grid_col: SpectralGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid_row.n_points, self.grid_col.n_points):
            raise ContractViolation(f"values shape {v.shape} does not match grids")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def cell(self) -> float:
        return self.grid_row.step * self.grid_col.step

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.cell)

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def normalized(self) -> "AmplitudeMatrix":
        return AmplitudeMatrix(self.grid_row, self.grid_col, self.values / np.sqrt(self.norm2()))


@dataclass(frozen=True)
class DensityMatrix:
    grid: SpectralGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def trace(self) -> float:
        return float(np.real(np.trace(self.values)) * self.grid.step)

    def purity(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.step**2)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values * self.grid.step)


@dataclass(frozen=True)
class SchmidtResult:
    coefficients: np.ndarray
    K: float


def default_grids(params: JsaParams, n_points: int = 256, half_span: float = 6.0):
    """Signal and idler grids spanning ``half_span`` marginal standard deviations."""
    gs = SpectralGrid(params.center_s, 2 * half_span * params.marginal_std_s, n_points)
    gi = SpectralGrid(params.center_i, 2 * half_span * params.marginal_std_i, n_points)
    return gs, gi


def _tail_mass(center, std, lo, hi) -> float:
    return float(0.5 * erfc((center - lo) / (np.sqrt(2) * std)) + 0.5 * erfc((hi - center) / (np.sqrt(2) * std)))


def edge_mass(params: JsaParams, grid_s: SpectralGrid, grid_i: SpectralGrid) -> float:
    """Largest marginal probability falling outside either grid (exact for the Gaussian model)."""
    ms = _tail_mass(params.center_s, params.marginal_std_s, grid_s.lo, grid_s.hi)
    mi = _tail_mass(params.center_i, params.marginal_std_i, grid_i.lo, grid_i.hi)
    return max(ms, mi)


def build_jsa(
    params: JsaParams,
    grid_s: SpectralGrid,
    grid_i: SpectralGrid,
    shift_s: float = 0.0,
    shift_i: float = 0.0,
) -> AmplitudeMatrix:
    """Sample the Gaussian JSA on ``grid_s x grid_i`` and normalize it numerically.

    ``shift_s``/``shift_i`` translate the source on top of any shift already
    carried by ``params``.
    """
    if shift_s or shift_i:
        params = params.replace(shift_s=params.shift_s + shift_s, shift_i=params.shift_i + shift_i)
    mass = edge_mass(params, grid_s, grid_i)
    if mass > EDGE_MASS_LIMIT:
        raise TruncationError(f"grid too narrow: marginal mass outside the grid is {mass:.3g} > {EDGE_MASS_LIMIT}")
    values = params.amplitude(grid_s.points[:, None], grid_i.points[None, :])
    return AmplitudeMatrix(grid_s, grid_i, values).normalized()


def _check_normalized(jsa: AmplitudeMatrix) -> None:
    n = jsa.norm2()
    if abs(n - 1.0) > NORM_TOL:
        raise ContractViolation(f"amplitude is not normalized (norm^2 = {n:.12g})")


def reduced_density(jsa: AmplitudeMatrix, side: str = "idler") -> DensityMatrix:
    """rho_i(W, W') = sum_w f(w, W) f*(w, W') dw, or the signal analogue."""
    _check_normalized(jsa)
    f = jsa.values
    if side == "idler":
        rho = (f.T @ f.conj()) * jsa.grid_row.step
        return DensityMatrix(jsa.grid_col, rho)
    if side == "signal":
        rho = (f @ f.conj().T) * jsa.grid_col.step
        return DensityMatrix(jsa.grid_row, rho)
    raise ValueError(f"side must be 'signal' or 'idler', got {side!r}")


def schmidt_decompose(jsa: AmplitudeMatrix) -> SchmidtResult:
    _check_normalized(jsa)
    s = np.linalg.svd(jsa.values * np.sqrt(jsa.cell), compute_uv=False)
    lam = s**2
    total = lam.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise ContractViolation(f"Schmidt coefficients sum to {total:.12g}")
    return SchmidtResult(coefficients=lam, K=float(1.0 / np.sum(lam**2)))


def overlap_integral(a, b, weight: float | None = None) -> complex:
    """<a|b> with the grid weights of the operands.

    Accepts two AmplitudeMatrix objects, two objects exposing ``grid`` and
    ``amplitude`` (conditional modes), or raw arrays with an explicit weight.
    """
    if isinstance(a, AmplitudeMatrix) and isinstance(b, AmplitudeMatrix):
        require_same_grid(a.grid_row, b.grid_row)
        require_same_grid(a.grid_col, b.grid_col)
        return complex(np.sum(a.values.conj() * b.values) * a.cell)
    if hasattr(a, "grid") and hasattr(b, "grid"):
        require_same_grid(a.grid, b.grid)
        return complex(np.sum(np.conj(a.amplitude) * b.amplitude) * a.grid.step)
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    if weight is None:
        raise ContractViolation("raw arrays need an explicit quadrature weight")
    return complex(np.sum(a.conj() * b) * weight)


def gaussian_blur_matrix(grid: SpectralGrid, fwhm: float) -> np.ndarray:
    """Row-stochastic convolution matrix for a Gaussian kernel of the given FWHM."""
    if fwhm <= 0:
        return np.eye(grid.n_points)
    sig = fwhm / (2 * np.sqrt(2 * np.log(2)))
    w = grid.points
    kern = np.exp(-((w[:, None] - w[None, :]) ** 2) / (2 * sig**2)) * grid.step / (np.sqrt(2 * np.pi) * sig)
    return kern


def blur_jsa(jsa: AmplitudeMatrix, fwhm_s: float, fwhm_i: float) -> AmplitudeMatrix:
    """Convolve the JSI with a Gaussian resolution kernel and take its square root.

    This mimics reconstructing an amplitude from a resolution-limited JSI
    measurement, assuming a flat spectral phase.
    """
    jsi = jsa.intensity()
    blurred = gaussian_blur_matrix(jsa.grid_row, fwhm_s) @ jsi @ gaussian_blur_matrix(jsa.grid_col, fwhm_i).T
    return AmplitudeMatrix(jsa.grid_row, jsa.grid_col, np.sqrt(np.clip(blurred, 0, None))).normalized()
