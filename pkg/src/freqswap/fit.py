"""Fit the Gaussian source parameters to the reported source observables.

Targets (value, uncertainty):
    Schmidt number of the unblurred model          4.0  +- 0.5
    Schmidt number after 0.5 nm resolution blur     2.9  +- 0.1
    heralded purity, 1.5 nm FWHM Gaussian filter    0.78 +- 0.05
    heralded purity, no spectral resolution         0.20 +- 0.05

All four have closed forms for the Gaussian model, so the fit is a tiny
weighted least-squares problem in (sigma_s, sigma_i, r). The last two targets
pull against each other (the unresolved purity is exactly 1/K), which the
weights settle.

Run ``python3 -m freqswap.fit [out.yaml]`` to regenerate the shipped file.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
import yaml
from scipy.optimize import least_squares

from .mixed import heralded_purity_gaussian
from .spectral import JsaParams
from .units import FWHM_PER_SIGMA, nm_to_omega, width_nm_to_omega

CENTER_NM = 830.0
ETA = 0.04
TARGETS = {
    "K": (4.0, 0.5),
    "K_blur": (2.9, 0.1),
    "purity_filtered": (0.78, 0.05),
    "purity_unresolved": (0.20, 0.05),
}
BLUR_NM = 0.5
FILTER_NM = 1.5


def schmidt_number(params: JsaParams) -> float:
    return float(1.0 / np.sqrt(1.0 - params.correlation**2))


def blurred_schmidt_number(params: JsaParams, fwhm_s: float, fwhm_i: float) -> float:
    """K of sqrt(JSI * Gaussian kernel) for the Gaussian model."""
    K2 = 1.0 / (1.0 - params.correlation**2)
    bs = (fwhm_s / FWHM_PER_SIGMA) ** 2
    bi = (fwhm_i / FWHM_PER_SIGMA) ** 2
    vs = params.sigma_s**2 * K2
    vi = params.sigma_i**2 * K2
    rho = params.correlation * params.sigma_s * params.sigma_i * K2 / np.sqrt((vs + bs) * (vi + bi))
    return float(1.0 / np.sqrt(1.0 - rho**2))


def predictions(params: JsaParams) -> dict:
    blur = width_nm_to_omega(BLUR_NM, CENTER_NM)
    filt = width_nm_to_omega(FILTER_NM, CENTER_NM)
    return {
        "K": schmidt_number(params),
        "K_blur": blurred_schmidt_number(params, blur, blur),
        "purity_filtered": heralded_purity_gaussian(params, filt),
        "purity_unresolved": 1.0 / schmidt_number(params),
    }


def _params(x, omega0):
    ss, si, r = np.exp(x[0]), np.exp(x[1]), np.tanh(x[2])
    return JsaParams(omega0, ss, si, r / (2 * ss * si), ETA)


@dataclass
class FitResult:
    params: JsaParams
    predictions: dict
    cost: float


def fit_source(x0=(np.log(0.5), np.log(2.0), 2.0)) -> FitResult:
    omega0 = float(nm_to_omega(CENTER_NM))

    def resid(x):
        pred = predictions(_params(x, omega0))
        return [(pred[k] - v) / s for k, (v, s) in TARGETS.items()]

    sol = least_squares(resid, np.asarray(x0, dtype=float), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    p = _params(sol.x, omega0)
    return FitResult(p, predictions(p), float(sol.cost))


def params_to_dict(params: JsaParams, sig: int = 6) -> dict:
    return {
        "omega0_nm": CENTER_NM,
        "sigma_s": float(f"{params.sigma_s:.{sig}g}"),
        "sigma_i": float(f"{params.sigma_i:.{sig}g}"),
        "alpha": float(f"{params.alpha:.{sig}g}"),
        "eta": params.eta,
    }


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    res = fit_source()
    doc = {"source": params_to_dict(res.params), "fit_predictions": {k: round(v, 6) for k, v in res.predictions.items()}}
    text = yaml.safe_dump(doc, sort_keys=False)
    if argv:
        with open(argv[0], "w") as fh:
            fh.write("# generated by python3 -m freqswap.fit\n" + text)
    print(text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
