"""Rational (2/3, 1/3) wavelets learned by lifting, with 2-D pyramids and block CS."""

__version__ = "0.1.0"

from .fbm import FbmModel, estimate_hurst, sigma_h, synth_fbm
from .filterbank import DyadicFilterBank, RationalFilterBank, cdf53, cdf97, lazy_rational, pr_error
from .learn import learn_predict, learn_rwls_1d, learn_rwls_2d, learn_update
from .poly import LaurentPoly, PolyMatrix
from .transform2d import PyramidSpec, decompose, reconstruct

__all__ = [
    "DyadicFilterBank",
    "FbmModel",
    "LaurentPoly",
    "PolyMatrix",
    "PyramidSpec",
    "RationalFilterBank",
    "cdf53",
    "cdf97",
    "decompose",
    "estimate_hurst",
    "lazy_rational",
    "learn_predict",
    "learn_rwls_1d",
    "learn_rwls_2d",
    "learn_update",
    "pr_error",
    "reconstruct",
    "sigma_h",
    "synth_fbm",
]
