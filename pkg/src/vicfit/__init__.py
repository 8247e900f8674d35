"""Analytical fiber-shape identification by virtual image correlation.

A parametric virtual beam image (curvature expanded on a Legendre or Fourier
series) is correlated against a photograph by Gauss-Newton minimization of
the squared luminance residual over the beam's own domain. The result is the
fiber mean line with its slope and curvature in closed form.
"""

from .basis import CurvatureBasis, eval_gamma, eval_theta, legendre_coeffs, make_basis
from .beam_oracle import CantileverSpec, ElasticaShape, rescale_to_pixels, solve_elastica
from .bootstrap import Polyline, fit_series, trace
from .correlation import FitOptions, FitReport, assemble, fit, phi, step
from .errors import VicError
from .geometry import (FrameSample, MeanLine, ShapeParams, gamma_at, mean_line,
                       sensitivity_fields, surface_point, theta_at)
from .image import Raster, UnwrapResult, load, sample, unwrap
from .length_detect import detect_end, phi_profile
from .synth import render
from .virtual_beam import VirtualBeam, build_mesh, luminance, luminance_slope

__version__ = "0.1.0"

__all__ = [
    "CantileverSpec", "CurvatureBasis", "ElasticaShape", "FitOptions",
    "FitReport", "FrameSample", "MeanLine", "Polyline", "Raster",
    "ShapeParams", "UnwrapResult", "VicError", "VirtualBeam", "assemble",
    "build_mesh", "detect_end", "eval_gamma", "eval_theta", "fit",
    "fit_series", "gamma_at", "legendre_coeffs", "load", "luminance",
    "luminance_slope", "make_basis", "mean_line", "phi", "phi_profile",
    "render", "rescale_to_pixels", "sample", "sensitivity_fields",
    "solve_elastica", "step", "surface_point", "theta_at", "trace", "unwrap",
]
