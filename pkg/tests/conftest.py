"""Session fixtures shared by the acceptance suite: the cantilever scene.

A 2.459 m aluminium bar of radius 4.95 mm (E = 72 GPa, rho = 2700 kg/m^3)
hangs under its own weight; the solved shape is rescaled so the bar spans
960 px of a 1000x500 image.
"""

import json

import numpy as np
import pytest

from vicfit.beam_oracle import CantileverSpec, rescale_to_pixels, solve_elastica
from vicfit.synth import render_curve

BAR = dict(length=2.459, radius=0.00495, young_modulus=72e9, density=2700.0)
BAR_LENGTH_PX = 960.0
PX_PER_METER = BAR_LENGTH_PX / BAR["length"]
ORIGIN = (25.0, 60.0)
IMAGE_SIZE = (1000, 500)
FIBER_HALF_WIDTH = 3.0
BACKGROUND = 0.1
NOISE_SIGMA = 0.02
NOISE_SEED = 42
FIT_HALF_WIDTH = 6.0

FIT_CONFIG = {
    "schema_version": 1,
    "basis": "legendre",
    "order": 3,
    "half_width": FIT_HALF_WIDTH,
    "refine": 3.0,
    "seed": list(ORIGIN),
    "seed_angle_deg": 0.0,
    "segment_length": 24.0,
    "max_segments": 50,
    "freeze": ["x0_1"],
    "length": BAR_LENGTH_PX,
}


@pytest.fixture(scope="session")
def oracle_px():
    """Equilibrium bar shape in image coordinates (960 px of arc)."""
    shape = solve_elastica(CantileverSpec(**BAR, n_nodes=4001))
    return rescale_to_pixels(shape, PX_PER_METER, origin=ORIGIN)


@pytest.fixture(scope="session")
def cantilever_image(oracle_px):
    """The noisy Gaussian-profile rendering used by the end-to-end criteria."""
    return render_curve(oracle_px.x, FIBER_HALF_WIDTH, "gaussian", IMAGE_SIZE,
                        BACKGROUND, NOISE_SIGMA, NOISE_SEED)


@pytest.fixture(scope="session")
def cantilever_clean(oracle_px):
    """Noiseless twin of the fixture, for asymmetry floors."""
    return render_curve(oracle_px.x, FIBER_HALF_WIDTH, "gaussian", IMAGE_SIZE,
                        BACKGROUND, 0.0, NOISE_SEED)


@pytest.fixture(scope="session")
def cantilever_files(tmp_path_factory, cantilever_image):
    """PNG + fit-config JSON on disk for the CLI-level criteria."""
    from vicfit.image import write_png

    root = tmp_path_factory.mktemp("cantilever")
    png = root / "cantilever.png"
    write_png(png, cantilever_image.f)
    config = root / "config.json"
    config.write_text(json.dumps(FIT_CONFIG))
    return {"dir": root, "png": png, "config": config}
