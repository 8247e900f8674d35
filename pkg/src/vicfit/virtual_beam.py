"""The virtual image: transverse luminance profile and quadrature mesh.

The virtual beam is a tube of half-width R around the mean line. Its gray
level depends only on the transverse offset r and falls smoothly to zero at
the border, so the image gradient vanishes there too. The (s, r) mesh is a
tensor grid refined relative to the pixel grid (default 3 nodes per pixel);
quadrature uses trapezoid end-weights in both directions so the zero-valued
border nodes get half weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MeshTooLarge

MAX_MESH_NODES = 100_000_000


@dataclass(frozen=True)
class VirtualBeam:
    """Half-width and mesh resolution of the virtual image.

    n_r is odd so r = 0 is a mesh line; immutable after construction.
    """

    R: float
    n_r: int
    n_s: int

    def __post_init__(self):
        if self.R <= 0:
            raise DomainError(f"half-width must be positive, got {self.R}")
        if self.n_r < 3 or self.n_r % 2 == 0:
            raise DomainError(f"n_r must be odd and >= 3, got {self.n_r}")
        if self.n_s < 2:
            raise DomainError(f"n_s must be >= 2, got {self.n_s}")

    def r_grid(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.n_r)

    def s_grid(self, L: float) -> np.ndarray:
        return np.linspace(0.0, L, self.n_s)

    def r_weights(self) -> np.ndarray:
        """Trapezoid weights over r, summing to 2R."""
        w = np.full(self.n_r, 2 * self.R / (self.n_r - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def s_weights(self, L: float) -> np.ndarray:
        """Trapezoid weights over s, summing to L."""
        w = np.full(self.n_s, L / (self.n_s - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def luminance(r, R: float):
    """Virtual gray level in [0, 1]: peaks on the mean line, zero at |r| = R."""
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > R * (1 + 1e-12)):
        raise DomainError(f"|r| > {R}: virtual image undefined outside its domain")
    out = 0.5 * (1.0 + np.cos(np.pi * np.clip(r, -R, R) / R))
    return out if out.ndim else float(out)


def luminance_slope(r, R: float):
    """d/dr of the profile: -(pi/2R) sin(pi r / R); zero at r = 0 and |r| = R."""
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > R * (1 + 1e-12)):
        raise DomainError(f"|r| > {R}: virtual image undefined outside its domain")
    out = -(np.pi / (2 * R)) * np.sin(np.pi * np.clip(r, -R, R) / R)
    return out if out.ndim else float(out)


def build_mesh(L: float, R: float, refine: float = 3.0) -> VirtualBeam:
    """Mesh with about ``refine`` nodes per pixel in both directions.

    n_r is the smallest odd integer >= 2*R*refine + 1; n_s = ceil(L*refine)+1.
    """
    if L <= 0 or R <= 0:
        raise DomainError(f"L and R must be positive, got L={L}, R={R}")
    if refine < 1:
        raise DomainError(f"refine must be >= 1, got {refine}")
    n_r = math.ceil(2 * R * refine + 1)
    if n_r % 2 == 0:
        n_r += 1
    n_r = max(n_r, 3)
    n_s = math.ceil(L * refine) + 1
    if n_r * n_s > MAX_MESH_NODES:
        raise MeshTooLarge(f"mesh {n_r} x {n_s} exceeds {MAX_MESH_NODES} nodes")
    return VirtualBeam(R=R, n_r=n_r, n_s=n_s)
