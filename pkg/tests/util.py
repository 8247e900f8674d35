"""Shared test helpers: independent oracles and fixture builders."""

from __future__ import annotations

import numpy as np

from vicfit.basis import theta_matrix
from vicfit.correlation import phi
from vicfit.errors import InitRankError
from vicfit.geometry import ShapeParams
from vicfit.image import Raster
from vicfit.synth import dense_centerline, distance_to_polyline


def natural_steps(p: ShapeParams, eps: float = 1e-5) -> np.ndarray:
    """Finite-difference steps of eps natural units per packed component."""
    from vicfit.correlation import natural_units

    return eps * natural_units(p.L, len(p.A))


def fd_gradient(raster, p: ShapeParams, basis, beam, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of phi with respect to the packed vector."""
    V = p.pack()
    steps = natural_steps(p, eps)
    grad = np.zeros_like(V)
    for k in range(len(V)):
        hi = V.copy()
        hi[k] += steps[k]
        lo = V.copy()
        lo[k] -= steps[k]
        grad[k] = (phi(raster, ShapeParams.unpack(hi, p.L), basis, beam)
                   - phi(raster, ShapeParams.unpack(lo, p.L), basis, beam)) / (2 * steps[k])
    return grad


def params_from_angles(s: np.ndarray, theta: np.ndarray, x0, L: float,
                       basis) -> ShapeParams:
    """Least-squares projection of an angle table onto a basis (with theta0)."""
    T = np.empty((len(s), basis.order + 2))
    T[:, 0] = 1.0
    T[:, 1:] = theta_matrix(basis, np.asarray(s) / L).T
    coeff, _, rank, _ = np.linalg.lstsq(T, np.asarray(theta) / L, rcond=None)
    if rank < basis.order + 2:
        raise InitRankError("angle projection rank deficient")
    return ShapeParams(x0=np.asarray(x0, dtype=float), theta0=float(coeff[0] * L),
                       A=coeff[1:], L=L)


def exact_tube_raster(points: np.ndarray, R: float, size: tuple[int, int],
                      background: float = 0.0) -> Raster:
    """Raster whose pixels hold the exact cosine-tube field (no AA, no noise).

    This is the virtual profile itself evaluated at pixel centers, the
    cleanest fixture for identities that assume f matches g.
    """
    W, H = size
    cols, rows = np.meshgrid(np.arange(W, dtype=float), np.arange(H, dtype=float))
    q = np.stack([cols.ravel(), rows.ravel()], axis=1)
    d = distance_to_polyline(np.asarray(points, dtype=float), q)
    core = 0.5 * (1.0 + np.cos(np.pi * np.minimum(d, R) / R))
    f = background + (1.0 - background) * np.where(d <= R, core, 0.0)
    return Raster(width=W, height=H, f=f.reshape(H, W))


def exact_tube_from_params(p: ShapeParams, basis, R: float,
                           size: tuple[int, int], background: float = 0.0) -> Raster:
    return exact_tube_raster(dense_centerline(p, basis), R, size, background)


def rms_normal_distance(curve_a: np.ndarray, curve_b: np.ndarray) -> float:
    """RMS of nearest distances from points of curve_a to polyline curve_b."""
    d = distance_to_polyline(np.asarray(curve_b, dtype=float),
                             np.asarray(curve_a, dtype=float))
    return float(np.sqrt(np.mean(d ** 2)))


def hausdorff(curve_a: np.ndarray, curve_b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two dense polylines."""
    d_ab = distance_to_polyline(np.asarray(curve_b, dtype=float),
                                np.asarray(curve_a, dtype=float))
    d_ba = distance_to_polyline(np.asarray(curve_a, dtype=float),
                                np.asarray(curve_b, dtype=float))
    return float(max(d_ab.max(), d_ba.max()))
