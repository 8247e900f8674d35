"""Ground-truth fiber rendering for round-trip tests.

A fiber image is built from the exact distance to the densely sampled mean
line (10 points per pixel, point-to-segment refinement), an intensity profile
of the transverse distance, 4x supersampling with box averaging for
anti-aliasing, and optional additive Gaussian noise. The fiber profile is
deliberately selectable -- and defaults to Gaussian, unlike the virtual
beam's cosine -- because the identification must not depend on the physical
profile matching the virtual one.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .basis import CurvatureBasis
from .errors import DomainError, RenderBounds
from .geometry import ShapeParams, mean_line
from .image import Raster

PROFILES = ("cosine", "gaussian", "flatdisk")

# dense centerline sampling (points per pixel of arc) and AA supersampling
CURVE_SAMPLES_PER_PX = 10
SUPERSAMPLE = 4


def profile_value(name: str, u: np.ndarray) -> np.ndarray:
    """Intensity at reduced distance u = d / half_width; support-limited."""
    u = np.asarray(u, dtype=float)
    if name == "cosine":
        return np.where(u <= 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(u, 1.0))), 0.0)
    if name == "gaussian":
        return np.exp(-2.0 * u * u)
    if name == "flatdisk":
        return np.where(u <= 1.0, 1.0, 0.0)
    raise DomainError(f"unknown profile {name!r}; expected one of {PROFILES}")


def _segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points q (n,2) to segments [a, b] (n,k,2) -> (n,k)."""
    ab = b - a
    denom = np.einsum("nkd,nkd->nk", ab, ab)
    t = np.einsum("nkd,nkd->nk", q[:, None, :] - a, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0, t / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    diff = q[:, None, :] - proj
    return np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))


def distance_to_polyline(points: np.ndarray, query: np.ndarray,
                         k_neighbors: int = 8, chunk: int = 200_000) -> np.ndarray:
    """Exact distance from query points to a polyline through ``points``.

    A KD-tree narrows each query to the segments adjacent to its k nearest
    vertices; the point-segment distance is then exact. k = 8 covers the
    ambiguous near-medial-axis cases between two passes of a looped curve.
    """
    points = np.asarray(points, dtype=float)
    query = np.asarray(query, dtype=float).reshape(-1, 2)
    m = len(points)
    if m == 1:
        return np.linalg.norm(query - points[0], axis=1)
    tree = cKDTree(points)
    k = min(k_neighbors, m)
    out = np.empty(len(query))
    for lo in range(0, len(query), chunk):
        q = query[lo:lo + chunk]
        _, idx = tree.query(q, k=k)
        if k == 1:
            idx = idx[:, None]
        # candidate segments: the one before and after each neighbor vertex
        seg = np.concatenate([np.clip(idx - 1, 0, m - 2), np.clip(idx, 0, m - 2)], axis=1)
        d = _segment_distance(q, points[seg], points[seg + 1])
        out[lo:lo + chunk] = d.min(axis=1)
    return out


def dense_centerline(p: ShapeParams, basis: CurvatureBasis) -> np.ndarray:
    """Mean line sampled at CURVE_SAMPLES_PER_PX points per pixel of arc."""
    n = int(np.ceil(p.L * CURVE_SAMPLES_PER_PX)) + 1
    return mean_line(p, basis, n).x


def render_curve(points: np.ndarray, fiber_half_width: float, profile: str,
                 image_size: tuple[int, int], background: float = 0.0,
                 noise_sigma: float = 0.0, rng_seed: int = 0) -> Raster:
    """Render a fiber along an arbitrary dense polyline (pixels).

    ``image_size`` is (width, height). Luminance is
    background + (1 - background) * profile(d / half_width), supersampled 4x
    and box-averaged, with optional clamped Gaussian noise per pixel.
    """
    width, height = int(image_size[0]), int(image_size[1])
    points = np.asarray(points, dtype=float)
    margin = fiber_half_width + 2
    if (points[:, 0].min() < margin or points[:, 0].max() > width - 1 - margin
            or points[:, 1].min() < margin or points[:, 1].max() > height - 1 - margin):
        raise RenderBounds(
            f"curve leaves the image margin of {margin} px "
            f"(needed for the fiber profile and interpolation support)"
        )

    ss = SUPERSAMPLE
    # support cutoff: beyond this reduced distance the profile is ~0
    cut = 1.0 if profile in ("cosine", "flatdisk") else 5.0
    reach = cut * fiber_half_width + 0.5

    # coarse pass at pixel centers finds the band worth supersampling
    tree = cKDTree(points)
    pix_c, pix_r = np.meshgrid(np.arange(width, dtype=float),
                               np.arange(height, dtype=float))
    centers = np.stack([pix_c.ravel(), pix_r.ravel()], axis=1)
    near_d, _ = tree.query(centers, k=1)
    band = near_d <= reach + 0.71   # half-pixel diagonal slack

    img = np.full(height * width, background)
    if np.any(band):
        # subpixel offsets within a pixel: center c covers [c-0.5, c+0.5)
        sub = (np.arange(ss) + 0.5) / ss - 0.5
        off = np.stack(np.meshgrid(sub, sub), axis=-1).reshape(-1, 2)  # (ss*ss, 2)
        base = centers[band]
        q = (base[:, None, :] + off[None, :, :]).reshape(-1, 2)
        d = distance_to_polyline(points, q)
        vals = background + (1.0 - background) * profile_value(
            profile, d / fiber_half_width)
        img[np.flatnonzero(band)] = vals.reshape(len(base), ss * ss).mean(axis=1)
    img = img.reshape(height, width)

    if noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return Raster(width=width, height=height, f=img)


def render(p: ShapeParams, basis: CurvatureBasis, fiber_half_width: float,
           profile: str, image_size: tuple[int, int], background: float = 0.0,
           noise_sigma: float = 0.0, rng_seed: int = 0) -> Raster:
    """Render the fiber described by ShapeParams; deterministic per rng_seed."""
    pts = dense_centerline(p, basis)
    return render_curve(pts, fiber_half_width, profile, image_size,
                        background, noise_sigma, rng_seed)
