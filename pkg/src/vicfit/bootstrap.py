"""Initial-guess construction: polyline tracing and series bootstrap.

The fiber is first approximated by equally long straight segments. Each
segment is a one-parameter problem: a short straight virtual beam hinged at
the segment start, rotated to minimize its own correlation residual
(golden-section search, +/-60 degrees around the previous direction).
Tracing stops when the best residual looks like background, i.e. the beam ran
off the fiber end.

The segment angles are then converted to series amplitudes by solving
theta_hat(s_q)/L = sum_{n=-1..N} a_n theta_n(s_q/L), where the extra
constant function theta_{-1} = 1 carries the initial angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import CurvatureBasis, make_basis, theta_matrix
from .correlation import phi
from .errors import DomainError, InitRankError, OutOfBounds, SeedError
from .geometry import ShapeParams, theta_at
from .image import Raster
from .virtual_beam import build_mesh, luminance

# fraction of the background residual that flags "no fiber under the beam"
BACKGROUND_FRACTION = 0.8
GOLDEN_ITERS = 40
SEARCH_HALF_ANGLE = np.pi / 3


@dataclass
class Polyline:
    """Equally spaced trace of the fiber: segment starts plus the final end.

    ``points`` has one more row than ``angles``; ``angles[q]`` is the
    direction of the segment leaving ``points[q]``. A straight chord measures
    the tangent of the underlying curve near the segment middle, not at its
    start, so the abscissa attributed to angle q is (q + 1/2) * spacing;
    attributing at the start biases the bootstrap by gamma*h/2 per station,
    enough to park the far end of a long beam outside its own half-width.
    """

    points: np.ndarray    # (S+1, 2)
    angles: np.ndarray    # (S,)
    spacing: float

    @property
    def length(self) -> float:
        return len(self.angles) * self.spacing

    @property
    def abscissae(self) -> np.ndarray:
        return self.spacing * (np.arange(len(self.angles), dtype=float) + 0.5)

    def to_csv(self, path) -> None:
        data = "q,x1,x2,s,theta\n"
        for q in range(len(self.angles)):
            data += (f"{q},{self.points[q][0]:.9g},{self.points[q][1]:.9g},"
                     f"{self.abscissae[q]:.9g},{self.angles[q]:.9g}\n")
        if hasattr(path, "write"):
            path.write(data)
        else:
            with open(path, "w") as fh:
                fh.write(data)


def _segment_phi(raster, start, angle, h, beam, basis0):
    p = ShapeParams(x0=start, theta0=angle, A=[0.0], L=h)
    try:
        return phi(raster, p, basis0, beam)
    except OutOfBounds:
        return np.inf


def _golden_min(fn, lo: float, hi: float, iters: int = GOLDEN_ITERS):
    """Golden-section minimum of fn on [lo, hi]; returns (x, fn(x))."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    if fc < fd:
        return c, fc
    return d, fd


def background_phi(raster: Raster, h: float, R: float, refine: float = 3.0,
                   beam=None) -> float:
    """Residual a segment beam would score on pure background.

    Estimated analytically from robust image statistics: the background level
    is the luminance median (the fiber occupies few pixels) and the noise
    variance comes from the scaled median absolute deviation.
    """
    if beam is None:
        beam = build_mesh(h, R, refine)
    med = float(np.median(raster.f))
    mad = float(np.median(np.abs(raster.f - med)))
    sigma = 1.4826 * mad
    g = luminance(beam.r_grid(), R)
    wr = beam.r_weights()
    per_len = float(((med - g) ** 2 + sigma ** 2) @ wr)
    return per_len * h


def trace(raster: Raster, seed, seed_angle: float, h: float,
          max_segments: int = 200, R: float = 4.0,
          refine: float = 3.0) -> Polyline:
    """Trace the fiber from a user seed by chained one-angle segment fits.

    ``h`` is the segment length (>= 2R so segments carry angle information);
    tracing stops at max_segments, at the image border, or when the best
    segment residual exceeds the background fraction (fiber end).
    """
    seed = np.asarray(seed, dtype=float).reshape(2)
    if h < 2 * R:
        raise DomainError(f"segment length {h} shorter than beam width {2 * R}")
    beam = build_mesh(h, R, refine)
    phi_bg = background_phi(raster, h, R, refine, beam=beam)
    stop_level = BACKGROUND_FRACTION * phi_bg

    points = [seed.copy()]
    angles: list[float] = []
    angle_prev = float(seed_angle)
    for q in range(max_segments):
        fn = lambda a: _segment_phi(raster, points[-1], a, h, beam, _BASIS0)
        best_angle, best_phi = _golden_min(
            fn, angle_prev - SEARCH_HALF_ANGLE, angle_prev + SEARCH_HALF_ANGLE)
        if not np.isfinite(best_phi) or best_phi > stop_level:
            if q == 0:
                raise SeedError(
                    f"seed {tuple(seed)} does not sit on a fiber: first segment "
                    f"residual {best_phi:.4g} vs background level {phi_bg:.4g}"
                )
            break
        angles.append(best_angle)
        points.append(points[-1] + h * np.array([np.cos(best_angle), np.sin(best_angle)]))
        angle_prev = best_angle
    if not angles:
        raise SeedError("tracing produced no segments")
    return Polyline(points=np.array(points), angles=np.array(angles), spacing=h)


def fit_series(poly: Polyline, basis: CurvatureBasis, order: int | None = None
               ) -> ShapeParams:
    """Convert traced angles into ShapeParams for the given basis.

    Solves the square system when order + 2 equals the number of angle
    stations, and least squares when there are more stations. The constant
    extra function absorbs theta0.
    """
    if order is None:
        order = basis.order
    S = len(poly.angles)
    if order + 2 > S:
        raise DomainError(
            f"order {order} needs at least {order + 2} traced angles, have {S}"
        )
    L = poly.length
    u = poly.abscissae / L
    T = np.empty((S, order + 2))
    T[:, 0] = 1.0
    T[:, 1:] = theta_matrix(basis, u)[: order + 1].T
    rhs = poly.angles / L
    if order + 2 == S:
        rank = np.linalg.matrix_rank(T)
        if rank < order + 2:
            raise InitRankError(
                f"bootstrap system rank {rank} < {order + 2}: degenerate abscissae"
            )
        coeff = np.linalg.solve(T, rhs)
    else:
        coeff, _, rank, _ = np.linalg.lstsq(T, rhs, rcond=None)
        if rank < order + 2:
            raise InitRankError(
                f"bootstrap system rank {rank} < {order + 2}: degenerate abscissae"
            )
    A = np.zeros(basis.size)
    A[: order + 1] = coeff[1:]
    return ShapeParams(x0=poly.points[0].copy(), theta0=float(coeff[0] * L),
                       A=A, L=L)


def reparameterize(p: ShapeParams, basis: CurvatureBasis, new_length: float,
                   n_stations: int = 200) -> ShapeParams:
    """Re-express a shape on a different length (least squares on the angles).

    Used after end detection (truncation) or when the physical length is
    known a priori and exceeds the traced one. Angle stations only cover the
    part where the source shape is defined; when lengthening, the series
    extrapolates the remainder, which is acceptable for an initialization.
    """
    if new_length <= 0:
        raise DomainError(f"new length must be positive, got {new_length}")
    reach = min(p.L, new_length)
    s = np.linspace(0.0, reach, n_stations)
    angles = np.atleast_1d(theta_at(p, basis, s))
    T = np.empty((n_stations, basis.order + 2))
    T[:, 0] = 1.0
    T[:, 1:] = theta_matrix(basis, s / new_length).T
    coeff, _, rank, _ = np.linalg.lstsq(T, angles / new_length, rcond=None)
    if rank < basis.order + 2:
        raise InitRankError("reparameterization rank deficient")
    return ShapeParams(x0=p.x0.copy(), theta0=float(coeff[0] * new_length),
                       A=coeff[1:], L=new_length)


# order-0 Legendre basis shared by all straight segment fits
_BASIS0 = make_basis("legendre", 0)
