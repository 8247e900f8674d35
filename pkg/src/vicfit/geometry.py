"""Shape parameters and the map from them to plane curves.

Coordinate convention (fixed across the package): x1 = column index growing
rightward, x2 = row index growing downward, angles measured from +x1 toward
+x2, and the normal nu is the tangent tau rotated by +pi/2 in that frame.
With this choice image sampling is index-direct and a positive curvature
turns toward +x2.

Curvature is gamma(s) = sum_n A_n * gamma_n(s/L); the angle follows by the
exact antiderivatives of the basis, and positions by cumulative composite
Simpson quadrature of (cos theta, sin theta) on a uniform grid.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .basis import CurvatureBasis, eval_gamma, eval_theta, gamma_matrix, theta_matrix
from .errors import DomainError


@dataclass
class ShapeParams:
    """Unknowns of one fit: start point, start angle, series amplitudes.

    ``A`` has basis order + 1 entries (pixels^-1); ``L`` is the beam length in
    pixels and stays fixed during a fit. The packed optimization vector is
    [x0_1, x0_2, theta0, A_0 .. A_N], dimension N + 4.
    """

    x0: np.ndarray
    theta0: float
    A: np.ndarray
    L: float

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(2)
        self.A = np.atleast_1d(np.asarray(self.A, dtype=float))
        if self.L <= 0:
            raise DomainError(f"beam length must be positive, got {self.L}")

    @property
    def n_params(self) -> int:
        return 3 + len(self.A)

    def pack(self) -> np.ndarray:
        """Flatten into the optimization vector [x0_1, x0_2, theta0, A...]."""
        return np.concatenate([self.x0, [self.theta0], self.A])

    @classmethod
    def unpack(cls, v: np.ndarray, L: float) -> "ShapeParams":
        v = np.asarray(v, dtype=float)
        return cls(x0=v[:2].copy(), theta0=float(v[2]), A=v[3:].copy(), L=L)

    def param_names(self) -> list[str]:
        return ["x0_1", "x0_2", "theta0"] + [f"A{n}" for n in range(len(self.A))]


@dataclass(frozen=True)
class FrameSample:
    """Local frame of the mean line at one abscissa."""

    s: float
    x: np.ndarray
    theta: float
    gamma: float

    @property
    def tau(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])

    @property
    def nu(self) -> np.ndarray:
        return np.array([-np.sin(self.theta), np.cos(self.theta)])


@dataclass
class MeanLine:
    """Mean line sampled on a uniform abscissa grid (struct-of-arrays).

    Indexing returns a FrameSample; the arrays themselves feed the
    correlation hot path.
    """

    s: np.ndarray           # (n,)
    x: np.ndarray           # (n, 2)
    theta: np.ndarray       # (n,)
    gamma: np.ndarray       # (n,)
    tau: np.ndarray = field(repr=False, default=None)   # (n, 2)
    nu: np.ndarray = field(repr=False, default=None)    # (n, 2)

    def __post_init__(self):
        if self.tau is None:
            self.tau = np.stack([np.cos(self.theta), np.sin(self.theta)], axis=1)
        if self.nu is None:
            self.nu = np.stack([-np.sin(self.theta), np.cos(self.theta)], axis=1)

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, i: int) -> FrameSample:
        return FrameSample(
            s=float(self.s[i]), x=self.x[i].copy(),
            theta=float(self.theta[i]), gamma=float(self.gamma[i]),
        )


def _check_abscissa(s, L: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    slack = 1e-9 * L
    if np.any(s < -slack) or np.any(s > L + slack):
        bad = np.atleast_1d(s)
        bad = bad[(bad < 0) | (bad > L)]
        raise DomainError(f"abscissa outside [0, {L}]: {bad[:3]}")
    return np.clip(s, 0.0, L)


def gamma_at(p: ShapeParams, basis: CurvatureBasis, s) -> np.ndarray | float:
    """Curvature at abscissa s (scalar or array), pixels^-1."""
    ss = _check_abscissa(s, p.L)
    u = ss / p.L
    out = np.zeros_like(u)
    for n, a in enumerate(p.A):
        if a != 0.0:
            out = out + a * eval_gamma(basis, n, u)
    return out if np.ndim(s) else float(out)


def theta_at(p: ShapeParams, basis: CurvatureBasis, s) -> np.ndarray | float:
    """Tangent angle at abscissa s, radians, via the closed-form antiderivatives."""
    ss = _check_abscissa(s, p.L)
    u = ss / p.L
    out = np.full_like(u, p.theta0)
    for n, a in enumerate(p.A):
        if a != 0.0:
            out = out + p.L * a * eval_theta(basis, n, u)
    return out if np.ndim(s) else float(out)


def mean_line(p: ShapeParams, basis: CurvatureBasis, n_samples: int) -> MeanLine:
    """Sample the mean line on a uniform grid of n_samples points (ends included)."""
    if n_samples < 2:
        raise DomainError(f"n_samples must be >= 2, got {n_samples}")
    s = np.linspace(0.0, p.L, n_samples)
    u = s / p.L
    G = gamma_matrix(basis, u)
    T = theta_matrix(basis, u)
    gamma = p.A @ G
    theta = p.theta0 + p.L * (p.A @ T)
    tau = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    x = p.x0 + cumulative_simpson(tau, dx=s[1] - s[0], axis=0, initial=0.0)
    return MeanLine(s=s, x=x, theta=theta, gamma=gamma, tau=tau)


def surface_point(frame: FrameSample, r: float) -> np.ndarray:
    """Point at transverse offset r from the mean line: X = x + r * nu."""
    return frame.x + r * frame.nu


def sensitivity_fields(p: ShapeParams, basis: CurvatureBasis, s_grid: np.ndarray,
                       line: MeanLine | None = None) -> np.ndarray:
    """Mean-line displacement per unit change of each parameter.

    Returns shape (N+4, n, 2), ordered like ShapeParams.pack():
    d x/d x0_1 = e1, d x/d x0_2 = e2, d x/d theta0 = int_0^s nu,
    d x/d A_n = L * int_0^s theta_n(xi/L) nu(xi) d xi.
    The integrals use cumulative Simpson on the given uniform grid (the same
    rule as mean_line). The term collinear to tau is omitted on purpose: it is
    orthogonal to the virtual-image gradient and drops from the normal system.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    _check_abscissa(s_grid, p.L)
    n = len(s_grid)
    if abs(s_grid[0]) > 1e-12 * p.L:
        raise DomainError("sensitivity grid must start at s = 0 (cumulative integrals)")
    if n >= 2:
        steps = np.diff(s_grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12 * p.L):
            raise DomainError("sensitivity grid must be uniform")
    if line is None or len(line) != n:
        u = s_grid / p.L
        T = theta_matrix(basis, u)
        theta = p.theta0 + p.L * (p.A @ T)
        nu = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    else:
        u = s_grid / p.L
        T = theta_matrix(basis, u)
        nu = line.nu
    k = p.n_params
    fields = np.zeros((k, n, 2))
    fields[0, :, 0] = 1.0
    fields[1, :, 1] = 1.0
    if n >= 2:
        dx = s_grid[1] - s_grid[0]
        fields[2] = cumulative_simpson(nu, dx=dx, axis=0, initial=0.0)
        for j in range(len(p.A)):
            integrand = p.L * T[j][:, None] * nu
            fields[3 + j] = cumulative_simpson(integrand, dx=dx, axis=0, initial=0.0)
    return fields


def write_curve_csv(path, s, x, theta, gamma) -> None:
    """Write the shared curve schema: s, x1, x2, theta, gamma (9 sig. digits)."""
    buf = io.StringIO()
    buf.write("s,x1,x2,theta,gamma\n")
    for i in range(len(s)):
        buf.write(f"{s[i]:.9g},{x[i][0]:.9g},{x[i][1]:.9g},{theta[i]:.9g},{gamma[i]:.9g}\n")
    data = buf.getvalue()
    if hasattr(path, "write"):
        path.write(data)
    else:
        with open(path, "w") as fh:
            fh.write(data)


def mean_line_to_csv(path, line: MeanLine) -> None:
    """CSV export of a sampled mean line."""
    write_curve_csv(path, line.s, line.x, line.theta, line.gamma)
