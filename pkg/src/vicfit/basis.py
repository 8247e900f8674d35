"""Curvature basis families.

The dimensionless curvature of the virtual beam is expanded on a family of
functions gamma_n(u), u in [0, 1], together with their exact antiderivatives
theta_n(u) = int_0^u gamma_n. Two families are provided:

* ``legendre`` -- shifted Legendre polynomials, stored as exact integer
  coefficient rows and evaluated by Horner's rule.
* ``fourier`` -- the real Fourier family {1, cos 2*pi*u, sin 2*pi*u,
  cos 4*pi*u, ...} with fundamental period 1.

Both families start with the constant function, so the first amplitude is a
uniform curvature. All antiderivatives are closed form; no quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisIndexError, DomainError, OrderTooHigh

LEGENDRE = "legendre"
FOURIER = "fourier"

# Past this order the huge coefficients (~1e21 already at N=30) defeat
# float64 Horner evaluation by cancellation; reject loudly.
MAX_LEGENDRE_ORDER = 30


def legendre_coeffs(order: int) -> np.ndarray:
    """Integer coefficient matrix of the shifted Legendre polynomials.

    Row n holds the monomial coefficients of the degree-n shifted Legendre
    polynomial on [0, 1]: P[n, k] = (-1)**(n+k) * C(n, k) * C(n+k, k).
    Stored as exact (unbounded) Python integers: the interior entries pass
    2^63 already at n = 30, so a fixed-width dtype would silently wrap.
    """
    if not 0 <= order <= MAX_LEGENDRE_ORDER:
        raise OrderTooHigh(
            f"legendre order {order} outside 0..{MAX_LEGENDRE_ORDER} "
            f"(coefficients overflow double-precision evaluation beyond)"
        )
    P = np.zeros((order + 1, order + 1), dtype=object)
    for n in range(order + 1):
        for k in range(n + 1):
            P[n, k] = (-1) ** (n + k) * math.comb(n, k) * math.comb(n + k, k)
    return P


@dataclass(frozen=True)
class CurvatureBasis:
    """A curvature series family of a fixed order.

    Immutable after construction; safe for concurrent reads. ``coeffs`` is
    only populated for the Legendre family.
    """

    family: str
    order: int
    coeffs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in (LEGENDRE, FOURIER):
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.order < 0:
            raise OrderTooHigh(f"order must be >= 0, got {self.order}")
        if self.family == LEGENDRE and self.coeffs is None:
            object.__setattr__(self, "coeffs", legendre_coeffs(self.order))

    @property
    def size(self) -> int:
        """Number of functions in the family (order + 1)."""
        return self.order + 1

    def _check_index(self, n: int) -> None:
        if not 0 <= n <= self.order:
            raise BasisIndexError(f"basis index {n} outside 0..{self.order}")


def make_basis(family: str, order: int) -> CurvatureBasis:
    """Build a basis from the CLI-facing family string ("legendre"/"fourier")."""
    return CurvatureBasis(family=family.lower(), order=order)


def _check_unit_interval(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        bad = np.atleast_1d(u)
        bad = bad[(bad < 0) | (bad > 1)]
        raise DomainError(f"reduced abscissa outside [0, 1]: {bad[:3]}")
    return np.clip(u, 0.0, 1.0)


def eval_gamma(basis: CurvatureBasis, n: int, u) -> np.ndarray | float:
    """Evaluate gamma_n at reduced abscissa u in [0, 1]. Scalar in, scalar out."""
    basis._check_index(n)
    uu = _check_unit_interval(u)
    if basis.family == LEGENDRE:
        row = basis.coeffs[n]
        out = np.zeros_like(uu)
        for k in range(n, -1, -1):  # Horner
            out = out * uu + float(row[k])
    else:
        if n == 0:
            out = np.ones_like(uu)
        elif n % 2 == 1:
            k = (n + 1) // 2
            out = np.cos(2 * np.pi * k * uu)
        else:
            k = n // 2
            out = np.sin(2 * np.pi * k * uu)
    return out if out.ndim else float(out)


def eval_theta(basis: CurvatureBasis, n: int, u) -> np.ndarray | float:
    """Exact antiderivative int_0^u gamma_n, closed form for both families."""
    basis._check_index(n)
    uu = _check_unit_interval(u)
    if basis.family == LEGENDRE:
        row = basis.coeffs[n]
        # sum_k P[n,k] u^(k+1)/(k+1), evaluated as u * Horner(P[n,k]/(k+1))
        out = np.zeros_like(uu)
        for k in range(n, -1, -1):
            out = out * uu + float(row[k]) / (k + 1)
        out = out * uu
    else:
        if n == 0:
            out = uu.copy()
        elif n % 2 == 1:
            k = (n + 1) // 2
            out = np.sin(2 * np.pi * k * uu) / (2 * np.pi * k)
        else:
            k = n // 2
            out = (1.0 - np.cos(2 * np.pi * k * uu)) / (2 * np.pi * k)
    return out if out.ndim else float(out)


def gamma_matrix(basis: CurvatureBasis, u: np.ndarray) -> np.ndarray:
    """All gamma_n stacked: shape (order+1, len(u))."""
    return np.stack([eval_gamma(basis, n, u) for n in range(basis.size)])


def theta_matrix(basis: CurvatureBasis, u: np.ndarray) -> np.ndarray:
    """All theta_n stacked: shape (order+1, len(u))."""
    return np.stack([eval_theta(basis, n, u) for n in range(basis.size)])
