"""Correlation functional and Gauss-Newton iteration.

Phi integrates (f - g)^2 over the virtual beam with the curvilinear surface
element (1 - gamma r) dr ds. Linearizing the virtual image in the parameters
gives a small symmetric system M dV = b per iteration, whose kernel is the
virtual-image slope along the normal times the per-parameter displacement
field. The right-hand side is assembled so that b = -1/2 dPhi/dV, which makes
V <- V + dV a descent step; a finite-difference oracle pins this in tests.

An optional backtracking line search (on by default) halves the step while
Phi would increase; disable it to reproduce the plain iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import CurvatureBasis
from .errors import (IllConditioned, NoDescent, OutOfBounds, OverlapError,
                     VicError)
from .geometry import MeanLine, ShapeParams, mean_line, sensitivity_fields
from .image import Raster, sample
from .virtual_beam import VirtualBeam, luminance, luminance_slope

CONDITION_LIMIT = 1e12


@dataclass
class FitOptions:
    """Iteration controls; ``frozen`` is a boolean mask over the packed vector."""

    max_iters: int = 100
    rel_tol: float = 1e-6
    frozen: np.ndarray | None = None
    backtracking: bool = True
    refine: float = 3.0
    max_backtracks: int = 20

    def frozen_mask(self, n_params: int) -> np.ndarray:
        if self.frozen is None:
            return np.zeros(n_params, dtype=bool)
        mask = np.asarray(self.frozen, dtype=bool)
        if mask.shape != (n_params,):
            raise VicError(f"frozen mask has shape {mask.shape}, expected ({n_params},)")
        if mask.all():
            raise VicError("at least one parameter must stay free")
        return mask


@dataclass
class FitReport:
    """Convergence trace. With backtracking on, phi_history is non-increasing."""

    params: ShapeParams
    phi_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    condition_estimate: float = float("nan")
    step_norms: list[float] = field(default_factory=list)
    failure: str | None = None
    failure_detail: str | None = None


@dataclass
class _MeshState:
    """Everything Phi and the normal system need at one parameter state."""

    line: MeanLine
    f: np.ndarray        # (n_s, n_r) sampled physical luminance
    resid: np.ndarray    # f - g
    W: np.ndarray        # (1 - gamma r) * ws * wr, strictly positive
    r: np.ndarray
    phi: float


def _evaluate(raster: Raster, p: ShapeParams, basis: CurvatureBasis,
              beam: VirtualBeam) -> _MeshState:
    line = mean_line(p, basis, beam.n_s)
    kappa = np.max(np.abs(line.gamma)) * beam.R
    if kappa >= 1.0:
        raise OverlapError(
            f"|gamma|*R reaches {kappa:.3f} >= 1: surface map not injective"
        )
    r = beam.r_grid()
    X = line.x[:, None, :] + r[None, :, None] * line.nu[:, None, :]
    f = sample(raster, X.reshape(-1, 2)).reshape(beam.n_s, beam.n_r)
    g = luminance(r, beam.R)
    metric = 1.0 - line.gamma[:, None] * r[None, :]
    assert metric.min() > 0.0
    W = metric * beam.s_weights(p.L)[:, None] * beam.r_weights()[None, :]
    resid = f - g[None, :]
    phi_val = float(np.sum(resid * resid * W))
    return _MeshState(line=line, f=f, resid=resid, W=W, r=r, phi=phi_val)


def phi(raster: Raster, p: ShapeParams, basis: CurvatureBasis,
        beam: VirtualBeam) -> float:
    """Value of the correlation functional (>= 0, deterministic)."""
    return _evaluate(raster, p, basis, beam).phi


def assemble(raster: Raster, p: ShapeParams, basis: CurvatureBasis,
             beam: VirtualBeam, frozen: np.ndarray | None = None,
             state: _MeshState | None = None):
    """Normal system (M, b) at the current state, frozen rows/columns removed.

    M is the Gram matrix of the kernels c_k = l'(r) (nu . dx/dV_k) under the
    surface-element weights; b_k = sum c_k (g - f) dS = -1/2 dPhi/dV_k.
    Returns (M, b).
    """
    if state is None:
        state = _evaluate(raster, p, basis, beam)
    line = state.line
    S = sensitivity_fields(p, basis, line.s, line)           # (K, n_s, 2)
    proj = np.einsum("kid,id->ki", S, line.nu)               # (K, n_s)
    lp = luminance_slope(state.r, beam.R)                    # (n_r,)
    a = state.W @ (lp * lp)                                  # (n_s,)
    M = (proj * a) @ proj.T
    b_s = (state.W * (-state.resid)) @ lp                    # (n_s,)
    b = proj @ b_s
    if frozen is not None and frozen.any():
        keep = ~frozen
        M = M[np.ix_(keep, keep)]
        b = b[keep]
    return M, b


def natural_units(L: float, n_amplitudes: int) -> np.ndarray:
    """Per-parameter scale that displaces the mean line by about one pixel.

    1 px for the start point, 1/L for the angle, 1/L^2 for the curvature
    amplitudes. Used both for finite-difference steps and to express the
    normal system in pixel-equivalent variables.
    """
    return np.concatenate([[1.0, 1.0], [1.0 / L], np.full(n_amplitudes, 1.0 / L ** 2)])


def step(M: np.ndarray, b: np.ndarray, order: int | None = None,
         scale: np.ndarray | None = None):
    """Solve M dV = b; returns (dV, condition estimate).

    The raw system mixes pixel and px^-1 units, whose spread alone dwarfs any
    meaningful threshold, so the solve runs in scaled variables. ``scale``
    gives the per-parameter natural units (see natural_units); without it the
    diagonal of M is used. The condition estimate is that of the scaled
    system, i.e. the collinearity of the sensitivity kernels in
    pixel-equivalent terms; beyond 1e12 the step is untrustworthy
    (the series order is too high for the arc) and IllConditioned is raised.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if scale is None:
        d = np.sqrt(np.abs(np.diag(M)))
        d[d == 0] = 1.0
        d = 1.0 / d
    else:
        d = np.asarray(scale, dtype=float)
    Ms = M * d[:, None] * d[None, :]
    cond = float(np.linalg.cond(Ms))
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditioned(cond, M.shape[0], order)
    try:
        dv = np.linalg.solve(Ms, b * d) * d
    except np.linalg.LinAlgError as exc:
        raise IllConditioned(float("inf"), M.shape[0], order) from exc
    return dv, cond


def fit(raster: Raster, p0: ShapeParams, basis: CurvatureBasis,
        beam: VirtualBeam, opts: FitOptions | None = None) -> FitReport:
    """Gauss-Newton iteration from p0 until the relative Phi decrease,
    measured against the starting Phi, falls below rel_tol.

    Numeric failures (NoDescent, IllConditioned, OutOfBounds, OverlapError)
    do not raise: the report carries the failure name and the best parameters
    reached. During the line search, a trial step that leaves the image or
    violates no-overlap is treated as an increase and halved away.
    """
    opts = opts or FitOptions()
    frozen = opts.frozen_mask(p0.n_params)
    V = p0.pack()
    report = FitReport(params=ShapeParams.unpack(V, p0.L))

    try:
        state = _evaluate(raster, ShapeParams.unpack(V, p0.L), basis, beam)
    except (OutOfBounds, OverlapError) as exc:
        report.failure = type(exc).__name__
        report.failure_detail = str(exc)
        return report

    phi_cur = state.phi
    report.phi_history.append(phi_cur)
    phi_ref = phi_cur
    if phi_ref == 0.0:
        report.converged = True
        return report

    for it in range(1, opts.max_iters + 1):
        p_cur = ShapeParams.unpack(V, p0.L)
        try:
            M, b = assemble(raster, p_cur, basis, beam, frozen=frozen, state=state)
            dv_red, cond = step(M, b, order=basis.order,
                                scale=natural_units(p0.L, len(p0.A))[~frozen])
        except (IllConditioned, OutOfBounds, OverlapError) as exc:
            report.failure = type(exc).__name__
            report.failure_detail = str(exc)
            if isinstance(exc, IllConditioned):
                report.condition_estimate = exc.condition
            break
        report.condition_estimate = cond

        dV = np.zeros_like(V)
        dV[~frozen] = dv_red

        scale = 1.0
        accepted = None
        phi_try = None
        bad_trial = None
        for _ in range(opts.max_backtracks + 1):
            V_try = V + scale * dV
            V_try[frozen] = V[frozen]
            try:
                state_try = _evaluate(raster, ShapeParams.unpack(V_try, p0.L),
                                      basis, beam)
                phi_try = state_try.phi
            except (OutOfBounds, OverlapError) as exc:
                if not opts.backtracking:
                    bad_trial = exc
                    break
                phi_try = np.inf
            if not opts.backtracking or phi_try <= phi_cur:
                accepted = (V_try, state_try, phi_try)
                break
            scale *= 0.5

        if bad_trial is not None:
            report.iterations = it
            report.failure = type(bad_trial).__name__
            report.failure_detail = str(bad_trial)
            break

        report.iterations = it
        if accepted is None:
            # no non-increasing step found; if Phi is flat to tolerance we are
            # stationary, otherwise the search direction failed
            if np.isfinite(phi_try) and (phi_try - phi_cur) / phi_ref < opts.rel_tol:
                report.converged = True
            else:
                report.failure = NoDescent.__name__
                report.failure_detail = (
                    f"{opts.max_backtracks} halvings without decrease at iteration {it}"
                )
            break

        V_new, state_new, phi_new = accepted
        decrease = phi_cur - phi_new
        V = V_new
        state = state_new
        phi_cur = phi_new
        report.phi_history.append(phi_cur)
        report.step_norms.append(float(np.linalg.norm(scale * dV)))
        # the stop rule is the literal "decreased by less than rel_tol,
        # relative to the starting Phi"; with backtracking decrease >= 0
        if decrease / phi_ref < opts.rel_tol:
            report.converged = True
            break

    report.params = ShapeParams.unpack(V, p0.L)
    return report
