"""Per-time-step solve for the coupled pair v = [w, eta].

One step of the scheme minimizes, over fields v in the domain of the convex
part, the functional

    (1/2h)|v - v_prev|^2 + V_D(v) + Gamma(v) + <grad_g(T v_dag; u), v>
    + sum(|grad theta_prev| alpha(v) + nu |grad theta_prev|^2 beta(v)) dx^d

where the coupling argument ``v_dag`` is frozen and truncated onto [0,1]^2.
The frozen argument is driven to its fixed point by a Banach outer loop,
which is a contraction with ratio at most h*L for h below the admissible
step (L is the C2 norm of g on the unit box).  The inner minimization is a
proximal-gradient iteration: the quadratic, Dirichlet, frozen-coupling, and
mobility terms are smooth; gamma enters through its pointwise prox.

The iterate is deliberately not projected onto the box [o*, iota*] x [0, 1]:
containment is a consequence of assumption (A4) and is verified a
posteriori (reported as ``box_violation``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    GridSpec,
    ScalarField,
    grad_arrays,
    grad_operator_norm_bound,
    laplacian_arrays,
)
from .model import ModelSpec

__all__ = [
    "SolverError",
    "OuterNoConvergence",
    "InnerNoConvergence",
    "InfeasibleGamma",
    "VStepParams",
    "VStepReport",
    "v_step",
    "v_step_perturbation_bound",
]


class SolverError(RuntimeError):
    pass


class OuterNoConvergence(SolverError):
    """Fixed-point outer loop exhausted max_outer (h too large relative to L)."""


class InnerNoConvergence(SolverError):
    """Proximal-gradient inner loop exhausted max_inner."""


class InfeasibleGamma(SolverError):
    """No feasible point for the convex part (cannot occur for g1-g3 with valid init)."""


@dataclass
class VStepParams:
    """Tolerances are absolute discrete-L2 values; when left None they are
    scaled at call time to 1e-10*sqrt(|Omega|) (outer) and 1e-12*sqrt(|Omega|)
    (inner)."""

    h: float
    outer_tol: float = None
    inner_tol: float = None
    max_outer: int = 200
    max_inner: int = 100_000

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("time step h must be positive")
        for tol in (self.outer_tol, self.inner_tol):
            if tol is not None and not tol > 0:
                raise ValueError("tolerances must be positive")

    def resolved_tols(self, grid: GridSpec):
        scale = np.sqrt(grid.volume)
        outer = self.outer_tol if self.outer_tol is not None else 1e-10 * scale
        inner = self.inner_tol if self.inner_tol is not None else 1e-12 * scale
        return outer, inner


@dataclass
class VStepReport:
    outer_iters: int
    final_contraction_ratio: float
    inner_iters_total: int
    box_violation: float
    residual: float
    ratios: tuple = ()


def _pair_norm(dw: np.ndarray, de: np.ndarray, vol: float) -> float:
    return float(np.sqrt((np.vdot(dw, dw) + np.vdot(de, de)).real * vol))


def v_step(v_prev, theta_prev: ScalarField, model: ModelSpec, nu: float,
           params: VStepParams):
    """Solve one v-step; returns ((w, eta) fields, VStepReport)."""
    grid = theta_prev.grid
    dx, vol = grid.dx, grid.cell_volume
    h = params.h
    outer_tol, inner_tol = params.resolved_tols(grid)

    w_prev = v_prev[0].values
    e_prev = v_prev[1].values

    q1 = _grad_magnitude(theta_prev.values, dx)
    q2 = nu * q1**2 if nu != 0.0 else None

    mob = model.mobility
    lip = 1.0 / h + grad_operator_norm_bound(grid)
    lip += float(q1.max()) * mob.alpha_curvature_bound
    if q2 is not None:
        lip += float(q2.max()) * mob.beta_curvature_bound
    tau = 1.0 / lip

    w = w_prev.copy()
    e = e_prev.copy()

    ratio_floor = max(1e5 * inner_tol, 1e-14)
    ratios = []
    inner_total = 0
    residual = np.inf
    prev_diff = None
    outer_iters = 0

    for _ in range(params.max_outer):
        # coupling frozen at the truncated current iterate
        gw_frozen, ge_frozen = model.grad_g(np.clip(w, 0.0, 1.0), np.clip(e, 0.0, 1.0))
        w_old, e_old = w.copy(), e.copy()
        w, e, inner_iters = _inner_prox_gradient(
            w, e, w_prev, e_prev, gw_frozen, ge_frozen, q1, q2, model, h, tau,
            dx, vol, inner_tol, params.max_inner,
        )
        inner_total += inner_iters
        outer_iters += 1
        diff = _pair_norm(w - w_old, e - e_old, vol)
        if prev_diff is not None and prev_diff >= ratio_floor and diff > 0:
            ratios.append(diff / prev_diff)
        prev_diff = diff
        residual = diff
        if diff <= outer_tol:
            break
    else:
        raise OuterNoConvergence(
            f"fixed-point loop did not reach {outer_tol:.2e} in "
            f"{params.max_outer} iterations (last diff {residual:.2e}); "
            f"h={h} may be too large for L={model.c2_norm}"
        )

    o, i = model.o_star, model.iota_star
    box_violation = max(
        0.0,
        float(o - w.min()),
        float(w.max() - i),
        float(-e.min()),
        float(e.max() - 1.0),
    )

    report = VStepReport(
        outer_iters=outer_iters,
        final_contraction_ratio=max(ratios) if ratios else 0.0,
        inner_iters_total=inner_total,
        box_violation=box_violation,
        residual=residual,
        ratios=tuple(ratios),
    )
    v_new = (ScalarField(grid, w), ScalarField(grid, e))
    return v_new, report


def _grad_magnitude(values: np.ndarray, dx: float) -> np.ndarray:
    comps = grad_arrays(values, dx)
    if len(comps) == 1:
        return np.abs(comps[0])
    return np.sqrt(comps[0] ** 2 + comps[1] ** 2)


def _inner_prox_gradient(w, e, w_prev, e_prev, gw_frozen, ge_frozen, q1, q2,
                         model: ModelSpec, h, tau, dx, vol, inner_tol, max_inner):
    """Proximal gradient on the strictly convex inner objective; gamma acts on
    w only, so eta takes plain gradient steps."""
    inv_h = 1.0 / h
    for j in range(max_inner):
        _, _, _, grad_a, grad_b = model.mobilities(w, e)
        gw = inv_h * (w - w_prev) - laplacian_arrays(w, dx) + gw_frozen + q1 * grad_a[0]
        ge = inv_h * (e - e_prev) - laplacian_arrays(e, dx) + ge_frozen + q1 * grad_a[1]
        if q2 is not None:
            gw += q2 * grad_b[0]
            ge += q2 * grad_b[1]
        w_new = model.gamma_prox(tau, w - tau * gw)
        e_new = e - tau * ge
        diff = _pair_norm(w_new - w, e_new - e, vol)
        w, e = w_new, e_new
        if diff <= inner_tol:
            return w, e, j + 1
    raise InnerNoConvergence(
        f"inner proximal gradient did not reach {inner_tol:.2e} in {max_inner} iterations"
    )


def v_step_perturbation_bound(v_prev_a, v_prev_b, theta_prev: ScalarField,
                              model: ModelSpec, nu: float, params: VStepParams) -> float:
    """Runs the step from two nearby previous states (same theta) and returns
    |v_a - v_b|^2 / |v_prev_a - v_prev_b|^2 (0 when the inputs coincide).
    For h below the admissible step the ratio is at most 2."""
    vol = theta_prev.grid.cell_volume
    den = _pair_norm(
        v_prev_a[0].values - v_prev_b[0].values,
        v_prev_a[1].values - v_prev_b[1].values,
        vol,
    )
    va, _ = v_step(v_prev_a, theta_prev, model, nu, params)
    vb, _ = v_step(v_prev_b, theta_prev, model, nu, params)
    if den == 0.0:
        return 0.0
    num = _pair_norm(va[0].values - vb[0].values, va[1].values - vb[1].values, vol)
    return (num / den) ** 2
