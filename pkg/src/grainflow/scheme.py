"""Time-stepping loop for the full approximating problem.

Each step is a v-step (fixed-point contraction solve for [w, eta]) followed
by a theta-step (weighted-TV convex minimization), recording the two
dissipation amounts

    (1/2h)|v_i - v_{i-1}|^2   and   (1/h)|sqrt(alpha0(v_i))(theta_i - theta_{i-1})|^2

whose sum plus the new free energy must not exceed the previous free energy.
The step size is gated by the admissible threshold h* = 0.9 / max(2, 4L)
(L the C2 norm of g on the unit box); larger steps require an explicit
override and mark the run as outside the well-posedness hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .energy import free_energy
from .grid import PhaseState, ScalarField
from .model import CheckCondition, ModelSpec, ValidationReport
from .thetastep import ThetaStepParams, theta_step
from .vstep import SolverError, VStepParams, v_step

__all__ = [
    "HGateError",
    "SchemeParams",
    "StepReport",
    "Trajectory",
    "Interpolant",
    "h_star",
    "validate_initial",
    "run",
    "time_interpolate",
]


class HGateError(ValueError):
    """Step size at or above the admissible threshold without an override."""


def h_star(model: ModelSpec) -> float:
    """Admissible time step 1/max(2, 4L) with a 0.9 safety margin, L being
    the sampled C2 norm of g on [0,1]^2."""
    return 0.9 / max(2.0, 4.0 * model.c2_norm)


@dataclass
class SchemeParams:
    h: float
    nu: float = 0.0
    n_steps: int = 1
    record_every: int = 1
    override_h_gate: bool = False
    vstep: VStepParams = None
    thetastep: ThetaStepParams = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.vstep is None:
            self.vstep = VStepParams(h=self.h)
        elif self.vstep.h != self.h:
            raise ValueError("vstep.h must equal scheme h")
        if self.thetastep is None:
            self.thetastep = ThetaStepParams(h=self.h)
        elif self.thetastep.h != self.h:
            raise ValueError("thetastep.h must equal scheme h")


@dataclass
class StepReport:
    step: int
    t: float
    diss_v: float
    diss_theta: float
    v_outer_iters: int
    v_inner_iters: int
    theta_iters: int
    duality_gap: float
    contraction_ratio: float
    box_violation: float
    linf_in: float
    linf_theta: float


@dataclass
class Trajectory:
    h: float
    nu: float
    t_grid: np.ndarray
    energies: list
    reports: list
    states: list
    state_steps: list
    outside_hypotheses: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.t_grid) - 1

    def state_at(self, step: int) -> PhaseState:
        try:
            idx = self.state_steps.index(step)
        except ValueError:
            raise ValueError(
                f"state at step {step} was not recorded (record_every too coarse)"
            ) from None
        return self.states[idx]


def validate_initial(state: PhaseState, model: ModelSpec, nu: float) -> ValidationReport:
    """Membership check for the admissible initial class: w in [o*, iota*],
    eta in [0, 1], theta finite, all on one grid."""
    conds = []
    w, e, t = state.w.values, state.eta.values, state.theta.values
    o, i = model.o_star, model.iota_star
    m_w = float(min(w.min() - o, i - w.max()))
    conds.append(CheckCondition(f"o* <= w <= iota* ([{o}, {i}])", m_w >= 0.0, m_w))
    m_e = float(min(e.min(), 1.0 - e.max()))
    conds.append(CheckCondition("0 <= eta <= 1", m_e >= 0.0, m_e))
    finite = bool(np.all(np.isfinite(t)))
    linf = float(np.abs(t).max()) if finite else np.inf
    conds.append(CheckCondition(f"theta in Linf (|theta|_inf = {linf:.6g})", finite,
                                0.0 if finite else -np.inf))
    floor = model.mobility_floor(nu)
    conds.append(
        CheckCondition(
            f"mobility floor delta{'1' if nu > 0 else '0'} = {floor:.3g} > 0",
            floor > 0.0,
            floor,
        )
    )
    return ValidationReport(tuple(conds))


def run(init: PhaseState, model: ModelSpec, params: SchemeParams, sink=None) -> Trajectory:
    """Advance n_steps from the validated initial state; returns the trajectory
    with per-step reports and energy breakdowns (snapshots every record_every
    steps, step 0 and the final step always included)."""
    report = validate_initial(init, model, params.nu)
    hard_failures = [c for c in report.failures() if not c.name.startswith("mobility floor")]
    if hard_failures:
        raise ValueError("initial data rejected:\n" + str(report))
    hs = h_star(model)
    outside = False
    if params.h >= hs:
        if not params.override_h_gate:
            raise HGateError(
                f"h = {params.h} is not below the admissible step h* = {hs:.6g}; "
                "pass the override flag to run outside the theorem hypotheses"
            )
        outside = True
    if model.mobility_floor(params.nu) <= 0.0:
        outside = True

    h, nu = params.h, params.nu
    vol = init.grid.cell_volume
    state = init.copy()
    energies = [free_energy(state, model, nu)]
    reports = []
    states = [state.copy()]
    state_steps = [0]
    t_grid = h * np.arange(params.n_steps + 1)
    warm_dual = None

    for i in range(1, params.n_steps + 1):
        # the theta gap feeds straight into the per-step dissipation slack;
        # 1e-9*(1+|F_prev|) sits 10x inside the 1e-8*(1+|F_prev|) budget
        gap_budget = 1e-9 * (1.0 + abs(energies[-1].total))
        try:
            v_new, vrep = v_step((state.w, state.eta), state.theta, model, nu, params.vstep)
            theta_new, trep = theta_step(state.theta, v_new, model, nu, params.thetastep,
                                         warm_dual=warm_dual, gap_abs=gap_budget)
        except SolverError as err:
            raise SolverError(f"step {i}: {err}") from err
        warm_dual = trep.dual

        dw = v_new[0].values - state.w.values
        de = v_new[1].values - state.eta.values
        diss_v = 0.5 / h * float(np.vdot(dw, dw).real + np.vdot(de, de).real) * vol
        a0, _, _, _, _ = model.mobilities(v_new[0].values, v_new[1].values)
        dtheta = theta_new.values - state.theta.values
        diss_theta = 1.0 / h * float(np.sum(a0 * dtheta**2)) * vol

        state = PhaseState(v_new[0], v_new[1], theta_new)
        energy = free_energy(state, model, nu)
        if not energy.finite:
            raise SolverError(f"step {i}: free energy is not finite ({energy.total})")
        step_report = StepReport(
            step=i,
            t=float(t_grid[i]),
            diss_v=diss_v,
            diss_theta=diss_theta,
            v_outer_iters=vrep.outer_iters,
            v_inner_iters=vrep.inner_iters_total,
            theta_iters=trep.iters,
            duality_gap=trep.duality_gap,
            contraction_ratio=vrep.final_contraction_ratio,
            box_violation=vrep.box_violation,
            linf_in=trep.linf_in,
            linf_theta=trep.linf_out,
        )
        energies.append(energy)
        reports.append(step_report)
        if sink is not None and hasattr(sink, "on_step"):
            sink.on_step(step_report, energy)
        if i % params.record_every == 0 or i == params.n_steps:
            states.append(state.copy())
            state_steps.append(i)
            if sink is not None and hasattr(sink, "on_snapshot"):
                sink.on_snapshot(i, state)

    return Trajectory(
        h=h,
        nu=nu,
        t_grid=t_grid,
        energies=energies,
        reports=reports,
        states=states,
        state_steps=state_steps,
        outside_hypotheses=outside,
    )


class Interpolant(Enum):
    PIECEWISE_CONSTANT_RIGHT = "right"
    PIECEWISE_CONSTANT_LEFT = "left"
    LINEAR = "linear"


def _blend(sa: PhaseState, sb: PhaseState, lam: float) -> PhaseState:
    def mix(fa: ScalarField, fb: ScalarField) -> ScalarField:
        return ScalarField(fa.grid, (1.0 - lam) * fa.values + lam * fb.values)

    return PhaseState(mix(sa.w, sb.w), mix(sa.eta, sb.eta), mix(sa.theta, sb.theta))


def time_interpolate(traj: Trajectory, t: float, kind: Interpolant) -> PhaseState:
    """The three time interpolants of the discrete trajectory: value at the
    right node of the containing interval, value at the left node, and the
    piecewise-linear interpolant.  All agree with the stored state at nodes."""
    h = traj.h
    n = traj.n_steps
    if not (0.0 <= t <= n * h * (1.0 + 1e-12)):
        raise ValueError(f"t = {t} outside the trajectory range [0, {n * h}]")
    s = t / h
    nearest = int(round(s))
    if abs(s - nearest) <= 1e-9 and 0 <= nearest <= n:
        return traj.state_at(nearest).copy()
    if kind is Interpolant.PIECEWISE_CONSTANT_RIGHT:
        return traj.state_at(min(int(np.ceil(s)), n)).copy()
    if kind is Interpolant.PIECEWISE_CONSTANT_LEFT:
        return traj.state_at(int(np.floor(s))).copy()
    lo = int(np.floor(s))
    return _blend(traj.state_at(lo), traj.state_at(lo + 1), s - lo)
