"""NMPC controller: single-shooting objective, projected-gradient solver,
and receding-horizon closed-loop simulation.

The decision vector z stacks n_contr input blocks; the remaining
N_pred - n_contr horizon periods reuse the last block.  The objective is

    sum_j l(x_j, u_j) * tau_u  +  rho_f * Psi(x_N)
        + rho_constr * sum_j sum_i max(0, c_i(x_j, u_{j-1})) * tau_u

with states advanced on the prediction grid.  Gradients are exact (up to the
chosen Jacobians) via forward sensitivity propagation through the RK4 stages;
the constraint penalty uses subgradient 0 at its kink.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .design import DesignVector
from .integration import PredictionGrid, PropagationError, n_steps_for, rk4_step
from .problems import ProblemDefinition, Scenario

Array = np.ndarray

ARMIJO_SLOPE = 1.0e-4
BACKTRACK_SHRINK = 0.5
MAX_BACKTRACKS = 40
WORK_PER_RK_STEP = 4  # RK4 stage evaluations per step


@dataclass(frozen=True)
class TimingSpec:
    """How solver_time is obtained.

    "wallclock" measures each solve with a monotonic clock (repeats > 1 re-runs
    the solve and takes the median time).  "cost-model" charges c_eval seconds
    per RK stage evaluation, which is deterministic and machine-independent.
    """

    mode: str = "wallclock"
    c_eval: float | None = None
    repeats: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("wallclock", "cost-model"):
            raise ValueError(f"timing mode must be 'wallclock' or 'cost-model', got {self.mode!r}")
        if self.repeats < 1:
            raise ValueError(f"timing repeats must be >= 1, got {self.repeats!r}")
        if self.c_eval is not None and self.c_eval <= 0.0:
            raise ValueError(f"c_eval must be positive, got {self.c_eval!r}")


@dataclass(frozen=True)
class MpcSetting:
    """A problem paired with one realized design and its prediction grid."""

    problem: ProblemDefinition
    design: DesignVector
    grid: PredictionGrid

    @classmethod
    def from_design(cls, problem: ProblemDefinition, design: DesignVector) -> "MpcSetting":
        grid = PredictionGrid(
            tau_u=design.kappa * problem.tau,
            n_steps=n_steps_for(design.mu_d, design.kappa),
        )
        return cls(problem, design, grid)

    @property
    def n_z(self) -> int:
        return self.design.n_contr * self.problem.n_u

    def z_bounds(self) -> tuple[Array, Array]:
        n = self.design.n_contr
        return np.tile(self.problem.u_min, n), np.tile(self.problem.u_max, n)

    def default_warm_start(self) -> Array:
        prob = self.problem
        u0 = prob.u_trim if prob.u_trim is not None else 0.5 * (prob.u_min + prob.u_max)
        return np.tile(u0, self.design.n_contr)


@dataclass
class OpenLoopResult:
    """Outcome of one OCP solve."""

    z_opt: Array
    cost: float
    iterations_used: int
    solver_time: float
    work_units: int
    diverged: bool = False


@dataclass
class ClosedLoopReport:
    """Per-update records of one receding-horizon simulation."""

    solver_times: Array
    open_loop_costs: Array
    max_violations: Array
    closed_loop_cost: float
    m: int
    tau_u: float
    states: Array
    inputs: Array
    diverged: bool
    diverged_at: int | None
    n_solves: int

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "tau_u": self.tau_u,
            "diverged": self.diverged,
            "diverged_at": self.diverged_at,
            "n_solves": self.n_solves,
            "closed_loop_cost": self.closed_loop_cost,
            "solver_times": self.solver_times.tolist(),
            "open_loop_costs": self.open_loop_costs.tolist(),
            "max_violations": self.max_violations.tolist(),
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
        }


def block_index(j: int, n_contr: int) -> int:
    """Input block used on horizon period j (tail periods freeze the last block)."""
    return min(j, n_contr - 1)


def shift_warm_start(z: Array, n_u: int) -> Array:
    """Receding-horizon shift: drop the first block, duplicate the last."""
    return np.concatenate([z[n_u:], z[-n_u:]])


def _penalty_sum(c: Array) -> float:
    total = 0.0
    for v in c.tolist():
        if v > 0.0:
            total += v
    return total


def _rk4_record(rhs, x: Array, u: Array, p: Array, h: float, t1: Array, t2: Array, record: list | None) -> Array:
    """One RK4 step, arithmetic identical to rk4_step up to float commutations.

    Stage states live in the scratch buffer t1 unless record is a list, in
    which case they are kept and appended as (x, x2, x3, x4, x_next) so a
    following sensitivity pass over the same decision vector can reuse them
    instead of re-evaluating the dynamics.
    """
    half = 0.5 * h
    k1 = rhs(x, u, p)
    if record is None:
        x2 = np.multiply(k1, half, out=t1)
        x2 += x
        k2 = rhs(x2, u, p)
        x3 = np.multiply(k2, half, out=t1)
        x3 += x
        k3 = rhs(x3, u, p)
        x4 = np.multiply(k3, h, out=t1)
        x4 += x
        k4 = rhs(x4, u, p)
    else:
        x2 = np.multiply(k1, half)
        x2 += x
        k2 = rhs(x2, u, p)
        x3 = np.multiply(k2, half)
        x3 += x
        k3 = rhs(x3, u, p)
        x4 = np.multiply(k3, h)
        x4 += x
        k4 = rhs(x4, u, p)
    np.multiply(k2, 2.0, out=t1)
    t1 += k1
    np.multiply(k3, 2.0, out=t2)
    t1 += t2
    t1 += k4
    x_next = np.multiply(t1, h / 6.0)
    x_next += x
    if record is not None:
        record.append((x, x2, x3, x4, x_next))
    return x_next


def _cost_pass(
    setting: MpcSetting, x: Array, p: Array, q: Array, z: Array, record: list | None = None
) -> tuple[float, int]:
    """Objective value and the number of RK steps spent.  Returns inf on divergence.

    Finiteness is checked once per updating period through the accumulated
    cost (any non-finite state poisons the stage cost or the penalty), which
    keeps the per-substep loop lean.  A record list collects the RK stage
    states of every substep for reuse by a matching gradient pass.
    """
    prob, design, grid = setting.problem, setting.design, setting.grid
    rhs, n_steps = prob.rhs, grid.n_steps
    tau_u, h = grid.tau_u, grid.tau_p
    blocks = z.reshape(design.n_contr, prob.n_u)
    t1 = np.empty(prob.n_x)
    t2 = np.empty(prob.n_x)
    cost = 0.0
    steps = 0
    xj = x
    for j in range(design.n_pred):
        u = blocks[block_index(j, design.n_contr)]
        cost += prob.stage_cost(xj, u, p, q) * tau_u
        for _ in range(n_steps):
            xj = _rk4_record(rhs, xj, u, p, h, t1, t2, record)
        steps += n_steps
        if prob.n_c:
            cost += design.rho_constr * _penalty_sum(prob.constraint_map(xj, u, p, q)) * tau_u
        if not math.isfinite(cost):
            return math.inf, steps
    cost += design.rho_f * prob.terminal_penalty_base(xj, p, q)
    if not (math.isfinite(cost) and np.all(np.isfinite(xj))):
        return math.inf, steps
    return cost, steps


def open_loop_cost(setting: MpcSetting, x: Array, p: Array, q: Array, z: Array) -> float:
    """Single-shooting objective of the decision vector z from state x."""
    return _cost_pass(setting, np.asarray(x, dtype=float), p, q, np.asarray(z, dtype=float))[0]


def _rk4_step_sens(
    prob: ProblemDefinition,
    x: Array,
    u: Array,
    p: Array,
    h: float,
    S: Array,
    cols: slice,
    buf: tuple[Array, ...],
    rec: tuple[Array, ...] | None = None,
) -> Array:
    """RK4 step propagating the state and its sensitivity S = dx/dz together.

    S and the scratch buffers are updated in place.  A record from a matching
    cost pass supplies the stage states; without one they are recomputed with
    the same arithmetic, so both passes see the same trajectory either way.
    """
    K1, K2, K3, K4, T = buf
    half = 0.5 * h

    if rec is None:
        k1 = prob.rhs(x, u, p)
        x2 = x + half * k1
        k2 = prob.rhs(x2, u, p)
        x3 = x + half * k2
        k3 = prob.rhs(x3, u, p)
        x4 = x + h * k3
        k4 = prob.rhs(x4, u, p)
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        x_rec, x2, x3, x4, x_next = rec
        assert x_rec is x  # records must follow the trajectory being differentiated

    A, B = prob.rhs_jacobians(x, u, p)
    np.matmul(A, S, out=K1)
    K1[:, cols] += B

    A, B = prob.rhs_jacobians(x2, u, p)
    np.multiply(K1, half, out=T)
    T += S
    np.matmul(A, T, out=K2)
    K2[:, cols] += B

    A, B = prob.rhs_jacobians(x3, u, p)
    np.multiply(K2, half, out=T)
    T += S
    np.matmul(A, T, out=K3)
    K3[:, cols] += B

    A, B = prob.rhs_jacobians(x4, u, p)
    np.multiply(K3, h, out=T)
    T += S
    np.matmul(A, T, out=K4)
    K4[:, cols] += B

    K2 += K3
    K1 += K4
    np.multiply(K2, 2.0, out=T)
    T += K1
    T *= h / 6.0
    S += T
    return x_next


def _grad_pass(
    setting: MpcSetting, x: Array, p: Array, q: Array, z: Array, records: list | None = None
) -> tuple[float, Array, int]:
    """Objective and its exact gradient via forward sensitivities.

    records, when given, must come from a cost pass at the same state and
    decision vector; its stage states are then reused.  The step count still
    charges the full sensitivity propagation.
    """
    prob, design, grid = setting.problem, setting.design, setting.grid
    tau_u, h = grid.tau_u, grid.tau_p
    n_u = prob.n_u
    blocks = z.reshape(design.n_contr, n_u)
    n_z = z.size
    grad = np.zeros(n_z)
    S = np.zeros((prob.n_x, n_z))
    buf = tuple(np.empty((prob.n_x, n_z)) for _ in range(5))
    rec_iter = None
    if records is not None:
        assert len(records) == design.n_pred * grid.n_steps
        rec_iter = iter(records)
    cost = 0.0
    steps = 0
    xj = x
    for j in range(design.n_pred):
        b = block_index(j, design.n_contr)
        cols = slice(b * n_u, (b + 1) * n_u)
        u = blocks[b]
        cost += prob.stage_cost(xj, u, p, q) * tau_u
        lx, lu = prob.stage_cost_grads(xj, u, p, q)
        grad += tau_u * (lx @ S)
        grad[cols] += tau_u * lu
        for _ in range(grid.n_steps):
            rec = next(rec_iter) if rec_iter is not None else None
            xj = _rk4_step_sens(prob, xj, u, p, h, S, cols, buf, rec)
            steps += 1
        if prob.n_c:
            c = prob.constraint_map(xj, u, p, q)
            cost += design.rho_constr * _penalty_sum(c) * tau_u
            active = np.flatnonzero(c > 0.0)
            if active.size:
                Cx, Cu = prob.constraint_jacobians(xj, u, p, q)
                scale = design.rho_constr * tau_u
                for i in active:
                    grad += scale * (Cx[i] @ S)
                    grad[cols] += scale * Cu[i]
    cost += design.rho_f * prob.terminal_penalty_base(xj, p, q)
    grad += design.rho_f * (prob.terminal_grad(xj, p, q) @ S)
    return cost, grad, steps


def open_loop_gradient(setting: MpcSetting, x: Array, p: Array, q: Array, z: Array) -> Array:
    """Gradient of the single-shooting objective with respect to z."""
    return _grad_pass(setting, np.asarray(x, dtype=float), p, q, np.asarray(z, dtype=float))[1]


def _solve_core(
    setting: MpcSetting,
    x: Array,
    p: Array,
    q: Array,
    z0: Array,
    g_tol: float,
) -> tuple[Array, float, int, int, bool]:
    """Projected-gradient descent with Armijo backtracking inside the input box.

    Returns (z_best, cost_best, iterations_used, rk_steps, diverged).  The
    best-ever iterate is returned, so the result never degrades z0.
    """
    z_lo, z_hi = setting.z_bounds()
    z = np.clip(np.asarray(z0, dtype=float), z_lo, z_hi)

    # divergent trial trajectories are expected and handled; keep them quiet
    err_state = np.errstate(over="ignore", invalid="ignore")
    err_state.__enter__()
    try:
        return _descend(setting, x, p, q, z, z_lo, z_hi, g_tol)
    finally:
        err_state.__exit__(None, None, None)


def _descend(
    setting: MpcSetting,
    x: Array,
    p: Array,
    q: Array,
    z: Array,
    z_lo: Array,
    z_hi: Array,
    g_tol: float,
) -> tuple[Array, float, int, int, bool]:
    total_steps = 0

    records: list = []
    cost, steps = _cost_pass(setting, x, p, q, z, records)
    total_steps += steps
    if not math.isfinite(cost):
        return z, math.inf, 0, total_steps, True

    best_z, best_cost = z, cost
    span = float(np.max(z_hi - z_lo))
    step_size: float | None = None
    iterations = 0

    for _ in range(setting.design.max_iter):
        # records always describe the trajectory of the current iterate z
        cost_g, grad, steps = _grad_pass(setting, x, p, q, z, records)
        total_steps += steps
        if not np.all(np.isfinite(grad)):
            break
        projected = z - np.clip(z - grad, z_lo, z_hi)
        if float(np.max(np.abs(projected))) <= g_tol:
            break
        iterations += 1

        if step_size is None:
            gmax = float(np.max(np.abs(grad)))
            s = span / gmax if gmax > 0.0 else 1.0
        else:
            s = 2.0 * step_size

        accepted = False
        for _ in range(MAX_BACKTRACKS):
            z_try = np.clip(z - s * grad, z_lo, z_hi)
            d = z_try - z
            if float(np.max(np.abs(d))) == 0.0:
                break
            try_records: list = []
            cost_try, steps = _cost_pass(setting, x, p, q, z_try, try_records)
            total_steps += steps
            if math.isfinite(cost_try) and cost_try <= cost + ARMIJO_SLOPE * float(grad @ d):
                accepted = True
                break
            s *= BACKTRACK_SHRINK
        if not accepted:
            break  # same iterate would fail the same search again

        z, cost, step_size, records = z_try, cost_try, s, try_records
        if cost < best_cost:
            best_z, best_cost = z, cost

    return best_z, best_cost, iterations, total_steps, False


def solve(
    setting: MpcSetting,
    x: Array,
    p: Array,
    q: Array,
    z0: Array,
    timing: TimingSpec,
    g_tol: float = 1.0e-8,
) -> OpenLoopResult:
    """Solve one OCP, timing it according to the TimingSpec."""
    x = np.asarray(x, dtype=float)
    if timing.mode == "cost-model":
        if timing.c_eval is None:
            raise ValueError("cost-model timing requires c_eval")
        z_opt, cost, iters, rk_steps, diverged = _solve_core(setting, x, p, q, z0, g_tol)
        work = WORK_PER_RK_STEP * rk_steps
        return OpenLoopResult(z_opt, cost, iters, timing.c_eval * work, work, diverged)

    times = []
    first = None
    for _ in range(timing.repeats):
        t0 = time.perf_counter()
        out = _solve_core(setting, x, p, q, z0, g_tol)
        times.append(time.perf_counter() - t0)
        if first is None:
            first = out
    z_opt, cost, iters, rk_steps, diverged = first
    return OpenLoopResult(
        z_opt, cost, iters, statistics.median(times), WORK_PER_RK_STEP * rk_steps, diverged
    )


def feedback(
    setting: MpcSetting,
    x: Array,
    p: Array,
    q: Array,
    z0: Array,
    timing: TimingSpec,
) -> tuple[Array, OpenLoopResult]:
    """First input block of the solved OCP, plus the full result."""
    result = solve(setting, x, p, q, z0, timing)
    return result.z_opt[: setting.problem.n_u].copy(), result


def update_count(duration: float, tau_u: float) -> int:
    """Number of controller updates covering the duration (slack-guarded ceil)."""
    return max(1, math.ceil(duration / tau_u - 1.0e-9))


def simulate_closed_loop(
    setting: MpcSetting,
    scenario: Scenario,
    timing: TimingSpec,
    z0: Array | None = None,
) -> ClosedLoopReport:
    """Receding-horizon simulation of one scenario.

    The plant always advances at the problem's sampling period tau; the input
    is held for kappa fine steps between updates.  Warm starts shift the
    previous solution by one block.  On solver or plant divergence the report
    is flagged and the remaining per-update entries read +inf.
    """
    prob, design, grid = setting.problem, setting.design, setting.grid
    kappa, tau, tau_u = design.kappa, prob.tau, grid.tau_u
    p, q = scenario.p, scenario.q
    m = update_count(scenario.duration, tau_u)

    solver_times = np.full(m, math.inf)
    ol_costs = np.full(m, math.inf)
    max_viols = np.full(m, math.inf)
    states = np.full((m * kappa + 1, prob.n_x), math.nan)
    inputs = np.full((m, prob.n_u), math.nan)

    x = np.asarray(scenario.x0, dtype=float).copy()
    states[0] = x
    z_warm = setting.default_warm_start() if z0 is None else np.asarray(z0, dtype=float)
    cl_cost = 0.0
    n_solves = 0
    diverged_at: int | None = None

    for k in range(m):
        result = solve(setting, x, p, q, z_warm, timing)
        n_solves += 1
        if result.diverged:
            diverged_at = k
            break
        solver_times[k] = result.solver_time
        ol_costs[k] = result.cost
        u = result.z_opt[: prob.n_u].copy()
        inputs[k] = u
        cl_cost += prob.stage_cost(x, u, p, q) * tau_u

        viol = _penalty_max(prob, x, u, p, q)
        try:
            for i in range(kappa):
                x = rk4_step(prob.rhs, x, u, p, tau)
                states[k * kappa + i + 1] = x
                viol = max(viol, _penalty_max(prob, x, u, p, q))
        except PropagationError:
            diverged_at = k
            break
        max_viols[k] = viol
        z_warm = shift_warm_start(result.z_opt, prob.n_u)

    diverged = diverged_at is not None
    return ClosedLoopReport(
        solver_times=solver_times,
        open_loop_costs=ol_costs,
        max_violations=max_viols,
        closed_loop_cost=math.inf if diverged else cl_cost,
        m=m,
        tau_u=tau_u,
        states=states,
        inputs=inputs,
        diverged=diverged,
        diverged_at=diverged_at,
        n_solves=n_solves,
    )


def _penalty_max(prob: ProblemDefinition, x: Array, u: Array, p: Array, q: Array) -> float:
    if prob.n_c == 0:
        return 0.0
    return float(np.max(prob.constraint_map(x, u, p, q)))


def calibrate_c_eval(problem: ProblemDefinition, n: int = 20000) -> float:
    """Seconds per RK stage evaluation, measured by timing rhs calls."""
    x = 0.5 * (problem.x_min + problem.x_max)
    u = problem.u_trim if problem.u_trim is not None else 0.5 * (problem.u_min + problem.u_max)
    p = problem.p_nom
    problem.rhs(x, u, p)  # warm any lazy setup before timing
    t0 = time.perf_counter()
    for _ in range(n):
        problem.rhs(x, u, p)
    return (time.perf_counter() - t0) / n
