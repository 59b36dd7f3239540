"""Planar VTOL benchmark in normalized coordinates.

State x = (y, z, theta, y_dot, z_dot, theta_dot): lateral and vertical
position, roll angle, and their rates.  Inputs u = (u1, u2) are the normalized
total thrust and differential thrust.  Uncertain parameters p = (p1, p2) are
the lateral-coupling and roll-authority coefficients.  The exogenous vector
q = (q1, q2, q3, q4) carries the position set-point and the rate/angle limits
|theta_dot| <= q3, |theta| <= q4.

Hover trim is u = (1, 0) at any (y, z) = (q1, q2) with zero angle and rates.
"""

from __future__ import annotations

import math

import numpy as np

from .problems import ProblemDefinition, register_problem

Array = np.ndarray

# diagonal output and input weights of the tracking stage cost
Q_DIAG = np.array([1.0e3, 1.0e3, 1.0e3, 1.0, 1.0, 1.0])
R_DIAG = np.array([0.1, 0.1])

U_TRIM = np.array([1.0, 0.0])

# scalar copies for the hot closed-form expressions below
_Q0, _Q1, _Q2, _Q3, _Q4, _Q5 = Q_DIAG.tolist()
_R0, _R1 = R_DIAG.tolist()
_2Q_DIAG = 2.0 * Q_DIAG
_2R_DIAG = 2.0 * R_DIAG
_A_CONST = np.zeros((6, 6))
_A_CONST[0, 3] = _A_CONST[1, 4] = _A_CONST[2, 5] = 1.0
_B_CONST = np.zeros((6, 2))


def target_state(q: Array) -> Array:
    """Hover target for set-point (q1, q2)."""
    return np.array([q[0], q[1], 0.0, 0.0, 0.0, 0.0])


def pvtol_rhs(x: Array, u: Array, p: Array) -> Array:
    s, c = math.sin(x[2]), math.cos(x[2])
    u1, u2 = float(u[0]), float(u[1])
    p1u2 = float(p[0]) * u2
    return np.array(
        [
            float(x[3]),
            float(x[4]),
            float(x[5]),
            -u1 * s + p1u2 * c,
            u1 * c + p1u2 * s - 1.0,
            float(p[1]) * u2,
        ]
    )


def pvtol_rhs_jac(x: Array, u: Array, p: Array) -> tuple[Array, Array]:
    s, c = math.sin(x[2]), math.cos(x[2])
    u1 = float(u[0])
    p1 = float(p[0])
    p1u2 = p1 * float(u[1])
    A = _A_CONST.copy()
    A[3, 2] = -u1 * c - p1u2 * s
    A[4, 2] = -u1 * s + p1u2 * c
    B = _B_CONST.copy()
    B[3, 0] = -s
    B[3, 1] = p1 * c
    B[4, 0] = c
    B[4, 1] = p1 * s
    B[5, 1] = p[1]
    return A, B


def pvtol_stage_cost(x: Array, u: Array, p: Array, q: Array) -> float:
    d0 = float(x[0]) - float(q[0])
    d1 = float(x[1]) - float(q[1])
    d2, d3, d4, d5 = float(x[2]), float(x[3]), float(x[4]), float(x[5])
    e0 = float(u[0]) - 1.0
    e1 = float(u[1])
    return (
        _Q0 * d0 * d0 + _Q1 * d1 * d1 + _Q2 * d2 * d2
        + _Q3 * d3 * d3 + _Q4 * d4 * d4 + _Q5 * d5 * d5
        + _R0 * e0 * e0 + _R1 * e1 * e1
    )


def pvtol_stage_cost_grad(x: Array, u: Array, p: Array, q: Array) -> tuple[Array, Array]:
    dx = x.copy()
    dx[0] -= q[0]
    dx[1] -= q[1]
    dx *= _2Q_DIAG
    du = u - U_TRIM
    du *= _2R_DIAG
    return dx, du


def pvtol_terminal_base(x: Array, p: Array, q: Array) -> float:
    dx = x - target_state(q)
    return float(math.sqrt(np.dot(Q_DIAG, dx * dx)))


def pvtol_terminal_grad(x: Array, p: Array, q: Array) -> Array:
    dx = x - target_state(q)
    norm = math.sqrt(np.dot(Q_DIAG, dx * dx))
    if norm < 1.0e-12:
        return np.zeros(6)  # subgradient at the target
    return Q_DIAG * dx / norm


def pvtol_constraints(x: Array, u: Array, p: Array, q: Array) -> Array:
    # |theta_dot| <= q3 and |theta| <= q4, written as c_i <= 0
    return np.array([x[5] - q[2], -x[5] - q[2], x[2] - q[3], -x[2] - q[3]])


_CX_CONST = np.zeros((4, 6))
_CX_CONST[0, 5] = 1.0
_CX_CONST[1, 5] = -1.0
_CX_CONST[2, 2] = 1.0
_CX_CONST[3, 2] = -1.0
_CU_CONST = np.zeros((4, 2))


def pvtol_constraint_jac(x: Array, u: Array, p: Array, q: Array) -> tuple[Array, Array]:
    return _CX_CONST.copy(), _CU_CONST.copy()


def pvtol_problem(
    tau: float = 0.01,
    p_nom: tuple[float, float] = (0.2, 5.0),
    p_std: tuple[float, float] = (0.02, 0.5),
    q3: float = 1.0,
    q4: float = 0.5,
    x_sample_min: tuple[float, ...] | None = None,
    x_sample_max: tuple[float, ...] | None = None,
) -> ProblemDefinition:
    """Build the benchmark.  Set-points (q1, q2) are drawn in [-1, 1]^2 while
    the limits q3, q4 stay fixed; initial states are drawn inside the
    constraint-admissible box unless a custom sampling box is given.
    """
    if x_sample_min is None:
        x_sample_min = (-1.0, -1.0, -q4, -1.0, -1.0, -q3)
    if x_sample_max is None:
        x_sample_max = (1.0, 1.0, q4, 1.0, 1.0, q3)
    return ProblemDefinition(
        n_x=6,
        n_u=2,
        n_p=2,
        n_q=4,
        n_c=4,
        tau=tau,
        u_min=(-50.0, -50.0),
        u_max=(50.0, 50.0),
        x_min=x_sample_min,
        x_max=x_sample_max,
        q_min=(-1.0, -1.0, q3, q4),
        q_max=(1.0, 1.0, q3, q4),
        p_nom=p_nom,
        p_std=p_std,
        rhs=pvtol_rhs,
        constraint_map=pvtol_constraints,
        stage_cost=pvtol_stage_cost,
        terminal_penalty_base=pvtol_terminal_base,
        u_trim=U_TRIM,
        rhs_jac=pvtol_rhs_jac,
        stage_cost_grad=pvtol_stage_cost_grad,
        terminal_penalty_grad=pvtol_terminal_grad,
        constraint_jac=pvtol_constraint_jac,
        name="pvtol",
    )


register_problem("pvtol", pvtol_problem)
