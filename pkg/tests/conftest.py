import math

import numpy as np
import pytest

from mpc_autotune import ClosedLoopReport, ProblemDefinition


def integrator_problem(tau: float = 0.1) -> ProblemDefinition:
    """Scalar plant xdot = u with cost x^2 + u^2, terminal x^2, constraint x <= 0.8.

    RK4 is exact here (x + h*u), so open-loop trajectories have closed forms.
    """
    return ProblemDefinition(
        n_x=1,
        n_u=1,
        n_p=1,
        n_q=1,
        n_c=1,
        tau=tau,
        u_min=[-10.0],
        u_max=[10.0],
        x_min=[-2.0],
        x_max=[2.0],
        q_min=[0.0],
        q_max=[0.0],
        p_nom=[0.0],
        p_std=[0.0],
        rhs=lambda x, u, p: np.array([u[0]]),
        constraint_map=lambda x, u, p, q: np.array([x[0] - 0.8]),
        stage_cost=lambda x, u, p, q: float(x[0] ** 2 + u[0] ** 2),
        terminal_penalty_base=lambda x, p, q: float(x[0] ** 2),
        name="integrator-toy",
    )


def quadratic_problem(u_span: float = 10.0) -> ProblemDefinition:
    """Scalar plant xdot = u over one unit step with J = (x0 + u)^2 + u^2.

    The unconstrained minimizer from x0 is u* = -x0/2.
    """
    return ProblemDefinition(
        n_x=1,
        n_u=1,
        n_p=1,
        n_q=1,
        n_c=0,
        tau=1.0,
        u_min=[-u_span],
        u_max=[u_span],
        x_min=[-5.0],
        x_max=[5.0],
        q_min=[0.0],
        q_max=[0.0],
        p_nom=[0.0],
        p_std=[0.0],
        rhs=lambda x, u, p: np.array([u[0]]),
        constraint_map=lambda x, u, p, q: np.empty(0),
        stage_cost=lambda x, u, p, q: float(u[0] ** 2),
        terminal_penalty_base=lambda x, p, q: float(x[0] ** 2),
        name="quadratic-toy",
    )


def stub_report(
    solver_times,
    open_loop_costs=None,
    max_violations=None,
    tau_u: float = 0.1,
    diverged: bool = False,
    closed_loop_cost: float = 1.0,
) -> ClosedLoopReport:
    st = np.asarray(solver_times, dtype=float)
    m = st.size
    ol = np.asarray(open_loop_costs, dtype=float) if open_loop_costs is not None else np.ones(m)
    mv = np.asarray(max_violations, dtype=float) if max_violations is not None else -np.ones(m)
    return ClosedLoopReport(
        solver_times=st,
        open_loop_costs=ol,
        max_violations=mv,
        closed_loop_cost=math.inf if diverged else closed_loop_cost,
        m=m,
        tau_u=tau_u,
        states=np.zeros((m + 1, 1)),
        inputs=np.zeros((m, 1)),
        diverged=diverged,
        diverged_at=0 if diverged else None,
        n_solves=m,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20250814)


# verdict lines recorded by the acceptance criteria; echoed after the test
# summary so they are visible without -s
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
