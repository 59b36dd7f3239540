"""Problem containers, scenario clouds, and batch partitioning.

A ProblemDefinition packages the plant dynamics, cost ingredients, constraint
map, bounds, and the uncertainty description.  Scenarios (initial state, model
parameters, exogenous vector) are drawn once, split into equal batches, and
reused verbatim by the tuner so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


def _as_vector(v, n: int, name: str) -> Array:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size != n:
        raise ValueError(f"{name} must have length {n}, got {arr.size}")
    return arr


@dataclass
class ProblemDefinition:
    """Continuous-time control problem with box bounds and uncertainty ranges.

    rhs(x, u, p) -> dx/dt, stage_cost(x, u, p, q) -> float,
    terminal_penalty_base(x, p, q) -> float (scaled by rho_f downstream), and
    constraint_map(x, u, p, q) -> length-n_c vector with the convention
    "admissible iff every component <= 0".

    The *_jac / *_grad callbacks are optional analytic derivatives; central
    finite differences are used where they are absent.
    """

    n_x: int
    n_u: int
    n_p: int
    n_q: int
    n_c: int
    tau: float
    u_min: Array
    u_max: Array
    x_min: Array
    x_max: Array
    q_min: Array
    q_max: Array
    p_nom: Array
    p_std: Array
    rhs: Callable[[Array, Array, Array], Array]
    constraint_map: Callable[[Array, Array, Array, Array], Array]
    stage_cost: Callable[[Array, Array, Array, Array], float]
    terminal_penalty_base: Callable[[Array, Array, Array], float]
    u_trim: Array | None = None
    rhs_jac: Callable[[Array, Array, Array], tuple[Array, Array]] | None = None
    stage_cost_grad: Callable[[Array, Array, Array, Array], tuple[Array, Array]] | None = None
    terminal_penalty_grad: Callable[[Array, Array, Array], Array] | None = None
    constraint_jac: Callable[[Array, Array, Array, Array], tuple[Array, Array]] | None = None
    name: str = ""
    fd_step: float = 1.0e-6

    def __post_init__(self) -> None:
        for dim, label in ((self.n_x, "n_x"), (self.n_u, "n_u"), (self.n_p, "n_p"), (self.n_q, "n_q")):
            if dim < 1:
                raise ValueError(f"{label} must be >= 1, got {dim}")
        if self.n_c < 0:
            raise ValueError(f"n_c must be >= 0, got {self.n_c}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        self.u_min = _as_vector(self.u_min, self.n_u, "u_min")
        self.u_max = _as_vector(self.u_max, self.n_u, "u_max")
        self.x_min = _as_vector(self.x_min, self.n_x, "x_min")
        self.x_max = _as_vector(self.x_max, self.n_x, "x_max")
        self.q_min = _as_vector(self.q_min, self.n_q, "q_min")
        self.q_max = _as_vector(self.q_max, self.n_q, "q_max")
        self.p_nom = _as_vector(self.p_nom, self.n_p, "p_nom")
        self.p_std = _as_vector(self.p_std, self.n_p, "p_std")
        for lo, hi, label in (
            (self.u_min, self.u_max, "u"),
            (self.x_min, self.x_max, "x"),
            (self.q_min, self.q_max, "q"),
        ):
            if np.any(lo > hi):
                raise ValueError(f"{label} bounds are not ordered: {lo} !<= {hi}")
        if np.any(self.p_std < 0.0):
            raise ValueError("p_std must be nonnegative")
        if self.u_trim is not None:
            self.u_trim = _as_vector(self.u_trim, self.n_u, "u_trim")

    # derivative access with finite-difference fallback ---------------------

    def rhs_jacobians(self, x: Array, u: Array, p: Array) -> tuple[Array, Array]:
        """d rhs/dx and d rhs/du at (x, u, p)."""
        if self.rhs_jac is not None:
            return self.rhs_jac(x, u, p)
        A = _fd_jacobian(lambda v: self.rhs(v, u, p), x, self.n_x, self.fd_step)
        B = _fd_jacobian(lambda v: self.rhs(x, v, p), u, self.n_x, self.fd_step)
        return A, B

    def stage_cost_grads(self, x: Array, u: Array, p: Array, q: Array) -> tuple[Array, Array]:
        if self.stage_cost_grad is not None:
            return self.stage_cost_grad(x, u, p, q)
        gx = _fd_gradient(lambda v: self.stage_cost(v, u, p, q), x, self.fd_step)
        gu = _fd_gradient(lambda v: self.stage_cost(x, v, p, q), u, self.fd_step)
        return gx, gu

    def terminal_grad(self, x: Array, p: Array, q: Array) -> Array:
        if self.terminal_penalty_grad is not None:
            return self.terminal_penalty_grad(x, p, q)
        return _fd_gradient(lambda v: self.terminal_penalty_base(v, p, q), x, self.fd_step)

    def constraint_jacobians(self, x: Array, u: Array, p: Array, q: Array) -> tuple[Array, Array]:
        if self.constraint_jac is not None:
            return self.constraint_jac(x, u, p, q)
        Cx = _fd_jacobian(lambda v: self.constraint_map(v, u, p, q), x, self.n_c, self.fd_step)
        Cu = _fd_jacobian(lambda v: self.constraint_map(x, v, p, q), u, self.n_c, self.fd_step)
        return Cx, Cu


def _fd_jacobian(f: Callable[[Array], Array], v: Array, n_out: int, step: float) -> Array:
    jac = np.empty((n_out, v.size))
    for i in range(v.size):
        h = step * max(1.0, abs(v[i]))
        vp = v.copy()
        vm = v.copy()
        vp[i] += h
        vm[i] -= h
        jac[:, i] = (np.asarray(f(vp), dtype=float) - np.asarray(f(vm), dtype=float)) / (2.0 * h)
    return jac


def _fd_gradient(f: Callable[[Array], float], v: Array, step: float) -> Array:
    grad = np.empty(v.size)
    for i in range(v.size):
        h = step * max(1.0, abs(v[i]))
        vp = v.copy()
        vm = v.copy()
        vp[i] += h
        vm[i] -= h
        grad[i] = (f(vp) - f(vm)) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class Scenario:
    """One certification draw: initial state, model parameters, exogenous vector."""

    x0: Array
    p: Array
    q: Array
    duration: float

    def __post_init__(self) -> None:
        for name in ("x0", "p", "q"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.duration <= 0.0:
            raise ValueError(f"duration must be positive, got {self.duration!r}")


@dataclass(frozen=True)
class ScenarioBatchSet:
    """Scenarios split into nb batches of nsb each, in draw order."""

    batches: tuple[tuple[Scenario, ...], ...]

    def __post_init__(self) -> None:
        if not self.batches:
            raise ValueError("batch set must contain at least one batch")
        sizes = {len(b) for b in self.batches}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError("all batches must be nonempty and the same size")

    @property
    def nb(self) -> int:
        return len(self.batches)

    @property
    def nsb(self) -> int:
        return len(self.batches[0])

    def all_scenarios(self) -> list[Scenario]:
        return [s for batch in self.batches for s in batch]


def generate_cloud(problem: ProblemDefinition, n: int, seed: int, duration: float = 0.5) -> list[Scenario]:
    """Draw n scenarios: x0 and q uniform in their boxes, p Gaussian around
    p_nom clipped to +-3 sigma.  Degenerate bounds (lo == hi) pin components.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x0s = rng.uniform(problem.x_min, problem.x_max, size=(n, problem.n_x))
    qs = rng.uniform(problem.q_min, problem.q_max, size=(n, problem.n_q))
    ps = problem.p_nom + problem.p_std * rng.standard_normal(size=(n, problem.n_p))
    ps = np.clip(ps, problem.p_nom - 3.0 * problem.p_std, problem.p_nom + 3.0 * problem.p_std)
    return [Scenario(x0s[i], ps[i], qs[i], duration) for i in range(n)]


def make_batches(scenarios: list[Scenario], nb: int, nsb: int) -> ScenarioBatchSet:
    """Partition the cloud into nb consecutive batches of nsb scenarios."""
    if nb < 1 or nsb < 1:
        raise ValueError(f"nb and nsb must be >= 1, got nb={nb}, nsb={nsb}")
    if len(scenarios) != nb * nsb:
        raise ValueError(f"need exactly nb*nsb = {nb * nsb} scenarios, got {len(scenarios)}")
    batches = tuple(tuple(scenarios[ell * nsb : (ell + 1) * nsb]) for ell in range(nb))
    return ScenarioBatchSet(batches)


# problem registry ----------------------------------------------------------

_REGISTRY: dict[str, Callable[[], ProblemDefinition]] = {}


def register_problem(name: str, factory: Callable[[], ProblemDefinition]) -> None:
    _REGISTRY[name] = factory


def get_problem(name: str) -> Callable[[], ProblemDefinition]:
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY)) or "(none)"
        raise KeyError(f"unknown problem {name!r}; registered: {known}") from None


def registered_problems() -> list[str]:
    return sorted(_REGISTRY)
