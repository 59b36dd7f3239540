"""Fixed-step RK4 propagation.

Two grids coexist: the plant always advances at the sampling period tau
(the fine grid), while the controller predicts at the updating period
tau_u = kappa * tau, internally subdivided into n_steps RK4 substeps chosen
from the prediction-precision fraction mu_d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Rhs = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class PropagationError(RuntimeError):
    """Raised when a propagated state stops being finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def n_steps_for(mu_d: float, kappa: int) -> int:
    """Number of prediction substeps per updating period: ceil(1 + mu_d*(kappa-1)).

    mu_d = 0 gives a single coarse step of length tau_u, mu_d = 1 recovers the
    fine resolution with kappa steps of length tau.
    """
    if not 0.0 <= mu_d <= 1.0:
        raise ValueError(f"mu_d must lie in [0, 1], got {mu_d!r}")
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa!r}")
    n = math.ceil(1.0 + mu_d * (kappa - 1))
    return int(min(max(n, 1), kappa))


@dataclass(frozen=True)
class PredictionGrid:
    """Updating period and its subdivision into prediction substeps."""

    tau_u: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.tau_u <= 0.0:
            raise ValueError(f"tau_u must be positive, got {self.tau_u!r}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps!r}")

    @property
    def tau_p(self) -> float:
        """Length of one prediction substep."""
        return self.tau_u / self.n_steps


def rk4_unchecked(rhs: Rhs, x: np.ndarray, u: np.ndarray, p: np.ndarray, h: float) -> np.ndarray:
    """RK4 step without the finiteness check; hot loops verify per period."""
    half = 0.5 * h
    k1 = rhs(x, u, p)
    k2 = rhs(x + half * k1, u, p)
    k3 = rhs(x + half * k2, u, p)
    k4 = rhs(x + h * k3, u, p)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(rhs: Rhs, x: np.ndarray, u: np.ndarray, p: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step under a constant input."""
    x_next = rk4_unchecked(rhs, x, u, p, h)
    if not np.all(np.isfinite(x_next)):
        raise PropagationError("non-finite state after RK4 step")
    return x_next


def predict_step(rhs: Rhs, x: np.ndarray, u: np.ndarray, p: np.ndarray, grid: PredictionGrid) -> np.ndarray:
    """Advance one updating period on the prediction grid (input held constant)."""
    h = grid.tau_p
    for i in range(grid.n_steps):
        try:
            x = rk4_step(rhs, x, u, p, h)
        except PropagationError as err:
            raise PropagationError(f"prediction diverged at substep {i}", step=i) from None
    return x


def simulate_fine(
    rhs: Rhs,
    x0: np.ndarray,
    inputs: np.ndarray,
    p: np.ndarray,
    tau: float,
    kappa: int,
) -> np.ndarray:
    """Propagate the plant at the sampling period tau under zero-order-hold inputs.

    inputs has one row per updating period; each row is held for kappa fine
    steps.  Returns the (len(inputs)*kappa + 1, n_x) array of fine-grid states
    including x0.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa!r}")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((inputs.shape[0] * kappa + 1, x.size))
    states[0] = x
    idx = 0
    for u in inputs:
        for _ in range(kappa):
            try:
                x = rk4_step(rhs, x, u, p, tau)
            except PropagationError:
                raise PropagationError(f"plant propagation diverged at fine step {idx}", step=idx) from None
            idx += 1
            states[idx] = x
    return states
