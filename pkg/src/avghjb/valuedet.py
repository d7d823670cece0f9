"""Value determination for a fixed Markov policy on the grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import BandedOperator, Grid1D, assemble_policy_generator, solve_tridiagonal
from .errors import InconsistentSystem, InvalidRadius, TransienceDetected


@dataclass(frozen=True)
class Policy:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise ValueError(f"policy needs {self.grid.N} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid1D, u: float) -> "Policy":
        return cls(grid, np.full(grid.N, float(u)))

    @classmethod
    def from_function(cls, grid: Grid1D, fn) -> "Policy":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    def at(self, x) -> np.ndarray:
        """Nearest-node (piecewise constant) extension to the real line."""
        return self.values[self.grid.nearest_index(x)]

    def __call__(self, x):
        return self.at(x)

    def check_members(self, control_set) -> bool:
        allowed = control_set.as_array()
        return bool(np.all(np.isin(self.values, allowed)))


@dataclass(frozen=True)
class InvariantDensity:
    grid: Grid1D
    values: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        return self.values * self.grid.h


@dataclass(frozen=True)
class ValueFunction:
    grid: Grid1D
    values: np.ndarray
    normalized: bool = True

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.nodes, self.values)


def _tail_masses(psi: np.ndarray, h: float, fraction: float = 0.05) -> tuple[float, float]:
    k = max(1, int(math.ceil(fraction * psi.size)))
    return float(psi[:k].sum() * h), float(psi[-k:].sum() * h)


def _pin_scale(A: BandedOperator) -> float:
    # pinned rows must match the scale of the others, or pivoting mixes them badly
    return float(np.max(np.abs(A.diag))) or 1.0


def invariant_density(A_v: BandedOperator, grid: Grid1D | None = None, transience_threshold: float = 0.5) -> InvariantDensity:
    """Stationary density of the chain generated by ``A_v``.

    Solves ``A_v^T psi = 0`` with the origin equation replaced by
    ``psi_origin = 1`` and then normalises ``sum(psi) h = 1``.  The dropped
    equation is implied because the columns of ``A_v^T`` sum to zero.
    """
    grid = grid if grid is not None else A_v.grid
    if grid is None:
        raise ValueError("grid required")
    At = A_v.transpose()
    k = grid.origin_index
    sub, diag, sup = -At.sub, -At.diag, -At.sup
    pin = _pin_scale(A_v)
    sub[k], diag[k], sup[k] = 0.0, pin, 0.0
    rhs = np.zeros(grid.N)
    rhs[k] = pin
    psi = solve_tridiagonal(sub, diag, sup, rhs)
    psi = np.maximum(psi, 0.0)
    psi /= math.fsum(psi) * grid.h
    left, right = _tail_masses(psi, grid.h)
    if left > transience_threshold or right > transience_threshold:
        raise TransienceDetected(
            f"outer-5% mass left={left:.3f} right={right:.3f}: chain is held only by the wall",
            left_mass=left,
            right_mass=right,
        )
    return InvariantDensity(grid, psi)


def policy_cost(model, policy: Policy) -> np.ndarray:
    x = policy.grid.nodes
    return np.broadcast_to(np.asarray(model.cost(x, policy.values), dtype=float), x.shape).copy()


def average_cost(model, policy: Policy, psi: InvariantDensity) -> float:
    """``beta(v) = sum_i c(x_i, v_i) psi_i h``."""
    c = policy_cost(model, policy)
    return math.fsum(c * psi.values) * psi.grid.h


def poisson_value(A_v: BandedOperator, c_v: np.ndarray, beta: float, grid: Grid1D | None = None,
                  psi: InvariantDensity | None = None, consistency_tol: float = 1e-8) -> ValueFunction:
    """Solve ``A_v V = beta - c_v`` with ``V(0) = 0``.

    The system is singular; it is consistent exactly when ``beta`` is the
    stationary average of ``c_v``.  The origin row is replaced by the pin.
    """
    grid = grid if grid is not None else A_v.grid
    c_v = np.asarray(c_v, dtype=float)
    if psi is None:
        psi = invariant_density(A_v, grid)
    mismatch = float(beta) - math.fsum(c_v * psi.values) * grid.h
    if abs(mismatch) > consistency_tol:
        raise InconsistentSystem(f"beta differs from the stationary mean of the cost by {mismatch:.3e}")
    k = grid.origin_index
    sub, diag, sup = -A_v.sub.copy(), -A_v.diag.copy(), -A_v.sup.copy()
    rhs = c_v - float(beta)
    sub[k], diag[k], sup[k] = 0.0, _pin_scale(A_v), 0.0
    rhs[k] = 0.0
    V = solve_tridiagonal(sub, diag, sup, rhs)
    V[k] = 0.0
    return ValueFunction(grid, V, normalized=True)


@dataclass(frozen=True)
class ExitFunctional:
    grid: Grid1D
    values: np.ndarray  # zero on the snapped ball
    r_snapped: float
    exterior: np.ndarray  # boolean mask of |x| > r_snapped

    def at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.nodes, self.values)


def exit_functional(model, policy: Policy, r: float, rho: float, A_v: BandedOperator | None = None) -> ExitFunctional:
    """Grid analogue of ``E_x int_0^{tau_r} (c - rho) dt`` on ``|x| >= r``.

    ``tau_r`` is the hitting time of the closed ball of radius ``r`` (snapped
    to the nearest node); the outer walls reflect.
    """
    grid = policy.grid
    if not (0 < r < grid.L):
        raise InvalidRadius(f"need 0 < r < L={grid.L}, got {r!r}")
    if A_v is None:
        A_v = assemble_policy_generator(model, grid, policy)
    x = grid.nodes
    k = int(round(r / grid.h))
    if k < 1:
        raise InvalidRadius(f"r={r!r} is below the grid spacing")
    r_s = k * grid.h
    ball = np.abs(np.arange(grid.N) - grid.origin_index) <= k
    c_v = policy_cost(model, policy)
    sub, diag, sup = -A_v.sub.copy(), -A_v.diag.copy(), -A_v.sup.copy()
    rhs = c_v - float(rho)
    sub[ball], diag[ball], sup[ball], rhs[ball] = 0.0, _pin_scale(A_v), 0.0, 0.0
    psi_r = solve_tridiagonal(sub, diag, sup, rhs)
    psi_r[ball] = 0.0
    return ExitFunctional(grid, psi_r, r_s, ~ball)


def evaluate_policy(model, grid: Grid1D, policy: Policy):
    """Generator, density, average cost and normalised Poisson solution."""
    A = assemble_policy_generator(model, grid, policy)
    psi = invariant_density(A, grid)
    beta = average_cost(model, policy, psi)
    V = poisson_value(A, policy_cost(model, policy), beta, grid, psi=psi)
    return A, psi, beta, V
