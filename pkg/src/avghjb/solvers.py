"""Policy iteration, restart step, discounted problem and truncation sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discretize import BandedOperator, Grid1D, assemble_control_generators, assemble_policy_generator, solve_banded
from .errors import NoConvergence, NonMonotone, TransienceDetected, UnstableInitialPolicy
from .model import check_assumptions, freeze_outside
from .valuedet import Policy, ValueFunction, evaluate_policy, policy_cost

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolutionPair:
    V: ValueFunction
    rho: float


@dataclass
class PiaStep:
    policy: Policy
    rho: float
    V: ValueFunction


@dataclass
class PiaTrace:
    steps: list[PiaStep] = field(default_factory=list)
    termination: str = ""
    improvements: int = 0

    @property
    def iterations(self) -> int:
        """Improvement steps performed, including one that confirms a fixed point."""
        return self.improvements

    @property
    def rhos(self) -> list[float]:
        return [s.rho for s in self.steps]

    def is_monotone(self, slack: float = 1e-10) -> bool:
        r = self.rhos
        return all(b <= a + slack for a, b in zip(r, r[1:]))


def _controls_of(model, controls):
    return tuple(model.control_set if controls is None else controls)


def hamiltonian_table(model, grid: Grid1D, controls, V: np.ndarray, generators=None) -> np.ndarray:
    """``(A_u V)_i + c(x_i, u)`` for each control, shape ``(len(U), N)``."""
    controls = _controls_of(model, controls)
    if generators is None:
        generators = assemble_control_generators(model, grid, controls)
    x = grid.nodes
    rows = []
    for u, A_u in zip(controls, generators):
        c_u = np.broadcast_to(np.asarray(model.cost(x, np.full_like(x, float(u))), dtype=float), x.shape)
        rows.append(A_u.matvec(V) + c_u)
    return np.vstack(rows)


def improve(model, grid: Grid1D, controls, V, tie: str = "smallest", generators=None,
            current: Policy | None = None) -> Policy:
    """Nodewise argmin of ``(A_u V)_i + c(x_i, u)``.

    Exact ties go to the smallest control (``tie="largest"`` flips this).
    With ``current`` given, a node keeps its control unless another one is
    better by more than the round-off of the row; this stops policy
    iteration from cycling between controls that tie exactly.
    """
    controls = _controls_of(model, controls)
    values = np.asarray(getattr(V, "values", V), dtype=float)
    if generators is None:
        generators = assemble_control_generators(model, grid, controls)
    H = hamiltonian_table(model, grid, controls, values, generators)
    if tie == "smallest":
        idx = np.argmin(H, axis=0)
    elif tie == "largest":
        idx = H.shape[0] - 1 - np.argmin(H[::-1], axis=0)
    else:
        raise ValueError(f"unknown tie rule {tie!r}")
    if current is not None:
        ctrl = np.asarray(controls, dtype=float)
        cur = np.searchsorted(ctrl, current.values)
        valid = (cur < ctrl.size) & (ctrl[np.minimum(cur, ctrl.size - 1)] == current.values)
        cur = np.minimum(cur, ctrl.size - 1)
        cols = np.arange(grid.N)
        rate = max(float(np.max(np.abs(G.diag))) for G in generators)
        slack = 64 * np.finfo(float).eps * (rate * np.abs(values) + np.abs(H[cur, cols]) + 1.0)
        keep = valid & (H[cur, cols] - H[idx, cols] <= slack)
        idx = np.where(keep, cur, idx)
    return Policy(grid, np.asarray(controls, dtype=float)[idx])


def _value_determination(model, grid, policy):
    _, _, beta, V = evaluate_policy(model, grid, policy)
    return beta, V


def run_pia(model, grid: Grid1D, controls, v0: Policy, tol: float = 1e-9, max_iter: int = 50,
            m_star: float | None = None, monotone_slack: float = 1e-8):
    """Average-cost policy iteration from a stable initial policy.

    Stops when the policy is a fixed point of the improvement step or
    successive costs differ by at most ``tol``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    controls = _controls_of(model, controls)
    gens = assemble_control_generators(model, grid, controls)
    try:
        rho, V = _value_determination(model, grid, v0)
    except TransienceDetected as exc:
        raise UnstableInitialPolicy(f"initial policy is not stable: {exc}") from exc
    if m_star is None:
        m_star = check_assumptions(model, grid, rho).m_star_estimate
    # equality is the degenerate constant-cost case, where every policy is optimal
    if not rho <= m_star:
        raise UnstableInitialPolicy(f"beta(v0)={rho:.6g} exceeds the M* estimate {m_star:.6g}")
    trace = PiaTrace([PiaStep(v0, rho, V)])
    policy = v0
    for k in range(1, max_iter + 1):
        new_policy = improve(model, grid, controls, V, generators=gens, current=policy)
        trace.improvements = k
        if np.array_equal(new_policy.values, policy.values):
            trace.termination = "policy fixed point"
            break
        new_rho, new_V = _value_determination(model, grid, new_policy)
        logger.debug("PIA iteration %d: rho=%.12g", k, new_rho)
        if new_rho > rho + monotone_slack:
            raise NonMonotone(f"rho increased from {rho!r} to {new_rho!r} at iteration {k}")
        trace.steps.append(PiaStep(new_policy, new_rho, new_V))
        delta = abs(new_rho - rho)
        policy, rho, V = new_policy, new_rho, new_V
        if delta <= tol:
            trace.termination = "rho stationary"
            break
    else:
        trace.termination = "max_iter"
    return SolutionPair(V, rho), trace


def restart(model, grid: Grid1D, controls, pair: SolutionPair) -> PiaTrace:
    """One improvement from ``pair.V`` followed by value determination."""
    controls = _controls_of(model, controls)
    V = np.asarray(getattr(pair.V, "values", pair.V), dtype=float)
    policy = improve(model, grid, controls, V)
    rho, newV = _value_determination(model, grid, policy)
    trace = PiaTrace([PiaStep(policy, rho, newV)], "restart", 1)
    return trace


@dataclass(frozen=True)
class DiscountedSolution:
    alpha: float
    V: np.ndarray
    policy: Policy
    iterations: int

    @property
    def F(self) -> float:
        return self.alpha * float(self.V[self.policy.grid.origin_index])


def solve_discounted(model, grid: Grid1D, controls, alpha: float, max_iter: int = 200,
                     v0: Policy | None = None) -> DiscountedSolution:
    """Policy iteration for ``min_u [A_u V + c_u] = alpha V`` on the grid."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    controls = _controls_of(model, controls)
    gens = assemble_control_generators(model, grid, controls)
    policy = v0 if v0 is not None else improve(model, grid, controls, np.zeros(grid.N), generators=gens)
    for it in range(1, max_iter + 1):
        A = assemble_policy_generator(model, grid, policy)
        V = solve_banded(A, alpha, policy_cost(model, policy))
        new_policy = improve(model, grid, controls, V, generators=gens, current=policy)
        if np.array_equal(new_policy.values, policy.values):
            return DiscountedSolution(float(alpha), V, policy, it)
        policy = new_policy
    raise NoConvergence(f"discounted policy iteration did not settle in {max_iter} iterations")


def discounted_residual(model, grid, controls, sol: DiscountedSolution) -> np.ndarray:
    H = hamiltonian_table(model, grid, controls, sol.V)
    return H.min(axis=0) - sol.alpha * sol.V


@dataclass(frozen=True)
class DiscountSweep:
    points: list[tuple[float, float]]
    extrapolated: float


def vanishing_discount_sweep(model, grid: Grid1D, controls, alphas) -> DiscountSweep:
    """``F(alpha) = alpha V_alpha(0)`` for descending ``alphas``.

    The extrapolation to ``alpha = 0`` is the line through the two smallest
    alphas; it is reported next to the raw values, never in their place.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly descending")
    pts = []
    v0 = None
    for a in alphas:
        sol = solve_discounted(model, grid, controls, a, v0=v0)
        v0 = sol.policy
        pts.append((a, sol.F))
    if len(pts) >= 2:
        (a1, f1), (a2, f2) = pts[-2], pts[-1]
        extrap = f2 - a2 * (f1 - f2) / (a1 - a2)
    else:
        extrap = pts[-1][1]
    return DiscountSweep(pts, extrap)


def truncation_sweep(model, grid: Grid1D, controls, vhat: Policy, rho_hat: float, radii, tol: float = 1e-9,
                     max_iter: int = 50) -> list[tuple[float, float]]:
    """``rho_R`` of the models frozen to ``vhat`` outside radius ``R``.

    Each frozen model is solved by policy iteration started from ``vhat``
    itself.  For a compatible ``(V, rho_hat)`` every ``rho_R`` equals
    ``rho_hat``; a spurious pair shows ``rho_R < rho_hat``.
    """
    out = []
    for R in radii:
        frozen = freeze_outside(model, vhat, R, grid)
        pair, _ = run_pia(frozen, grid, controls, vhat, tol=tol, max_iter=max_iter)
        out.append((float(R), pair.rho))
    return out


def frozen_discounted_origin(model, grid, controls, vhat: Policy, radii, alpha: float) -> list[tuple[float, float]]:
    """``F_R(alpha)`` at the origin for each radius (truncation family)."""
    out = []
    for R in radii:
        sol = solve_discounted(freeze_outside(model, vhat, R, grid), grid, controls, alpha)
        out.append((float(R), sol.F))
    return out
