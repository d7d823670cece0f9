"""Deciding whether a candidate HJB pair ``(V, rho)`` is the optimal one.

A pair is compatible when it solves the HJB and the stationary average
cost of a minimising selector equals ``rho``.  The checks here are
grid versions of that test plus two diagnostics (semigroup drift of
``E[V(X_t)]`` and a Foster-Lyapunov margin).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .discretize import Grid1D, TridiagonalLU, assemble_control_generators, assemble_policy_generator
from .errors import RhoOutOfRange, TransienceDetected
from .model import check_assumptions
from .solvers import SolutionPair, hamiltonian_table, improve
from .valuedet import Policy, average_cost, invariant_density


class Verdict(str, enum.Enum):
    COMPATIBLE = "Compatible"
    SPURIOUS = "Spurious"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class HJBResidual:
    residual: np.ndarray  # raw, NaN at the wall rows and outside the window
    scaled: np.ndarray
    sup: float  # sup of the scaled residual
    raw_sup: float


@dataclass(frozen=True)
class CompatibilityReport:
    selector: Policy
    beta: float
    rho: float
    gap: float
    verdict: Verdict
    hjb_residual_sup: float
    hjb_residual_raw_sup: float
    lyapunov_epsilon: float | None
    semigroup_slope: float | None
    bounded_below_min: float
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "rho": self.rho,
            "beta": self.beta,
            "gap": self.gap,
            "hjb_residual_sup": self.hjb_residual_sup,
            "hjb_residual_raw_sup": self.hjb_residual_raw_sup,
            "lyapunov_epsilon": self.lyapunov_epsilon,
            "semigroup_slope": self.semigroup_slope,
            "bounded_below_min": self.bounded_below_min,
            "note": self.note,
        }


def _values(V) -> np.ndarray:
    return np.asarray(getattr(V, "values", V), dtype=float)


def hjb_residual(model, grid: Grid1D, controls, pair: SolutionPair, window: float | None = None) -> HJBResidual:
    """``min_u [(A_u V)_i + c(x_i,u)] - rho`` at interior nodes.

    The scaled residual divides by ``1 + |a V''| + max_u |b V'|`` (grid
    differences), so the first-order scheme error of a rapidly growing
    ``V`` is measured relative to the size of the terms that produce it.
    """
    V = _values(pair.V)
    controls = tuple(model.control_set if controls is None else controls)
    H = hamiltonian_table(model, grid, controls, V)
    res = H.min(axis=0) - float(pair.rho)
    x = grid.nodes
    h = grid.h
    d2 = np.zeros_like(V)
    d1 = np.zeros_like(V)
    d2[1:-1] = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / (h * h)
    d1[1:-1] = (V[2:] - V[:-2]) / (2.0 * h)
    bmax = np.abs(model.drift_table(x)).max(axis=0)
    scale = 1.0 + np.abs(model.a(x) * d2) + bmax * np.abs(d1)
    mask = np.zeros(grid.N, dtype=bool)
    mask[1:-1] = True
    if window is not None:
        mask &= np.abs(x) <= window + 1e-12
    res = np.where(mask, res, np.nan)
    scaled = res / scale
    return HJBResidual(res, scaled, float(np.nanmax(np.abs(scaled))), float(np.nanmax(np.abs(res))))


def _interior_generator_image(A, V: np.ndarray) -> np.ndarray:
    """``A V`` with the wall rows replaced by their inward neighbours.

    The wall rows carry the reflection (a local-time term that does not
    exist on the real line); dropping it keeps the drift of ``E[V(X_t)]``
    equal to that of the untruncated diffusion.
    """
    g = A.matvec(V)
    g[0] = g[1]
    g[-1] = g[-2]
    return g


@dataclass(frozen=True)
class SemigroupResult:
    times: np.ndarray
    m: np.ndarray
    slope: float


def semigroup_drift_test(model, grid: Grid1D, policy: Policy, V, horizon: float = 50.0, steps: int = 1000,
                         initial: np.ndarray | None = None) -> SemigroupResult:
    """Evolve ``m(t) = E[V(X_t)]`` and fit its slope on ``[T/2, T]``.

    The law of ``X_t`` is advanced by implicit Euler with ``A_v^T``;
    ``dm/dt = p(t) . (A_v V)``.  A compatible pair gives slope ~ 0, a
    spurious one ``rho - beta``.
    """
    Vv = _values(V)
    A = assemble_policy_generator(model, grid, policy)
    if initial is None:
        p = np.zeros(grid.N)
        p[grid.origin_index] = 1.0
    else:
        p = np.asarray(initial, dtype=float).copy()
        p /= p.sum()
    g = _interior_generator_image(A, Vv)
    dt = horizon / steps
    At = A.transpose()
    lu = TridiagonalLU(-dt * At.sub, 1.0 - dt * At.diag, -dt * At.sup)
    times = np.linspace(0.0, horizon, steps + 1)
    m = np.empty(steps + 1)
    m[0] = float(p @ Vv)
    for n in range(steps):
        p = lu.solve(p)
        m[n + 1] = m[n] + dt * float(p @ g)
    sel = times >= 0.5 * horizon
    if sel.sum() < 2:
        sel[-2:] = True
    t = times[sel] - times[sel].mean()
    slope = float(t @ (m[sel] - m[sel].mean()) / (t @ t))
    return SemigroupResult(times, m, slope)


@dataclass(frozen=True)
class LyapunovResult:
    epsilon: float
    success: bool
    worst_x: float


def foster_lyapunov_check(model, grid: Grid1D, policy: Policy, lyap, r_D: float) -> LyapunovResult:
    """``epsilon = -max_{|x| > r_D} (A_v Lyap)_i`` over interior nodes."""
    A = assemble_policy_generator(model, grid, policy)
    LV = A.matvec(_values(lyap))
    x = grid.nodes
    mask = np.abs(x) > r_D
    mask[0] = mask[-1] = False
    if not mask.any():
        raise ValueError("no interior nodes outside the given domain")
    i = np.flatnonzero(mask)[np.argmax(LV[mask])]
    eps = -float(LV[i])
    return LyapunovResult(eps, eps > 0, float(x[i]))


def check_compatible(model, grid: Grid1D, controls, pair: SolutionPair, tol: float = 1e-2,
                     residual_tol: float = 5e-3, window: float | None = None, lyapunov_radius: float = 1.0,
                     semigroup: bool = True, horizon: float = 50.0, steps: int = 1000,
                     tie: str = "smallest") -> CompatibilityReport:
    """Classify ``pair`` as Compatible, Spurious or Undecided."""
    rho = float(pair.rho)
    m_star = check_assumptions(model, grid, rho).m_star_estimate
    # rho == M* is admitted for the constant-cost case (c identically M*)
    if not (0.0 <= rho <= m_star):
        raise RhoOutOfRange(f"rho={rho!r} must lie in [0, M*={m_star:.6g}]")
    controls = tuple(model.control_set if controls is None else controls)
    V = _values(pair.V)
    selector = improve(model, grid, controls, V, tie=tie)
    res = hjb_residual(model, grid, controls, pair, window)
    note = ""
    lyap = slope = None
    try:
        psi = invariant_density(assemble_policy_generator(model, grid, selector), grid)
        beta = average_cost(model, selector, psi)
    except TransienceDetected as exc:
        beta = math.nan
        note = f"selector not stable: {exc}"
    gap = abs(beta - rho) if math.isfinite(beta) else math.nan
    if math.isfinite(beta):
        lyap = foster_lyapunov_check(model, grid, selector, V, lyapunov_radius).epsilon
        if semigroup:
            slope = semigroup_drift_test(model, grid, selector, V, horizon, steps).slope
    if res.sup <= residual_tol and math.isfinite(gap):
        verdict = Verdict.COMPATIBLE if gap <= tol else Verdict.SPURIOUS
    else:
        verdict = Verdict.UNDECIDED
        if not note:
            note = f"HJB residual {res.sup:.3g} exceeds {residual_tol:.3g}"
    return CompatibilityReport(
        selector=selector,
        beta=beta,
        rho=rho,
        gap=gap,
        verdict=verdict,
        hjb_residual_sup=res.sup,
        hjb_residual_raw_sup=res.raw_sup,
        lyapunov_epsilon=lyap,
        semigroup_slope=slope,
        bounded_below_min=float(np.min(V)),
        note=note,
    )
