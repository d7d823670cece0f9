"""Problem instances for one-dimensional controlled diffusions.

A model is the data ``(b, sigma, c, U)`` of the controlled SDE

    dX_t = b(X_t, U_t) dt + sigma(X_t) dW_t

with running cost ``c(x, u) >= 0``.  All callables are vectorised: they
receive numpy arrays (or scalars) and broadcast ``x`` against ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonDegeneracyViolation, PolicyDomainMismatch, RatioUnbounded

ArrayFn2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
ArrayFn1 = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ControlSet:
    """Finite, strictly ascending discretisation of the compact action set."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("control set must be non-empty")
        if not all(np.isfinite(vals)):
            raise ValueError("control values must be finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("control values must be strictly ascending")
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "ControlSet":
        return cls(tuple(np.linspace(lo, hi, n)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __contains__(self, u):
        return any(u == v for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _const_fn(value: float) -> ArrayFn1:
    def fn(x):
        return np.full(np.shape(x), float(value))

    return fn


@dataclass(frozen=True)
class DiffusionModel:
    name: str
    drift: ArrayFn2
    dispersion: ArrayFn1
    cost: ArrayFn2
    control_set: ControlSet
    description: str = field(default="", compare=False)

    def a(self, x) -> np.ndarray:
        """Diffusion coefficient ``sigma(x)**2 / 2``."""
        s = np.asarray(self.dispersion(np.asarray(x, dtype=float)), dtype=float)
        return 0.5 * s * s

    def drift_table(self, x: np.ndarray) -> np.ndarray:
        """``b(x_i, u_j)`` with shape ``(len(U), len(x))``."""
        x = np.asarray(x, dtype=float)
        u = self.control_set.as_array()[:, None]
        return np.broadcast_to(self.drift(x[None, :], u), (u.shape[0], x.size)).astype(float)

    def cost_table(self, x: np.ndarray) -> np.ndarray:
        """``c(x_i, u_j)`` with shape ``(len(U), len(x))``."""
        x = np.asarray(x, dtype=float)
        u = self.control_set.as_array()[:, None]
        return np.broadcast_to(self.cost(x[None, :], u), (u.shape[0], x.size)).astype(float)


def _example_drift(x, u):
    return np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float)


def _example_cost(x, u):
    x = np.asarray(x, dtype=float)
    return (1.0 - np.exp(-np.abs(x))) + 0.0 * np.asarray(u, dtype=float)


def builtin_example(controls: Sequence[float] = (-1.0, 0.0, 1.0)) -> DiffusionModel:
    """``dX = U dt + dW`` on ``U in [-1, 1]`` with cost ``1 - exp(-|x|)``."""
    return DiffusionModel(
        name="example",
        drift=_example_drift,
        dispersion=_const_fn(1.0),
        cost=_example_cost,
        control_set=ControlSet(tuple(controls)),
        description="b(x,u)=u, sigma=1, c(x)=1-exp(-|x|)",
    )


def ou_model(controls: Sequence[float] = (-1.0, 0.0, 1.0)) -> DiffusionModel:
    """Uncontrolled Ornstein-Uhlenbeck drift ``b = -x``; cost ``x^2/(1+x^2)``."""

    def drift(x, u):
        return -np.asarray(x, dtype=float) + 0.0 * np.asarray(u, dtype=float)

    def cost(x, u):
        x = np.asarray(x, dtype=float)
        return x * x / (1.0 + x * x) + 0.0 * np.asarray(u, dtype=float)

    return DiffusionModel(
        name="ou",
        drift=drift,
        dispersion=_const_fn(1.0),
        cost=cost,
        control_set=ControlSet(tuple(controls)),
        description="b(x,u)=-x, sigma=1, c(x)=x^2/(1+x^2)",
    )


def constant_cost_model(kappa: float = 0.5, controls: Sequence[float] = (-1.0, 0.0, 1.0)) -> DiffusionModel:
    """Constant running cost ``kappa`` with the confining drift ``u - x``."""
    kappa = float(kappa)

    def drift(x, u):
        return np.asarray(u, dtype=float) - np.asarray(x, dtype=float)

    def cost(x, u):
        return np.full(np.broadcast(np.asarray(x), np.asarray(u)).shape, kappa)

    return DiffusionModel(
        name="constant",
        drift=drift,
        dispersion=_const_fn(1.0),
        cost=cost,
        control_set=ControlSet(tuple(controls)),
        description=f"b(x,u)=u-x, sigma=1, c={kappa!r}",
    )


BUILTIN_MODELS = {
    "example": builtin_example,
    "ou": ou_model,
    "constant": constant_cost_model,
}


@dataclass(frozen=True)
class AssumptionReport:
    min_diffusion: float
    lipschitz_drift: dict[float, float]
    lipschitz_cost: dict[float, float]
    growth_const: float
    m_star_estimate: float
    near_monotone_margin: float


def _lipschitz_by_radius(x: np.ndarray, table: np.ndarray, radii) -> dict[float, float]:
    slopes = np.abs(np.diff(table, axis=1)) / np.diff(x)[None, :]
    mid_abs = np.maximum(np.abs(x[:-1]), np.abs(x[1:]))
    out = {}
    for R in radii:
        mask = mid_abs <= R + 1e-12
        out[float(R)] = float(slopes[:, mask].max()) if mask.any() else 0.0
    return out


def check_assumptions(model: DiffusionModel, grid, rho_candidate: float, radii=None) -> AssumptionReport:
    """Sample the standing assumptions on the grid.

    Lipschitz and growth constants are finite-difference estimates and are
    diagnostics only; the single hard failure is a non-positive diffusion
    coefficient.
    """
    x = grid.nodes
    a = model.a(x)
    min_a = float(np.min(a))
    if not min_a > 0:
        raise NonDegeneracyViolation(f"min a(x) = {min_a!r} <= 0 on the grid")
    if radii is None:
        radii = sorted({r for r in (1.0, 2.0, 4.0) if r < grid.L} | {float(grid.L)})
    b = model.drift_table(x)
    c = model.cost_table(x)
    sig = np.asarray(model.dispersion(x), dtype=float)
    growth = float(np.max((b * b + (sig * sig)[None, :]) / (1.0 + x * x)[None, :]))
    m_star = float(min(c[:, 0].min(), c[:, -1].min()))
    return AssumptionReport(
        min_diffusion=min_a,
        lipschitz_drift=_lipschitz_by_radius(x, b, radii),
        lipschitz_cost=_lipschitz_by_radius(x, c, radii),
        growth_const=growth,
        m_star_estimate=m_star,
        near_monotone_margin=m_star - float(rho_candidate),
    )


def freeze_outside(model: DiffusionModel, policy, R: float, grid=None) -> DiffusionModel:
    """Replace the data by ``b(x, v(x))``, ``c(x, v(x))`` on ``|x| >= R``.

    ``policy`` is a grid table; it is extended to the real line by nearest
    node (the edge values are used beyond the table).  When ``grid`` is
    given it must lie inside the policy table.
    """
    R = float(R)
    if R < 0:
        raise ValueError("R must be nonnegative")
    pgrid = policy.grid
    if grid is not None:
        if grid.L > pgrid.L * (1 + 1e-12) and R < grid.L:
            raise PolicyDomainMismatch(
                f"policy table covers |x| <= {pgrid.L}, frozen region reaches {grid.L}"
            )
    vhat = policy.at

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < R
        return np.where(inside, model.drift(x, u), model.drift(x, vhat(x)))

    def cost(x, u):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < R
        return np.where(inside, model.cost(x, u), model.cost(x, vhat(x)))

    return DiffusionModel(
        name=f"{model.name}|frozen(R={R:g})",
        drift=drift,
        dispersion=model.dispersion,
        cost=cost,
        control_set=model.control_set,
        description=f"{model.description}; controls frozen for |x| >= {R:g}",
    )


def cost_ratio_sup(model: DiffusionModel, x: np.ndarray) -> float:
    """Sampled ``sup c(x,u')/c(x,u)``; ``0/0`` counts as 1."""
    c = model.cost_table(x)
    hi = c.max(axis=0)
    lo = c.min(axis=0)
    both_zero = hi == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(both_zero, 1.0, hi / lo)
    return float(np.max(ratio))


def bounded_cost_transform(model: DiffusionModel, rho_candidate: float, grid, ratio_cap: float = 1e6) -> DiffusionModel:
    """Time-change the model so its running cost becomes bounded.

    With ``g = 1 + min_u c`` the new data are ``sigma/g``, ``b/g`` and
    ``rho/min g + (1 + c - rho)/g``.  ``min g`` is taken over the grid and
    ``rho_candidate`` stands in for the unknown optimal value.
    """
    x = grid.nodes
    ratio = cost_ratio_sup(model, x)
    if not ratio <= ratio_cap:
        raise RatioUnbounded(f"sampled cost ratio {ratio!r} exceeds cap {ratio_cap!r}")
    rho = float(rho_candidate)
    controls = model.control_set.as_array()

    def g(xx):
        xx = np.asarray(xx, dtype=float)
        c = model.cost(xx[..., None], controls)
        return 1.0 + np.min(c, axis=-1)

    g_min = float(np.min(g(x)))

    def dispersion(xx):
        return np.asarray(model.dispersion(xx), dtype=float) / g(xx)

    def drift(xx, u):
        return np.asarray(model.drift(xx, u), dtype=float) / g(xx)

    def cost(xx, u):
        return rho / g_min + (1.0 + np.asarray(model.cost(xx, u), dtype=float) - rho) / g(xx)

    return DiffusionModel(
        name=f"{model.name}|bounded(rho={rho:g})",
        drift=drift,
        dispersion=dispersion,
        cost=cost,
        control_set=model.control_set,
        description=f"{model.description}; bounded-cost time change",
    )
