"""Closed-form and quadrature oracles for the bang-bang example.

Model: ``dX = U dt + dW``, ``U in [-1, 1]``, ``c(x) = 1 - exp(-|x|)``.
For ``rho in [1/3, 1)`` the family

    xi_rho  = log(3/2) + log(1 - rho)
    w_rho   = -sgn(x - xi_rho)
    psi_rho = exp(-2|x - xi_rho|)
    V_rho'  = 2 exp(2|x - xi_rho|) J(x),  J(x) = int_{-inf}^x psi_rho(z) (rho - c(z)) dz

solves ``V''/2 - |V'| + c = rho``.  ``V_rho'`` tends to ``rho - 1`` at
``-inf``, so ``V_rho`` is anchored at the origin: ``V_rho(x) = int_0^x V_rho'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, QuadratureFailure

QUAD_TOL = 1e-10
RHO_MIN = 1.0 / 3.0


def _check_rho(rho: float) -> float:
    rho = float(rho)
    # 1/3 typed as a decimal (0.3333333333) is accepted
    if not (RHO_MIN - 1e-9 <= rho < 1.0):
        raise DomainError(f"rho must lie in [1/3, 1), got {rho!r}")
    return rho


def xi(rho: float) -> float:
    rho = _check_rho(rho)
    return math.log(1.5 * (1.0 - rho))


def w_rho(rho: float, x) -> np.ndarray:
    """Minimising selector ``-sgn(x - xi_rho)`` (0 exactly at the switch)."""
    return -np.sign(np.asarray(x, dtype=float) - xi(rho))


def psi_rho(rho: float, x) -> np.ndarray:
    return np.exp(-2.0 * np.abs(np.asarray(x, dtype=float) - xi(rho)))


def cost(x) -> np.ndarray:
    return 1.0 - np.exp(-np.abs(np.asarray(x, dtype=float)))


def _quad(f, a, b, tol, points=None):
    kwargs = dict(epsabs=tol, epsrel=0.0, limit=200)
    if points is not None and np.isfinite(a) and np.isfinite(b):
        pts = [p for p in points if min(a, b) < p < max(a, b)]
        if pts:
            kwargs["points"] = pts
    val, err = integrate.quad(f, a, b, **kwargs)
    if not err <= tol:
        raise QuadratureFailure(f"quadrature on [{a}, {b}] reached error {err:.2e} > {tol:.2e}")
    return val


def _quad_split(f, a, b, tol, breaks):
    """Integrate over ``[a, b]`` (possibly infinite) split at the kinks."""
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    cuts = [a] + sorted(p for p in breaks if a < p < b) + [b]
    pieces = len(cuts) - 1
    return sign * math.fsum(_quad(f, lo, hi, tol / pieces) for lo, hi in zip(cuts, cuts[1:]))


def inner_integral(rho: float, y) -> np.ndarray:
    """``J(y)`` in closed form (products of exponentials on three pieces)."""
    rho = _check_rho(rho)
    s = xi(rho)
    q = 1.0 - rho
    y = np.asarray(y, dtype=float)
    e2s = math.exp(2.0 * s)
    j_xi = math.exp(s) / 3.0 - q / 2.0
    # full-line integral: int psi (rho - c) = int psi e^{-|z|} - q
    j_inf = 4.0 / 3.0 * math.exp(s) - 2.0 / 3.0 * e2s - q

    left_y = np.minimum(y, s)
    left = math.exp(-2.0 * s) * np.exp(3.0 * left_y) / 3.0 - q * np.exp(2.0 * (left_y - s)) / 2.0

    mid_y = np.clip(y, s, 0.0)
    mid = e2s * ((math.exp(-s) - np.exp(-mid_y)) - q * (math.exp(-2.0 * s) - np.exp(-2.0 * mid_y)) / 2.0)

    right_y = np.maximum(y, 0.0)
    # tail form avoids cancellation when multiplied by exp(2y)
    right_tail = e2s * (np.exp(-3.0 * right_y) / 3.0 - q * np.exp(-2.0 * right_y) / 2.0)

    out = np.where(y <= s, left, j_xi + mid)
    out = np.where(y > 0.0, j_inf - right_tail, out)
    return out


def inner_integral_quad(rho: float, y: float, quad_tol: float = QUAD_TOL) -> float:
    """``J(y)`` by adaptive quadrature (cross-check of the closed form)."""
    rho = _check_rho(rho)
    s = xi(rho)

    def f(z):
        return math.exp(-2.0 * abs(z - s)) * (rho - (1.0 - math.exp(-abs(z))))

    return _quad_split(f, -np.inf, float(y), quad_tol, (s, 0.0))


def v_rho_prime(rho: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 2.0 * np.exp(2.0 * np.abs(x - xi(rho))) * inner_integral(rho, x)


def v_rho_second(rho: float, x) -> np.ndarray:
    """``V''`` from the HJB identity itself; used only for diagnostics."""
    x = np.asarray(x, dtype=float)
    return 2.0 * (rho - cost(x) + np.abs(v_rho_prime(rho, x)))


def v_rho_increment(rho: float, a: float, b: float, quad_tol: float = QUAD_TOL) -> float:
    """``V_rho(b) - V_rho(a)`` by adaptive quadrature of ``V_rho'``."""
    s = xi(rho)

    def f(y):
        return float(v_rho_prime(rho, y))

    # V' grows like exp(2|y|); scale the tolerance with the local magnitude
    scale = max(1.0, abs(f(a)), abs(f(b)))
    return _quad_split(f, float(a), float(b), quad_tol * scale, (s, 0.0))


def v_rho(rho: float, x, quad_tol: float = QUAD_TOL) -> np.ndarray:
    """Origin-normalised ``V_rho`` at one or a few points, by adaptive quadrature."""
    rho = _check_rho(rho)
    x = np.asarray(x, dtype=float)
    out = np.array([v_rho_increment(rho, 0.0, xx, quad_tol) for xx in x.ravel()])
    return out.reshape(x.shape)


_GL_HI = np.polynomial.legendre.leggauss(10)
_GL_LO = np.polynomial.legendre.leggauss(5)


def _panel_integrals(f, lo, hi, rule):
    t, w = rule
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * t[None, :]
    return half * (f(pts) @ w)


def v_rho_panels(rho: float, x, quad_tol: float = QUAD_TOL, max_panel: float = 0.05) -> np.ndarray:
    """``V_rho`` at many points by composite Gauss-Legendre quadrature.

    Panels run between consecutive sorted points, are cut at the kinks
    ``xi_rho`` and 0, and are at most ``max_panel`` wide.  Each panel is integrated with 10 and 5 nodes;
    the difference is the error estimate, checked against ``quad_tol``
    relative to the local size of ``V_rho'``.
    """
    rho = _check_rho(rho)
    s = xi(rho)
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    ends = np.concatenate([flat, [0.0, s]])
    a, b = float(ends.min()), float(ends.max())
    fill = np.linspace(a, b, int(math.ceil((b - a) / max_panel)) + 1)
    knots = np.unique(np.concatenate([ends, fill]))
    lo, hi = knots[:-1], knots[1:]

    def f(y):
        return v_rho_prime(rho, y)

    fine = _panel_integrals(f, lo, hi, _GL_HI)
    coarse = _panel_integrals(f, lo, hi, _GL_LO)
    scale = np.maximum(1.0, np.maximum(np.abs(f(lo)), np.abs(f(hi))))
    err = np.abs(fine - coarse) / scale
    if not np.all(err <= quad_tol):
        raise QuadratureFailure(f"panel error {err.max():.2e} exceeds {quad_tol:.2e}")
    cum = np.concatenate([[0.0], np.cumsum(fine)])
    at_zero = cum[np.searchsorted(knots, 0.0)]
    vals = cum - at_zero
    return vals[np.searchsorted(knots, flat)].reshape(x.shape)


@lru_cache(maxsize=64)
def _v_rho_grid_cached(rho: float, L: float, N: int, quad_tol: float) -> np.ndarray:
    x = -L + (2.0 * L / (N - 1)) * np.arange(N)
    x[(N - 1) // 2] = 0.0
    x[-1] = L
    v = v_rho_panels(rho, x, quad_tol)
    v.setflags(write=False)
    return v


def v_rho_on_grid(rho: float, grid, quad_tol: float = QUAD_TOL) -> np.ndarray:
    return _v_rho_grid_cached(float(rho), float(grid.L), int(grid.N), float(quad_tol)).copy()


def hjb_residual_fd(rho: float, x: float, step: float = 1e-4, quad_tol: float = 1e-13) -> float:
    """Continuum residual ``V''/2 - |V'| + c - rho`` from quadrature values.

    Five-point central differences of step ``step``.  They are built from
    increments ``V(x + k*step) - V(x)`` obtained by quadrature over the
    short intervals, which keeps round-off far below ``step**2``.
    """
    x = float(x)

    def g(t):
        return float(v_rho_prime(rho, x + t))

    # integrate in the offset variable so the stencil spacing is exact
    scale = max(1.0, abs(g(0.0)))
    s = xi(rho) - x
    d = {k: _quad_split(g, 0.0, k * step, quad_tol * scale, (s, -x)) for k in (-2, -1, 1, 2)}
    d1 = (-d[2] + 8.0 * d[1] - 8.0 * d[-1] + d[-2]) / (12.0 * step)
    d2 = (-d[2] + 16.0 * d[1] + 16.0 * d[-1] - d[-2]) / (12.0 * step * step)
    return 0.5 * d2 - abs(d1) + float(cost(x)) - rho


def beta_quad(rho: float, quad_tol: float = QUAD_TOL) -> float:
    """``int c(x) psi_rho(x) dx`` by adaptive quadrature."""
    rho = _check_rho(rho)
    s = xi(rho)

    def f(x):
        return (1.0 - math.exp(-abs(x))) * math.exp(-2.0 * abs(x - s))

    return _quad_split(f, -np.inf, np.inf, quad_tol, (s, 0.0))


def beta_closed_form(rho: float) -> float:
    """Closed form of the same integral: ``1 - 2q + 3q^2/2`` with ``q = 1 - rho``."""
    q = 1.0 - _check_rho(rho)
    return 1.0 - 2.0 * q + 1.5 * q * q


def beta_printed_formula(rho: float) -> float:
    """The printed expression ``rho - (9/8)(1 - rho)(3 rho - 1)``, kept for comparison."""
    rho = _check_rho(rho)
    return rho - 9.0 / 8.0 * (1.0 - rho) * (3.0 * rho - 1.0)


@dataclass(frozen=True)
class SpuriousFamilyPoint:
    rho: float
    xi: float
    beta_quad: float
    beta_printed: float
    gap: float


def family_sweep(rhos, quad_tol: float = QUAD_TOL) -> list[SpuriousFamilyPoint]:
    rows = []
    for rho in rhos:
        b = beta_quad(rho, quad_tol)
        rows.append(SpuriousFamilyPoint(float(rho), xi(rho), b, beta_printed_formula(rho), float(rho) - b))
    return rows


def switch_point(rho: float) -> float:
    """Root of ``J`` (equivalently of ``V_rho'``) on the real line, by bracketing."""
    s = xi(rho)
    return optimize.brentq(lambda y: float(inner_integral(rho, y)), s - 1.0, min(s + 1.0, 5.0), xtol=1e-14)
