"""Truncated grid, upwind Markov-chain generators and the banded solver.

The generator of a policy ``v`` is the tridiagonal matrix

    super_i = a_i/h^2 + max(b_i, 0)/h
    sub_i   = a_i/h^2 + max(-b_i, 0)/h
    diag_i  = -(sub_i + super_i)

with ``b_i = b(x_i, v_i)``.  Off-diagonals are nonnegative and rows sum to
zero, so the matrix generates a continuous-time birth-death chain on the
grid.  At ``+-L`` the outward rate is folded onto the inward neighbour
(reflecting wall).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidGrid, PolicyLengthMismatch, SingularSystem


@dataclass(frozen=True)
class Grid1D:
    L: float
    N: int

    @cached_property
    def h(self) -> float:
        return 2.0 * self.L / (self.N - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = -self.L + self.h * np.arange(self.N)
        x[self.origin_index] = 0.0
        x[-1] = self.L
        x.setflags(write=False)
        return x

    @property
    def origin_index(self) -> int:
        return (self.N - 1) // 2

    def nearest_index(self, x) -> np.ndarray:
        idx = np.rint((np.asarray(x, dtype=float) + self.L) / self.h).astype(int)
        return np.clip(idx, 0, self.N - 1)


def build_grid(L: float, N: int) -> Grid1D:
    """Uniform grid on ``[-L, L]`` with an exact node at the origin."""
    if int(N) != N or N < 3 or N % 2 == 0:
        raise InvalidGrid(f"N must be an odd integer >= 3, got {N!r}")
    if not (np.isfinite(L) and L > 0):
        raise InvalidGrid(f"L must be positive, got {L!r}")
    return Grid1D(float(L), int(N))


@dataclass(frozen=True)
class BandedOperator:
    """Tridiagonal matrix ``A`` with ``A[i,i-1] = sub[i]``, ``A[i,i+1] = sup[i]``."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    grid: Grid1D | None = None

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        y = self.diag * f
        y[1:] += self.sub[1:] * f[:-1]
        y[:-1] += self.sup[:-1] * f[1:]
        return y

    def rmatvec(self, p: np.ndarray) -> np.ndarray:
        """``A^T p``."""
        return self.transpose().matvec(p)

    def transpose(self) -> "BandedOperator":
        sub = np.zeros_like(self.sub)
        sup = np.zeros_like(self.sup)
        sub[1:] = self.sup[:-1]
        sup[:-1] = self.sub[1:]
        return BandedOperator(sub, self.diag.copy(), sup, self.grid)

    def row_sums(self) -> np.ndarray:
        return self.matvec(np.ones(self.n))

    def to_dense(self) -> np.ndarray:
        A = np.diag(self.diag)
        A += np.diag(self.sub[1:], -1)
        A += np.diag(self.sup[:-1], 1)
        return A


def _generator_from_coefficients(a: np.ndarray, b: np.ndarray, grid: Grid1D) -> BandedOperator:
    h = grid.h
    diff = a / (h * h)
    up = diff + np.maximum(b, 0.0) / h
    down = diff + np.maximum(-b, 0.0) / h
    sub = down.copy()
    sup = up.copy()
    # reflecting walls: the outward rate is sent to the inward neighbour
    sup[0] = up[0] + down[0]
    sub[0] = 0.0
    sub[-1] = up[-1] + down[-1]
    sup[-1] = 0.0
    diag = -(sub + sup)
    return BandedOperator(sub, diag, sup, grid)


def assemble_policy_generator(model, grid: Grid1D, policy) -> BandedOperator:
    """Upwind generator ``L^v`` of the chain under a grid policy."""
    values = np.asarray(getattr(policy, "values", policy), dtype=float)
    if values.shape != (grid.N,):
        raise PolicyLengthMismatch(f"policy has shape {values.shape}, grid has {grid.N} nodes")
    x = grid.nodes
    b = np.broadcast_to(np.asarray(model.drift(x, values), dtype=float), x.shape)
    return _generator_from_coefficients(model.a(x), b, grid)


def assemble_control_generators(model, grid: Grid1D, controls=None) -> list[BandedOperator]:
    """One generator per constant control ``u``."""
    if controls is None:
        controls = model.control_set
    x = grid.nodes
    a = model.a(x)
    ops = []
    for u in controls:
        b = np.broadcast_to(np.asarray(model.drift(x, np.full_like(x, float(u))), dtype=float), x.shape)
        ops.append(_generator_from_coefficients(a, b, grid))
    return ops


class TridiagonalLU:
    """LU factorisation (partial pivoting) of a tridiagonal matrix.

    Raises SingularSystem when a pivot is negligible relative to the matrix
    scale, which also catches matrices that are singular only up to
    round-off (e.g. an unshifted generator).
    """

    def __init__(self, sub, diag, sup):
        sub = np.asarray(sub, dtype=float)
        diag = np.asarray(diag, dtype=float)
        sup = np.asarray(sup, dtype=float)
        n = diag.size
        ab = np.zeros((4, n))
        ab[1, 1:] = sup[:-1]
        ab[2, :] = diag
        ab[3, :-1] = sub[1:]
        scale = float(np.max(np.abs(ab))) if n else 0.0
        lu, piv, info = lapack.dgbtrf(ab, 1, 1)
        pivots = np.abs(lu[2, :])
        if info > 0 or scale == 0.0 or pivots.min() <= 8 * n * np.finfo(float).eps * scale:
            raise SingularSystem(
                f"pivot {pivots.min():.3e} negligible against matrix scale {scale:.3e}"
            )
        self._lu = lu
        self._piv = piv
        self.n = n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        b = rhs.reshape(self.n, -1)
        x, info = lapack.dgbtrs(self._lu, 1, 1, b, self._piv)
        if info != 0:
            raise SingularSystem(f"dgbtrs failed with info={info}")
        return x.reshape(rhs.shape)


def solve_tridiagonal(sub, diag, sup, rhs) -> np.ndarray:
    return TridiagonalLU(sub, diag, sup).solve(rhs)


def solve_banded(A: BandedOperator, shift: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(shift*I - A) z = rhs`` with one step of iterative refinement."""
    rhs = np.asarray(rhs, dtype=float)
    lu = TridiagonalLU(-A.sub, shift - A.diag, -A.sup)
    z = lu.solve(rhs)
    # large generator rates against a small shift lose a few digits in one pass
    r = rhs - (shift * z - A.matvec(z))
    return z + lu.solve(r)
