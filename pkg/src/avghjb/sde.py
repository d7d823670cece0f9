"""Euler-Maruyama Monte Carlo for the controlled diffusion under a Markov policy.

Every path owns a PCG64 stream spawned from ``SeedSequence(seed)`` by its
index, so a path's noise does not depend on how many paths run beside it
or on the chunking of the draws.  Cross-path reductions use ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CensoringExcessive, InvalidConfig

_CHUNK = 1024


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-2
    T: float = 500.0
    n_paths: int = 400
    seed: int = 0
    x0: float = 0.0
    reflect_at: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidConfig(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.T) and self.T >= 0):
            raise InvalidConfig(f"T must be nonnegative, got {self.T!r}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidConfig(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.reflect_at is not None and not self.reflect_at > 0:
            raise InvalidConfig(f"reflect_at must be positive, got {self.reflect_at!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class PathStats:
    mean: float
    stderr: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples) -> "PathStats":
        s = np.asarray(samples, dtype=float)
        n = s.size
        if n == 0:
            return cls(math.nan, math.nan, 0)
        mean = math.fsum(s) / n
        if n == 1:
            return cls(mean, 0.0, 1)
        var = math.fsum((s - mean) ** 2) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_samples": self.n_samples}


class _Noise:
    """Standard normals, one independent stream per path, drawn in chunks."""

    def __init__(self, seed: int, n_paths: int):
        children = np.random.SeedSequence(int(seed)).spawn(int(n_paths))
        self._gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
        self._buf = np.empty((0, n_paths))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos == self._buf.shape[0]:
            self._buf = np.stack([g.standard_normal(_CHUNK) for g in self._gens], axis=1)
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        return row


def _policy_fn(policy):
    if callable(policy):
        return policy
    u = float(policy)
    return lambda x: np.full(np.shape(x), u)


def _reflect(x: np.ndarray, L: float) -> np.ndarray:
    x = np.where(x > L, 2.0 * L - x, x)
    x = np.where(x < -L, -2.0 * L - x, x)
    return np.clip(x, -L, L)


def _step(model, v, x, dt, z, reflect_at):
    u = v(x)
    b = np.broadcast_to(np.asarray(model.drift(x, u), dtype=float), x.shape)
    sig = np.broadcast_to(np.asarray(model.dispersion(x), dtype=float), x.shape)
    x_new = x + b * dt + sig * math.sqrt(dt) * z
    if reflect_at is not None:
        x_new = _reflect(x_new, reflect_at)
    return x_new


def _cost(model, v, x):
    return np.broadcast_to(np.asarray(model.cost(x, v(x)), dtype=float), x.shape)


def simulate_average_cost(model, policy, cfg: SimConfig, return_paths: bool = False):
    """Mean over paths of ``(1/T) int_0^T c(X_s, v(X_s)) ds``.

    Left-endpoint sums along Euler-Maruyama paths started at ``cfg.x0``.
    With ``return_paths`` the per-path averages are returned as well.
    """
    if cfg.T <= 0 or cfg.n_steps < 1:
        raise InvalidConfig("average cost needs a positive horizon T >= dt")
    v = _policy_fn(policy)
    noise = _Noise(cfg.seed, cfg.n_paths)
    x = np.full(cfg.n_paths, float(cfg.x0))
    acc = np.zeros(cfg.n_paths)
    for _ in range(cfg.n_steps):
        acc += _cost(model, v, x)
        x = _step(model, v, x, cfg.dt, noise.next(), cfg.reflect_at)
    per_path = acc * cfg.dt / (cfg.n_steps * cfg.dt)
    stats = PathStats.from_samples(per_path)
    return (stats, per_path) if return_paths else stats


@dataclass(frozen=True)
class ExitEstimate:
    psi: PathStats  # int_0^tau (c - rho) dt
    boundary_value: PathStats | None  # V(X_tau)
    identity: PathStats | None  # psi + V(X_tau) - V(x0), per path
    censored_fraction: float
    mean_exit_time: float

    def as_dict(self) -> dict:
        return {
            "psi": self.psi.as_dict(),
            "boundary_value": None if self.boundary_value is None else self.boundary_value.as_dict(),
            "identity": None if self.identity is None else self.identity.as_dict(),
            "censored_fraction": self.censored_fraction,
            "mean_exit_time": self.mean_exit_time,
        }


def estimate_exit_functional(model, policy, x0: float, r: float, rho: float, cfg: SimConfig, V=None,
                             max_censored: float = 0.01) -> ExitEstimate:
    """Monte Carlo ``E_x0 int_0^tau (c - rho) dt`` with ``tau`` the entry time of ``|x| <= r``.

    Entry is detected at the first step landing in the ball; the exit point
    used for ``V(X_tau)`` is the crossed boundary point ``sign(X) r``.
    Paths still outside at ``cfg.T`` are censored.  ``V`` is a callable or
    anything with an ``at`` method.
    """
    r = float(r)
    x0 = float(x0)
    if not r > 0:
        raise InvalidConfig(f"r must be positive, got {r!r}")
    n = cfg.n_paths
    Vf = None if V is None else getattr(V, "at", V)
    if abs(x0) <= r:
        zero = PathStats(0.0, 0.0, n)
        return ExitEstimate(zero, None if Vf is None else PathStats(float(Vf(x0)), 0.0, n),
                            None if Vf is None else zero, 0.0, 0.0)
    v = _policy_fn(policy)
    noise = _Noise(cfg.seed, n)
    x = np.full(n, x0)
    acc = np.zeros(n)
    exit_pt = np.full(n, np.nan)
    exit_time = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    for k in range(cfg.n_steps):
        z = noise.next()
        if not active.any():
            break
        xa = x[active]
        acc[active] += (_cost(model, v, xa) - rho) * cfg.dt
        x_new = _step(model, v, xa, cfg.dt, z[active], cfg.reflect_at)
        x[active] = x_new
        hit = np.abs(x_new) <= r
        if hit.any():
            idx = np.flatnonzero(active)[hit]
            exit_pt[idx] = np.sign(xa[hit]) * r
            exit_time[idx] = (k + 1) * cfg.dt
            active[idx] = False
    censored = float(active.mean())
    if censored > max_censored:
        raise CensoringExcessive(f"{censored:.2%} of paths did not reach the ball by T={cfg.T}")
    done = ~active
    psi = PathStats.from_samples(acc[done])
    bval = ident = None
    if Vf is not None:
        vb = np.asarray(Vf(exit_pt[done]), dtype=float)
        bval = PathStats.from_samples(vb)
        ident = PathStats.from_samples(acc[done] + vb - float(Vf(x0)))
    mean_tau = math.fsum(exit_time[done]) / max(1, int(done.sum()))
    return ExitEstimate(psi, bval, ident, censored, mean_tau)


@dataclass(frozen=True)
class OccupationHistogram:
    edges: np.ndarray
    mass: np.ndarray  # sums to 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def occupation_histogram(model, policy, cfg: SimConfig, bins) -> OccupationHistogram:
    """Normalised histogram of all ``X_t`` samples after a burn-in of ``T/10``.

    ``bins`` is an array of edges; samples outside the edges are dropped
    before normalisation.
    """
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InvalidConfig("bins must be a strictly increasing array of at least two edges")
    if cfg.T <= 0 or cfg.n_steps < 1:
        raise InvalidConfig("histogram needs a positive horizon")
    v = _policy_fn(policy)
    noise = _Noise(cfg.seed, cfg.n_paths)
    x = np.full(cfg.n_paths, float(cfg.x0))
    burn = int(math.ceil(cfg.n_steps / 10))
    counts = np.zeros(edges.size - 1, dtype=np.int64)
    for k in range(cfg.n_steps):
        x = _step(model, v, x, cfg.dt, noise.next(), cfg.reflect_at)
        if k + 1 >= burn:
            idx = np.searchsorted(edges, x, side="right") - 1
            # right edge belongs to the last bin
            idx[x == edges[-1]] = edges.size - 2
            ok = (idx >= 0) & (idx < edges.size - 1)
            counts += np.bincount(idx[ok], minlength=edges.size - 1)
    total = counts.sum()
    if total == 0:
        raise InvalidConfig("no samples fell inside the bins")
    return OccupationHistogram(edges, counts / total)
