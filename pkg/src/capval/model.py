"""Domain types for the bursty batch loss system and its state ordering."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates a model invariant."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnvironmentProcess:
    """Finite Markov environment modulating the arrival rates.

    ``q_env[i, j]`` is the rate of switching from environment state ``i+1`` to
    ``j+1``.
    """

    q_env: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_env", _frozen(np.atleast_2d(self.q_env)))

    @classmethod
    def two_state(cls, alpha: float, beta: float) -> "EnvironmentProcess":
        return cls([[-alpha, alpha], [beta, -beta]])

    @classmethod
    def single(cls) -> "EnvironmentProcess":
        return cls([[0.0]])

    @property
    def n_env(self) -> int:
        return self.q_env.shape[0]

    def violations(self) -> list[str]:
        q = self.q_env
        out = []
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            return ["environment rate matrix must be square and nonempty"]
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            out.append("environment off-diagonal rates must be nonnegative")
        if np.any(np.abs(q.sum(axis=1)) > 1e-12):
            out.append("environment rate matrix rows must sum to zero")
        if not _irreducible(off > 0):
            out.append("environment process must be irreducible")
        return out

    def stationary(self) -> np.ndarray:
        n = self.n_env
        a = self.q_env.T.copy()
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        return np.linalg.solve(a, b)


def _irreducible(adj: np.ndarray) -> bool:
    """Strong connectivity of a boolean adjacency matrix by two reachability scans."""
    n = adj.shape[0]
    for a in (adj, adj.T):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(a[i] & ~seen):
                seen[j] = True
                stack.append(j)
        if not seen.all():
            return False
    return True


@dataclass(frozen=True)
class CostParams:
    theta_b: float = 0.0
    theta_a: float = 0.0
    theta_s: float = 0.0
    theta_u: float = 0.0

    def violations(self) -> list[str]:
        return [f"{k} must be nonnegative" for k, v in vars(self).items() if not v >= 0]

    def scaled(self, c: float) -> "CostParams":
        return CostParams(*(c * v for v in vars(self).values()))


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Servers ``m``, buffer ``r``, batch bound ``ell`` and the stochastic primitives.

    ``arrivals[y-1, k-1]`` is the rate of batches of ``k`` tasks while the
    environment is in state ``y``.
    """

    m: int
    r: int
    ell: int
    mu_s: float
    mu_a: float
    env: EnvironmentProcess
    arrivals: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "arrivals", _frozen(np.atleast_2d(self.arrivals)))

    @property
    def n_env(self) -> int:
        return self.env.n_env

    @property
    def capacity(self) -> int:
        return self.m + self.r

    @property
    def n_levels(self) -> int:
        return self.m + self.r + 1

    @property
    def dim(self) -> int:
        return self.n_env * self.n_levels

    def with_capacity(self, m: int, r: int) -> "SystemConfig":
        return replace(self, m=int(m), r=int(r))

    def with_arrivals(self, arrivals) -> "SystemConfig":
        arrivals = np.atleast_2d(np.asarray(arrivals, dtype=float))
        return replace(self, arrivals=arrivals, ell=arrivals.shape[1])

    def task_rates(self) -> np.ndarray:
        """Mean task arrival rate in each environment state."""
        return self.arrivals @ np.arange(1, self.ell + 1)


def validate(cfg: SystemConfig) -> list[str]:
    """Return every violated invariant of ``cfg``; an empty list means valid."""
    out = []
    if cfg.m < 1:
        out.append("server count must be at least 1")
    if cfg.r < 0:
        out.append("buffer size must be nonnegative")
    if cfg.ell < 1:
        out.append("maximum batch size must be at least 1")
    elif cfg.ell > cfg.m + cfg.r:
        out.append("batch cannot exceed total capacity")
    if not cfg.mu_s > 0:
        out.append("service rate must be positive")
    if not cfg.mu_a >= 0:
        out.append("abandonment rate must be nonnegative")
    out += cfg.env.violations()
    a = cfg.arrivals
    if a.shape != (cfg.n_env, cfg.ell):
        out.append(f"arrival table must have shape ({cfg.n_env}, {cfg.ell}), got {a.shape}")
    # an all-zero table is allowed: it describes a draining system
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        out.append("arrival rates must be nonnegative and finite")
    return out


def check(cfg: SystemConfig) -> SystemConfig:
    problems = validate(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


@dataclass(frozen=True)
class BackgroundState:
    x: int
    y: int


def state_index(x: int, y: int, cfg: SystemConfig) -> int:
    """Zero-based position of ``(x, y)`` in the level-within-environment ordering."""
    if not 0 <= x <= cfg.capacity:
        raise IndexError(f"task count {x} outside 0..{cfg.capacity}")
    if not 1 <= y <= cfg.n_env:
        raise IndexError(f"environment state {y} outside 1..{cfg.n_env}")
    return (y - 1) * cfg.n_levels + x


def state_of(index: int, cfg: SystemConfig) -> BackgroundState:
    if not 0 <= index < cfg.dim:
        raise IndexError(f"state index {index} outside 0..{cfg.dim - 1}")
    y, x = divmod(index, cfg.n_levels)
    return BackgroundState(x, y + 1)
