"""Finite generator and marking matrices for the blocking and abandonment counting processes.

All matrices are dense ``dim x dim`` arrays over the ordering of
:func:`capval.model.state_index`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import CostParams, SystemConfig, check


def build_background(cfg: SystemConfig) -> np.ndarray:
    """Generator of the background process (task count, environment)."""
    check(cfg)
    n, cap = cfg.n_levels, cfg.capacity
    q = cfg.env.q_env
    x = np.arange(n)
    D = np.kron(q, np.eye(n))
    down = np.where(x <= cfg.m, x * cfg.mu_s, cfg.m * cfg.mu_s + (x - cfg.m) * cfg.mu_a)
    for y in range(cfg.n_env):
        off = y * n
        for k in range(1, cfg.ell + 1):
            rate = cfg.arrivals[y, k - 1]
            if rate == 0:
                continue
            src = x[: cap - k + 1]
            D[off + src, off + src + k] += rate
        D[off + x[1:], off + x[1:] - 1] += down[1:]
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def build_blocking(cfg: SystemConfig) -> list[np.ndarray]:
    """``out[k-1]`` marks the holding times during which a ``k``-batch would be lost."""
    check(cfg)
    n, cap = cfg.n_levels, cfg.capacity
    x = np.arange(n)
    out = []
    for k in range(1, cfg.ell + 1):
        full = (x > cap - k).astype(float)
        out.append(np.diag(np.kron(cfg.arrivals[:, k - 1], full)))
    return out


def build_abandonment(cfg: SystemConfig) -> np.ndarray:
    """Abandonment share ``(x-m) mu_a`` of each downward transition out of a buffered state."""
    check(cfg)
    n, m = cfg.n_levels, cfg.m
    Da = np.zeros((cfg.dim, cfg.dim))
    xs = np.arange(m + 1, cfg.capacity + 1)
    for y in range(cfg.n_env):
        off = y * n
        Da[off + xs, off + xs - 1] = (xs - m) * cfg.mu_a
    return Da


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    cfg: SystemConfig
    D: np.ndarray
    D_blocking: tuple
    D_0: np.ndarray
    D_a: np.ndarray
    D_0_prime: np.ndarray
    D_star: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @classmethod
    def build(cls, cfg: SystemConfig, costs: CostParams | None = None) -> "GeneratorSet":
        D = build_background(cfg)
        blocking = tuple(build_blocking(cfg))
        Da = build_abandonment(cfg)
        gen = cls(cfg, D, blocking, D - sum(blocking), Da, D - Da)
        if costs is not None:
            gen = gen.with_costs(costs)
        return gen

    def with_costs(self, costs: CostParams) -> "GeneratorSet":
        return GeneratorSet(
            self.cfg, self.D, self.D_blocking, self.D_0, self.D_a, self.D_0_prime,
            build_cost_matrix(self, costs),
        )


def build_cost_matrix(gen: GeneratorSet, costs: CostParams) -> np.ndarray:
    """Cost-weighted loss-rate matrix: abandonments plus ``k`` tasks per blocked ``k``-batch."""
    out = costs.theta_a * gen.D_a
    for k, Dk in enumerate(gen.D_blocking, start=1):
        out = out + costs.theta_b * k * Dk
    return out


def loss_rate_vector(cfg: SystemConfig, costs: CostParams) -> np.ndarray:
    """Row sums of the cost matrix, built without materializing any matrix.

    Equals ``build_cost_matrix(...) @ 1``; used by the policy search where only
    this vector is needed.
    """
    n, cap, m = cfg.n_levels, cfg.capacity, cfg.m
    x = np.arange(n)
    k = np.arange(1, cfg.ell + 1)
    blocked = (x[:, None] > cap - k[None, :])  # (n, ell)
    block_rate = blocked @ (k[:, None] * cfg.arrivals.T)  # (n, n_env)
    aband = np.where(x > m, (x - m) * cfg.mu_a, 0.0)
    v = costs.theta_b * block_rate + costs.theta_a * aband[:, None]
    return v.T.reshape(-1)


def dump_csv(matrix: np.ndarray, path) -> None:
    """Write the nonzero entries of ``matrix`` as ``row,col,value`` lines."""
    rows, cols = np.nonzero(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for i, j in zip(rows, cols):
            w.writerow([int(i), int(j), f"{matrix[i, j]:.12g}"])
