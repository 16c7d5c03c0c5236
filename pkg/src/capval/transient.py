"""Equilibrium, deviation solves, uniformized exponential actions and the capacity value function."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .generator import GeneratorSet, build_background, loss_rate_vector
from .model import CostParams, SystemConfig, check, state_index

TAIL_TOL = 1e-12


class NumericalError(ArithmeticError):
    pass


def equilibrium(D: np.ndarray) -> np.ndarray:
    """Stationary row vector of the generator ``D``.

    Uses state reduction without subtractions (the Grassmann-Taylor-Heyman
    scheme), so even tiny tail probabilities carry full relative accuracy.
    """
    A = np.array(D, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericalError("generator has non-finite entries")
    n = A.shape[0]
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if not s > 0:
            raise NumericalError(f"state {k} cannot reach lower states; generator is reducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    pi /= pi.sum()
    D = np.asarray(D, dtype=float)
    resid = np.abs(pi @ D).max()
    if not np.all(np.isfinite(pi)) or resid > 1e-10 * max(np.abs(D).max(), 1.0):
        raise NumericalError(f"equilibrium residual {resid:.3g}; generator may be reducible")
    return pi


def deviation_solve(D: np.ndarray, pi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``w`` with ``(1 pi - D) w = v`` without forming the inverse."""
    A = np.outer(np.ones(len(pi)), pi) - D
    try:
        return linalg.solve(A, v)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"deviation solve failed: {exc}") from exc


def _poisson_weights(lt: float, wmax: float) -> np.ndarray:
    if wmax == 0.0:
        return np.ones(1)
    eps = min(TAIL_TOL / wmax, 0.5)
    n = int(stats.poisson.isf(eps, lt)) + 1
    while stats.poisson.sf(n - 1, lt) * wmax > TAIL_TOL:
        n += 1 + n // 16
    return stats.poisson.pmf(np.arange(n), lt)


def _uniformized(D: np.ndarray, t: float, v: np.ndarray, left: bool) -> np.ndarray:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    rate = float(np.max(-np.diag(D))) if D.size else 0.0
    if t == 0 or rate == 0.0:
        return v.copy()
    P = np.eye(D.shape[0]) + D / rate
    if left:
        P = P.T
    weights = _poisson_weights(rate * t, float(np.abs(v).max()))
    term = v.copy()
    acc = weights[0] * term
    for wn in weights[1:]:
        term = P @ term
        acc += wn * term
    return acc


def expm_apply(D: np.ndarray, t: float, w: np.ndarray) -> np.ndarray:
    """``exp(D t) @ w`` for a column vector (or stack of columns) ``w``."""
    return _uniformized(D, t, w, left=False)


def expm_apply_left(pi0: np.ndarray, D: np.ndarray, t: float) -> np.ndarray:
    """``pi0 @ exp(D t)`` for a row vector ``pi0``."""
    return _uniformized(D, t, pi0, left=True)


def expm_action(D: np.ndarray, t: float, w: np.ndarray, pi0: np.ndarray) -> float:
    """Scalar ``pi0 exp(D t) w`` by uniformization."""
    return float(np.asarray(pi0) @ expm_apply(np.asarray(D, dtype=float), t, w))


@dataclass(frozen=True)
class CapacityValueResult:
    g: float
    equilibrium_rate: float
    transient_correction: float


@dataclass(frozen=True, eq=False)
class SegmentModel:
    """Everything about one constant-rate configuration that does not depend on the start state."""

    cfg: SystemConfig
    D: np.ndarray
    pi: np.ndarray
    loss_rates: np.ndarray  # D* 1
    deviation: np.ndarray  # (1 pi - D)^{-1} D* 1

    @classmethod
    def build(cls, cfg: SystemConfig, costs: CostParams) -> "SegmentModel":
        gen = GeneratorSet.build(cfg, costs)
        pi = equilibrium(gen.D)
        loss = gen.D_star.sum(axis=1)
        return cls(cfg, gen.D, pi, loss, deviation_solve(gen.D, pi, loss))

    @property
    def loss_rate(self) -> float:
        """Long-run revenue loss rate from blocking and abandonment."""
        return float(self.pi @ self.loss_rates)


def operating_rate(cfg: SystemConfig, costs: CostParams) -> float:
    return cfg.m * costs.theta_s + cfg.r * costs.theta_u


def capacity_value(
    cfg: SystemConfig, costs: CostParams, x0: int, y0: int, t: float
) -> CapacityValueResult:
    """Expected blocking, abandonment and operating loss over ``[0, t]`` from ``(x0, y0)``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    seg = SegmentModel.build(cfg, costs)
    i = state_index(x0, y0, cfg)
    pi0 = np.zeros(cfg.dim)
    pi0[i] = 1.0
    rate = operating_rate(cfg, costs) + seg.loss_rate
    corr = expm_action(seg.D, t, seg.deviation, pi0) - seg.deviation[i]
    return CapacityValueResult(rate * t - corr, rate, corr)


def value_profile(seg: SegmentModel, costs: CostParams, t: float) -> np.ndarray:
    """Capacity value at horizon ``t`` for every start state at once (indexed like the generator)."""
    rate = operating_rate(seg.cfg, costs) + seg.loss_rate
    corr = expm_apply(seg.D, t, seg.deviation) - seg.deviation
    return rate * t - corr


@dataclass(frozen=True, eq=False)
class PhasePlan:
    """Piecewise-constant arrival tables: ``arrivals[i]`` is active on ``[breakpoints[i-1], breakpoints[i])``."""

    breakpoints: tuple
    arrivals: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        arr = tuple(np.array(a, dtype=float) for a in self.arrivals)
        if len(bp) == 0 or len(bp) != len(arr):
            raise ValueError("need one arrival table per segment")
        if bp[0] <= 0 or any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "arrivals", arr)

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1]

    @property
    def starts(self) -> tuple:
        return (0.0,) + self.breakpoints[:-1]

    def segment_at(self, t: float) -> int:
        """Index of the segment active at time ``t`` (the last one for ``t >= horizon``)."""
        return min(int(np.searchsorted(self.breakpoints, t, side="right")), len(self.breakpoints) - 1)

    def window(self, start: float, length: float) -> "PhasePlan":
        """Sub-plan covering ``[start, start + length)`` re-based to time 0.

        Beyond the horizon the last table stays active.
        """
        end = start + length
        bps, arrs = [], []
        i = self.segment_at(start)
        while True:
            seg_end = self.breakpoints[i] if i < len(self.breakpoints) - 1 else np.inf
            stop = min(seg_end, end)
            if stop - start > 1e-12 or not bps:
                bps.append(stop - start)
                arrs.append(self.arrivals[i])
            if stop >= end:
                break
            i += 1
        bps[-1] = length
        return PhasePlan(tuple(bps), tuple(arrs))

    def configs(self, template: SystemConfig) -> list[SystemConfig]:
        return [check(template.with_arrivals(a)) for a in self.arrivals]

    @classmethod
    def constant(cls, arrivals, t: float) -> "PhasePlan":
        return cls((t,), (arrivals,))


def _piecewise_parts(plan: PhasePlan, cfg: SystemConfig, costs: CostParams):
    segs = [SegmentModel.build(c, costs) for c in plan.configs(cfg)]
    lengths = np.diff((0.0,) + plan.breakpoints)
    return segs, lengths


def capacity_value_piecewise(
    plan: PhasePlan, cfg: SystemConfig, costs: CostParams, x0: int, y0: int
) -> CapacityValueResult:
    """Capacity value over ``[0, plan.horizon]`` with arrival tables switching at known times.

    Each segment contributes its own equilibrium loss rate times its length,
    minus a correction driven by the start law propagated through the earlier
    segments.
    """
    segs, lengths = _piecewise_parts(plan, cfg, costs)
    i = state_index(x0, y0, cfg)
    law = np.zeros(cfg.dim)
    law[i] = 1.0
    linear = operating_rate(cfg, costs) * plan.horizon
    corr = 0.0
    for seg, dt in zip(segs, lengths):
        linear += seg.loss_rate * dt
        nxt = expm_apply_left(law, seg.D, dt)
        corr += nxt @ seg.deviation - law @ seg.deviation
        law = nxt
    t = plan.horizon
    return CapacityValueResult(linear - corr, linear / t, corr)


def value_profile_piecewise(plan: PhasePlan, cfg: SystemConfig, costs: CostParams) -> np.ndarray:
    """Piecewise capacity value for every start state, one column action per segment."""
    segs, lengths = _piecewise_parts(plan, cfg, costs)
    linear = operating_rate(cfg, costs) * plan.horizon
    linear += sum(s.loss_rate * dt for s, dt in zip(segs, lengths))
    acc = np.zeros(cfg.dim)
    for seg, dt in zip(reversed(segs), reversed(lengths)):
        acc = expm_apply(seg.D, dt, seg.deviation + acc) - seg.deviation
    return linear - acc


def equilibrium_loss_rate(cfg: SystemConfig, costs: CostParams) -> float:
    """Long-run loss rate including operating cost, via the loss-rate vector only."""
    pi = equilibrium(build_background(cfg))
    return operating_rate(cfg, costs) + float(pi @ loss_rate_vector(cfg, costs))
