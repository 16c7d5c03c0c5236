"""Provisioning decisions from capacity values: equilibrium sizing and transient decision maps."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sim import PolicySpec, epoch_times
from .model import ConfigError, CostParams, EnvironmentProcess, SystemConfig, check
from .transient import (
    PhasePlan,
    SegmentModel,
    capacity_value,
    equilibrium_loss_rate,
    value_profile,
    value_profile_piecewise,
)


@dataclass(frozen=True)
class SearchBounds:
    m_min: int
    m_max: int
    r_min: int
    r_max: int

    def __post_init__(self):
        if self.m_min < 1 or self.m_max < self.m_min or self.r_min < 0 or self.r_max < self.r_min:
            raise ConfigError(f"empty or invalid search bounds {self}")

    @property
    def candidates(self) -> list[tuple[int, int]]:
        """All pairs in tie-break order: smaller ``m`` first, then smaller ``r``."""
        return [
            (m, r)
            for m in range(self.m_min, self.m_max + 1)
            for r in range(self.r_min, self.r_max + 1)
        ]

    @property
    def x_max(self) -> int:
        return self.m_max + self.r_max


@dataclass(frozen=True, eq=False)
class DecisionMap:
    """Chosen ``(m, r)`` per observed state ``(x, y)``; arrays are indexed ``[y-1, x]``."""

    horizon: float
    m: np.ndarray
    r: np.ndarray
    g: np.ndarray
    g_incumbent: np.ndarray

    @property
    def n_env(self) -> int:
        return self.m.shape[0]

    @property
    def x_max(self) -> int:
        return self.m.shape[1] - 1

    def choice(self, x: int, y: int = 1) -> tuple[int, int]:
        return int(self.m[y - 1, x]), int(self.r[y - 1, x])

    def rows(self):
        for y in range(self.n_env):
            for x in range(self.x_max + 1):
                yield x, y + 1, int(self.m[y, x]), int(self.r[y, x]), float(self.g[y, x])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "m", "r", "g_value"])
            for x, y, m, r, g in self.rows():
                w.writerow([x, y, m, r, f"{g:.12g}"])


def lumped(cfg: SystemConfig) -> SystemConfig:
    """Collapse an environment whose states all carry the same arrival rates.

    The task count alone is then Markov with the same rates, so capacity
    values do not depend on the environment state.
    """
    a = cfg.arrivals
    if cfg.n_env > 1 and np.all(a == a[0]):
        return SystemConfig(cfg.m, cfg.r, cfg.ell, cfg.mu_s, cfg.mu_a, EnvironmentProcess.single(), a[:1])
    return cfg


def _lumped_plan(plan: PhasePlan | None, cfg: SystemConfig):
    if plan is None:
        return None, lumped(cfg)
    if cfg.n_env > 1 and all(np.all(a == a[0]) for a in plan.arrivals):
        single = lumped(cfg.with_arrivals(plan.arrivals[0]))
        return PhasePlan(plan.breakpoints, tuple(a[:1] for a in plan.arrivals)), single
    return plan, cfg


def equilibrium_rate(cfg: SystemConfig, costs: CostParams, m: int | None = None, r: int | None = None) -> float:
    """Long-run loss rate ``m theta_s + r theta_u + pi D* 1`` of ``cfg`` resized to ``(m, r)``."""
    if m is not None:
        cfg = cfg.with_capacity(m, cfg.r if r is None else r)
    return equilibrium_loss_rate(check(lumped(cfg)), costs)


def optimal_equilibrium(cfg_template: SystemConfig, costs: CostParams, bounds: SearchBounds):
    """Grid argmin of the equilibrium loss rate.

    Pairs with ``m + r`` below the batch bound get an infinite rate. Returns ``((m, r), surface)`` with ``surface[m - m_min, r - r_min]``.
    """
    base = lumped(cfg_template)
    ms = range(bounds.m_min, bounds.m_max + 1)
    rs = range(bounds.r_min, bounds.r_max + 1)
    surface = np.array(
        [
            [
                equilibrium_loss_rate(check(base.with_capacity(m, r)), costs) if m + r >= base.ell else np.inf
                for r in rs
            ]
            for m in ms
        ]
    )
    if not np.isfinite(surface).any():
        raise ConfigError(f"no candidate in {bounds} can hold a batch of {base.ell} tasks")
    i, j = np.unravel_index(np.argmin(surface), surface.shape)  # first hit = smaller m, then r
    return (bounds.m_min + int(i), bounds.r_min + int(j)), surface


def _profile(cfg: SystemConfig, costs: CostParams, T: float, plan: PhasePlan | None) -> np.ndarray:
    if plan is None:
        return value_profile(SegmentModel.build(cfg, costs), costs, T)
    return value_profile_piecewise(plan, cfg, costs)


def decision_map(
    cfg_template: SystemConfig,
    costs: CostParams,
    T: float,
    bounds: SearchBounds,
    x_max: int | None = None,
    *,
    plan: PhasePlan | None = None,
    incumbent: tuple[int, int] | None = None,
    threads: int = 1,
) -> DecisionMap:
    """Minimize the capacity value over ``[0, T]`` for every start state.

    With ``plan`` the arrival tables follow that schedule (its horizon must be
    ``T``); otherwise ``cfg_template``'s table is used throughout. A candidate
    ``(m, r)`` is feasible for ``x`` only when ``m + r >= x``.
    """
    if T <= 0:
        raise ConfigError("planning horizon must be positive")
    x_max = bounds.x_max if x_max is None else x_max
    if x_max > bounds.x_max:
        raise ConfigError(f"x_max={x_max} exceeds the largest candidate capacity {bounds.x_max}")
    if plan is not None and abs(plan.horizon - T) > 1e-12:
        raise ConfigError("plan horizon must equal the planning horizon")
    n_env = cfg_template.n_env
    plan_l, base = _lumped_plan(plan, cfg_template)
    # a batch larger than the whole system can never be admitted: such sizes are not candidates
    cands = [(m, r) for m, r in bounds.candidates if m + r >= base.ell]
    if incumbent is not None and tuple(incumbent) not in cands:
        cands = cands + [tuple(incumbent)]

    def evaluate(pair):
        return _profile(check(base.with_capacity(*pair)), costs, T, plan_l)

    if threads == 1:
        profiles = [evaluate(p) for p in cands]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as ex:
            profiles = list(ex.map(evaluate, cands))

    shape = (n_env, x_max + 1)
    best_g = np.full(shape, np.inf)
    best_m = np.zeros(shape, dtype=int)
    best_r = np.zeros(shape, dtype=int)
    g_inc = np.full(shape, np.nan)
    xs = np.arange(x_max + 1)
    in_bounds = set(bounds.candidates)
    for (m, r), prof in zip(cands, profiles):
        levels = m + r + 1
        vals = np.full(shape, np.inf)
        env_rows = prof.reshape(-1, levels)
        feasible = xs[xs <= m + r]
        vals[:, feasible] = env_rows[:, feasible] if env_rows.shape[0] == n_env else env_rows[0, feasible]
        if incumbent is not None and (m, r) == tuple(incumbent):
            g_inc = np.where(np.isfinite(vals), vals, np.nan)
        if (m, r) in in_bounds:
            better = vals < best_g
            best_g[better] = vals[better]
            best_m[better] = m
            best_r[better] = r
    if np.any(~np.isfinite(best_g)):
        y, x = np.argwhere(~np.isfinite(best_g))[0]
        raise ConfigError(f"no feasible (m, r) within bounds for state x={x}, y={y + 1}")
    return DecisionMap(float(T), best_m, best_r, best_g, g_inc)


def delta_value(
    cfg: SystemConfig,
    costs: CostParams,
    current: tuple[int, int],
    proposed: tuple[int, int],
    x: int,
    y: int,
    t: float,
    switch_cost: float = 0.0,
) -> float:
    """Change in expected loss over ``[0, t]`` from moving ``current`` to ``proposed``.

    ``switch_cost`` is charged per server added or removed.
    """
    for m, r in (current, proposed):
        if m + r < x:
            raise ConfigError(f"(m, r)=({m}, {r}) cannot hold x={x} tasks")
    g_new = capacity_value(cfg.with_capacity(*proposed), costs, x, y, t).g
    g_old = capacity_value(cfg.with_capacity(*current), costs, x, y, t).g
    return g_new - g_old + switch_cost * abs(proposed[0] - current[0])


def time_averaged(cfg: SystemConfig) -> SystemConfig:
    """Single-environment model with the environment-averaged arrival table."""
    avg = cfg.env.stationary() @ cfg.arrivals
    return SystemConfig(cfg.m, cfg.r, cfg.ell, cfg.mu_s, cfg.mu_a, EnvironmentProcess.single(), avg[None, :])


def equilibrium_policy(cfg: SystemConfig, costs: CostParams, bounds: SearchBounds, name: str = "") -> PolicySpec:
    (m, r), _ = optimal_equilibrium(cfg, costs, bounds)
    return PolicySpec.static(m, r, name or f"equilibrium({m},{r})")


def _env_dependent(maps) -> bool:
    return any(np.any(dm.m != dm.m[:1]) or np.any(dm.r != dm.r[:1]) for dm in maps)


def transient_policy(
    planning_cfg: SystemConfig,
    costs: CostParams,
    T: float,
    delta: float,
    horizon: float,
    bounds: SearchBounds,
    *,
    plan: PhasePlan | None = None,
    name: str = "",
    threads: int = 1,
) -> PolicySpec:
    """Re-provision every ``delta`` from decision maps over ``[s, s + T]``.

    With a ``plan`` each epoch ``s`` gets the map for the plan's window
    starting at ``s``; identical windows share one map. The policy observes
    the environment only if some map's decisions depend on it.
    """
    if plan is None:
        dm = decision_map(planning_cfg, costs, T, bounds, threads=threads)
        return PolicySpec.from_map(dm, delta, aware=_env_dependent([dm]), name=name or "transient")
    cache: dict = {}
    maps, schedule = [], []
    for s in epoch_times(delta, horizon):
        window = plan.window(s, T)
        key = (window.breakpoints, tuple(a.tobytes() for a in window.arrivals))
        if key not in cache:
            if len(window.breakpoints) == 1:
                dm = decision_map(planning_cfg.with_arrivals(window.arrivals[0]), costs, T, bounds, threads=threads)
            else:
                dm = decision_map(planning_cfg, costs, T, bounds, plan=window, threads=threads)
            cache[key] = len(maps)
            maps.append(dm)
        schedule.append(cache[key])
    return PolicySpec.from_maps(maps, schedule, delta, aware=_env_dependent(maps), name=name or "transient")


def dynamic_equilibrium_policy(
    cfg: SystemConfig,
    plan: PhasePlan,
    costs: CostParams,
    bounds: SearchBounds,
    horizon: float,
    *,
    delta: float | None = None,
    name: str = "",
) -> PolicySpec:
    """Equilibrium choice for the arrival table in force, switched at every breakpoint.

    With ``delta`` the choice is also refreshed at each epoch.
    """
    times = {0.0} | {b for b in plan.breakpoints if b < horizon}
    if delta:
        times |= set(epoch_times(delta, horizon).tolist())
    times = np.array(sorted(times))
    cache: dict = {}
    pairs, schedule = [], []
    for t in times:
        arr = plan.arrivals[plan.segment_at(t)]
        key = arr.tobytes()
        if key not in cache:
            cache[key] = len(pairs)
            pairs.append(optimal_equilibrium(cfg.with_arrivals(arr), costs, bounds)[0])
        schedule.append(cache[key])
    return PolicySpec.equilibrium_schedule(
        pairs, schedule, bounds.x_max, decision_times=times, name=name or "dynamic_equilibrium"
    )
