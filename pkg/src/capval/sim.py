"""Event-driven simulation of the loss system under periodic re-provisioning.

Exogenous events (environment switches and batch arrivals) draw from one
random stream and endogenous events (service completions and abandonments)
from another, so under a common seed every policy sees the same demand.
Draws come from a counter-based generator: the ``i``-th uniform of stream
``s`` in replication ``n`` is a hash of ``(seed, n, s, i)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

from .model import ConfigError, CostParams, SystemConfig, check
from .transient import PhasePlan

_numba_config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_REP_MULT = np.uint64(0xD1B54A32D192ED03)
_STREAM_MULT = np.uint64(0x8CB92BA72F3D8DD7)

STREAM_EXO = 1
STREAM_ENDO = 2

# status codes returned by the path kernel
OK = 0
INFEASIBLE = 1
UNMAPPED = 2


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, rep, stream):
    """64-bit key of one random stream; a fixed integer mix of its coordinates."""
    k = _mix(np.uint64(seed) + _GOLDEN)
    k = _mix(k ^ (np.uint64(rep) * _REP_MULT))
    return _mix(k ^ (np.uint64(stream) * _STREAM_MULT))


@njit(cache=True, inline="always")
def _uniform(key, ctr):
    """Open-interval uniform from the counter ``ctr`` of stream ``key``."""
    z = _mix(key + np.uint64(ctr + 1) * _GOLDEN)
    return ((z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True, error_model="numpy")
def _path(
    seed, rep, horizon, x0, y0,
    q_env, breakpoints, rates, mu_s, mu_a, costs,
    dtimes, tables, schedule, observe_env,
    record, traj,
):
    """Simulate one path. ``y0`` is zero-based here.

    Returns (status, blocked_tasks, abandoned, op_cost, admitted_tasks,
    generated_tasks, n_records).
    """
    key_a = stream_key(seed, rep, STREAM_EXO)
    key_b = stream_key(seed, rep, STREAM_ENDO)
    ca = 0
    cb = 0
    n_seg = breakpoints.shape[0]
    ell = rates.shape[2]
    n_env = q_env.shape[0]
    theta_b, theta_a, theta_s, theta_u = costs[0], costs[1], costs[2], costs[3]

    t = 0.0
    x = x0
    y = y0
    seg = 0
    blocked = 0
    abandoned = 0
    admitted = 0
    generated = 0
    op = 0.0
    n_rec = 0

    # provisioning at time 0
    tab = schedule[0]
    yo = y if observe_env else 0
    if x >= tables.shape[2]:
        return UNMAPPED, blocked, abandoned, op, admitted, generated, n_rec
    m = tables[tab, yo, x, 0]
    r = tables[tab, yo, x, 1]
    if m < 0:
        return UNMAPPED, blocked, abandoned, op, admitted, generated, n_rec
    if m + r < x:
        return INFEASIBLE, blocked, abandoned, op, admitted, generated, n_rec
    if record:
        traj[0, 0] = 0.0
        traj[0, 1] = x
        traj[0, 2] = y + 1
        traj[0, 3] = m
        traj[0, 4] = r
        traj[0, 5] = 0.0
        traj[0, 6] = 0.0
        traj[0, 7] = 0.0
        n_rec = 1

    epoch = 1
    n_dec = dtimes.shape[0]
    next_epoch = dtimes[1] if n_dec > 1 else np.inf
    next_break = breakpoints[0] if n_seg > 1 else np.inf

    exo = -q_env[y, y]
    for k in range(ell):
        exo += rates[seg, y, k]
    t_exo = t - math.log(_uniform(key_a, ca)) / exo if exo > 0 else np.inf
    ca += 1
    busy = min(x, m)
    endo = busy * mu_s + (x - busy) * mu_a
    t_endo = t - math.log(_uniform(key_b, cb)) / endo if endo > 0 else np.inf
    cb += 1

    while True:
        tn = min(t_exo, t_endo, next_epoch, next_break, horizon)
        op += (m * theta_s + r * theta_u) * (tn - t)
        t = tn
        if tn >= horizon:
            break
        if tn == next_break:
            seg += 1
            next_break = breakpoints[seg] if seg < n_seg - 1 else np.inf
            exo = -q_env[y, y]
            for k in range(ell):
                exo += rates[seg, y, k]
            t_exo = t - math.log(_uniform(key_a, ca)) / exo if exo > 0 else np.inf
            ca += 1
            continue
        if tn == next_epoch:
            tab = schedule[epoch]
            yo = y if observe_env else 0
            if x >= tables.shape[2]:
                return UNMAPPED, blocked, abandoned, op, admitted, generated, n_rec
            m = tables[tab, yo, x, 0]
            r = tables[tab, yo, x, 1]
            if m < 0:
                return UNMAPPED, blocked, abandoned, op, admitted, generated, n_rec
            if m + r < x:
                return INFEASIBLE, blocked, abandoned, op, admitted, generated, n_rec
            if record and n_rec < traj.shape[0]:
                traj[n_rec, 0] = t
                traj[n_rec, 1] = x
                traj[n_rec, 2] = y + 1
                traj[n_rec, 3] = m
                traj[n_rec, 4] = r
                traj[n_rec, 5] = theta_b * blocked
                traj[n_rec, 6] = theta_a * abandoned
                traj[n_rec, 7] = op
                n_rec += 1
            epoch += 1
            next_epoch = dtimes[epoch] if epoch < n_dec else np.inf
            busy = min(x, m)
            endo = busy * mu_s + (x - busy) * mu_a
            t_endo = t - math.log(_uniform(key_b, cb)) / endo if endo > 0 else np.inf
            cb += 1
            continue
        if tn == t_exo:
            u = _uniform(key_a, ca) * exo
            ca += 1
            moved = False
            for y2 in range(n_env):
                if y2 == y:
                    continue
                u -= q_env[y, y2]
                if u < 0:
                    y = y2
                    moved = True
                    break
            if not moved:
                k = ell
                for j in range(ell):
                    u -= rates[seg, y, j]
                    if u < 0:
                        k = j + 1
                        break
                generated += k
                if x + k <= m + r:
                    x += k
                    admitted += k
                else:
                    blocked += k
            exo = -q_env[y, y]
            for j in range(ell):
                exo += rates[seg, y, j]
            t_exo = t - math.log(_uniform(key_a, ca)) / exo if exo > 0 else np.inf
            ca += 1
        else:
            busy = min(x, m)
            waiting = x - busy
            if waiting > 0 and _uniform(key_b, cb) * endo < waiting * mu_a:
                abandoned += 1
            cb += 1
            x -= 1
        busy = min(x, m)
        endo = busy * mu_s + (x - busy) * mu_a
        t_endo = t - math.log(_uniform(key_b, cb)) / endo if endo > 0 else np.inf
        cb += 1

    if record and n_rec < traj.shape[0]:
        traj[n_rec, 0] = t
        traj[n_rec, 1] = x
        traj[n_rec, 2] = y + 1
        traj[n_rec, 3] = m
        traj[n_rec, 4] = r
        traj[n_rec, 5] = theta_b * blocked
        traj[n_rec, 6] = theta_a * abandoned
        traj[n_rec, 7] = op
        n_rec += 1
    return OK, blocked, abandoned, op, admitted, generated, n_rec


@njit(cache=True, parallel=True, error_model="numpy")
def _batch(
    seed, n_reps, horizon, x0, y0,
    q_env, breakpoints, rates, mu_s, mu_a, costs,
    dtimes, tables, schedule, observe_env,
):
    out = np.zeros((n_reps, 3))
    status = np.zeros(n_reps, dtype=np.int64)
    dummy = np.zeros((1, 8))
    for i in prange(n_reps):
        st, blk, ab, op, _, _, _ = _path(
            seed, i, horizon, x0, y0, q_env, breakpoints, rates, mu_s, mu_a,
            costs, dtimes, tables, schedule, observe_env, False, dummy,
        )
        status[i] = st
        out[i, 0] = costs[0] * blk
        out[i, 1] = costs[1] * ab
        out[i, 2] = op
    return out, status


@dataclass(frozen=True, eq=False)
class PolicySpec:
    """Provisioning rule consulted at decision instants.

    ``tables[i, y-1, x]`` holds the ``(m, r)`` chosen by table ``i`` in
    state ``(x, y)``; entries of ``-1`` mark unmapped states. The ``e``-th
    decision instant uses table ``schedule[min(e, len - 1)]``. Instants are
    ``0, delta, 2 delta, ...`` unless ``decision_times`` lists them
    explicitly (starting at 0). Policies with ``observe_env`` false see only
    ``x``.
    """

    kind: str
    delta: float
    tables: np.ndarray
    schedule: np.ndarray
    observe_env: bool
    name: str = ""
    decision_times: np.ndarray | None = None

    def __post_init__(self):
        if self.kind != "static" and self.decision_times is None and not self.delta > 0:
            raise ConfigError("epoch length must be positive")
        object.__setattr__(self, "tables", np.ascontiguousarray(self.tables, dtype=np.int64))
        object.__setattr__(self, "schedule", np.ascontiguousarray(self.schedule, dtype=np.int64))
        if self.decision_times is not None:
            dt = np.asarray(self.decision_times, dtype=float)
            if dt[0] != 0.0 or np.any(np.diff(dt) <= 0):
                raise ConfigError("decision times must start at 0 and increase strictly")
            object.__setattr__(self, "decision_times", dt)

    def instants(self, horizon: float) -> tuple[np.ndarray, np.ndarray]:
        """Decision instants in ``[0, horizon)`` and the table used at each."""
        if self.decision_times is not None:
            times = self.decision_times[self.decision_times < horizon]
        elif self.kind == "static":
            times = np.zeros(1)
        else:
            times = epoch_times(self.delta, horizon)
        idx = np.minimum(np.arange(len(times)), len(self.schedule) - 1)
        return np.ascontiguousarray(times), np.ascontiguousarray(self.schedule[idx])

    @classmethod
    def static(cls, m: int, r: int, name: str = "") -> "PolicySpec":
        tab = np.empty((1, 1, m + r + 1, 2), dtype=np.int64)
        tab[..., 0] = m
        tab[..., 1] = r
        return cls("static", 0.0, tab, np.zeros(1), False, name or f"static({m},{r})")

    @classmethod
    def from_maps(cls, maps, schedule, delta: float, aware: bool = True, name: str = "") -> "PolicySpec":
        """Decision maps looked up per epoch; ``aware=False`` reads only each map's first environment row."""
        n_obs = max(dm.n_env for dm in maps) if aware else 1
        x_cap = max(dm.x_max for dm in maps) + 1
        tab = np.full((len(maps), n_obs, x_cap, 2), -1, dtype=np.int64)
        for i, dm in enumerate(maps):
            for y in range(n_obs):
                src = y if dm.n_env > 1 else 0
                tab[i, y, : dm.x_max + 1, 0] = dm.m[src]
                tab[i, y, : dm.x_max + 1, 1] = dm.r[src]
        kind = "transient_map" if aware else "transient_map_unaware"
        return cls(kind, delta, tab, schedule, n_obs > 1, name or kind)

    @classmethod
    def from_map(cls, dm, delta: float, aware: bool = True, name: str = "") -> "PolicySpec":
        return cls.from_maps([dm], [0], delta, aware, name)

    @classmethod
    def equilibrium_schedule(cls, pairs, schedule, x_cap: int, *, delta: float = 0.0,
                             decision_times=None, name: str = "") -> "PolicySpec":
        """Equilibrium choices per instant; the buffer stretches to ``x - m`` when needed so no task is evicted.

        Without ``delta`` or ``decision_times`` the only decision is at time 0.
        """
        if decision_times is None and not delta > 0:
            decision_times = np.zeros(1)
        tab = np.empty((len(pairs), 1, x_cap + 1, 2), dtype=np.int64)
        xs = np.arange(x_cap + 1)
        for i, (m, r) in enumerate(pairs):
            tab[i, 0, :, 0] = m
            tab[i, 0, :, 1] = np.maximum(r, xs - m)
        return cls("dynamic_equilibrium", delta, tab, schedule, False,
                   name or "dynamic_equilibrium", decision_times)


def epoch_times(delta: float, horizon: float) -> np.ndarray:
    n = int(math.ceil(horizon / delta - 1e-9))
    return delta * np.arange(max(n, 1))


@dataclass
class LossTally:
    blocked_tasks: int
    abandoned_tasks: int
    blocking_loss: float
    abandonment_loss: float
    operating_cost: float
    admitted_tasks: int = 0
    generated_tasks: int = 0
    trajectory: np.ndarray | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return self.blocking_loss + self.abandonment_loss + self.operating_cost

    TRAJECTORY_HEADER = ("time", "x", "y", "m", "r", "blocking_loss", "abandonment_loss", "operating_cost")

    def trajectory_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.TRAJECTORY_HEADER)
            for row in self.trajectory:
                w.writerow([f"{row[0]:.12g}", int(row[1]), int(row[2]), int(row[3]), int(row[4])]
                           + [f"{v:.12g}" for v in row[5:]])


def _unpack(true_model, horizon: float):
    if isinstance(true_model, tuple):
        cfg, plan = true_model
        cfg = check(cfg)
        plan.configs(cfg)
        bps = np.array(plan.breakpoints, dtype=float)
        rates = np.stack([np.asarray(a, dtype=float) for a in plan.arrivals])
        if bps[-1] < horizon:
            bps[-1] = horizon  # last table persists to the horizon
    else:
        if isinstance(true_model, PhasePlan):
            raise TypeError("pass (config, plan) for a time-varying model")
        cfg = check(true_model)
        bps, rates = np.array([horizon], dtype=float), cfg.arrivals[None, :, :]
    return cfg, np.ascontiguousarray(bps), np.ascontiguousarray(rates)


def _costs_array(costs: CostParams) -> np.ndarray:
    return np.array([costs.theta_b, costs.theta_a, costs.theta_s, costs.theta_u], dtype=float)


def _raise_status(status: int, policy: PolicySpec):
    if status == INFEASIBLE:
        raise RuntimeError(f"policy {policy.name!r} chose a capacity below the current task count")
    if status == UNMAPPED:
        raise RuntimeError(f"policy {policy.name!r} has no decision for an observed state")


def simulate_path(
    true_model,
    policy: PolicySpec,
    costs: CostParams,
    horizon: float,
    x0: int,
    y0: int,
    seed: int,
    *,
    replication: int = 0,
    record: bool = False,
) -> LossTally:
    """One sample path of the system over ``[0, horizon]``.

    ``true_model`` is a :class:`SystemConfig` or a ``(SystemConfig, PhasePlan)``
    pair whose plan switches arrival tables at its breakpoints. Only the
    stochastic primitives of the config are used; capacity comes from the
    policy.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    cfg, bps, rates = _unpack(true_model, horizon)
    dtimes, schedule = policy.instants(horizon)
    traj = np.zeros((len(dtimes) + 1 if record else 1, 8))
    st, blk, ab, op, adm, gen, n = _path(
        np.uint64(seed), np.uint64(replication), float(horizon), int(x0), int(y0) - 1,
        cfg.env.q_env, bps, rates, cfg.mu_s, cfg.mu_a, _costs_array(costs),
        dtimes, policy.tables, schedule, policy.observe_env,
        record, traj,
    )
    _raise_status(st, policy)
    return LossTally(
        int(blk), int(ab), costs.theta_b * blk, costs.theta_a * ab, float(op),
        int(adm), int(gen), traj[:n].copy() if record else None,
    )


@dataclass(frozen=True)
class McSummary:
    replications: int
    mean: float
    se: float
    ci_low: float
    ci_high: float
    mean_blocking: float
    mean_abandonment: float
    mean_operating: float
    name: str = ""


def _summary(components: np.ndarray, name: str) -> McSummary:
    totals = components.sum(axis=1)
    n = len(totals)
    mean = float(np.mean(totals))
    se = float(np.std(totals, ddof=1) / math.sqrt(n))
    means = components.mean(axis=0)
    return McSummary(n, mean, se, mean - 1.96 * se, mean + 1.96 * se,
                     float(means[0]), float(means[1]), float(means[2]), name)


def replicate(true_model, policy: PolicySpec, costs: CostParams, horizon: float,
              x0: int, y0: int, replications: int, base_seed: int) -> np.ndarray:
    """Per-replication (blocking, abandonment, operating) losses, shape ``(replications, 3)``."""
    if replications < 2:
        raise ValueError("need at least two replications")
    cfg, bps, rates = _unpack(true_model, horizon)
    dtimes, schedule = policy.instants(horizon)
    out, status = _batch(
        np.uint64(base_seed), int(replications), float(horizon), int(x0), int(y0) - 1,
        cfg.env.q_env, bps, rates, cfg.mu_s, cfg.mu_a, _costs_array(costs),
        dtimes, policy.tables, schedule, policy.observe_env,
    )
    bad = status[status != OK]
    if bad.size:
        _raise_status(int(bad[0]), policy)
    return out


def monte_carlo(true_model, policy: PolicySpec, costs: CostParams, horizon: float,
                x0: int, y0: int, replications: int, base_seed: int) -> McSummary:
    comps = replicate(true_model, policy, costs, horizon, x0, y0, replications, base_seed)
    return _summary(comps, policy.name)


@dataclass(frozen=True)
class Gain:
    base: str
    other: str
    percent: float
    se: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.percent - 1.96 * self.se, self.percent + 1.96 * self.se


@dataclass
class Comparison:
    summaries: list
    gains: list
    totals: np.ndarray = field(repr=False)

    def gain(self, base: str, other: str) -> Gain:
        for g in self.gains:
            if g.base == base and g.other == other:
                return g
        raise KeyError((base, other))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "mean", "se", "ci_low", "ci_high"])
            for s in self.summaries:
                w.writerow([s.name] + [f"{v:.12g}" for v in (s.mean, s.se, s.ci_low, s.ci_high)])
            w.writerow([])
            w.writerow(["base", "other", "gain_percent", "gain_se"])
            for g in self.gains:
                w.writerow([g.base, g.other, f"{g.percent:.12g}", f"{g.se:.12g}"])


def paired_gain(base: np.ndarray, other: np.ndarray) -> tuple[float, float]:
    """Percent reduction of ``other`` relative to ``base`` and its delta-method SE."""
    n = len(base)
    mb = float(np.mean(base))
    d = base - other
    ratio = float(np.mean(d)) / mb
    resid = d - ratio * base
    se = float(np.std(resid, ddof=1) / math.sqrt(n)) / abs(mb)
    return 100.0 * ratio, 100.0 * se


def compare_policies(true_model, policies, costs: CostParams, horizon: float,
                     replications: int, base_seed: int, x0: int = 0, y0: int = 1) -> Comparison:
    """Run every policy on common random numbers and report pairwise percent gains."""
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ValueError(f"policy names must be unique: {names}")
    comps = [replicate(true_model, p, costs, horizon, x0, y0, replications, base_seed) for p in policies]
    summaries = [_summary(c, p.name) for c, p in zip(comps, policies)]
    totals = np.stack([c.sum(axis=1) for c in comps])
    gains = []
    for i, pi in enumerate(policies):
        for j, pj in enumerate(policies):
            if i != j:
                gains.append(Gain(pi.name, pj.name, *paired_gain(totals[i], totals[j])))
    return Comparison(summaries, gains, totals)
