"""Command-line front end: ``capval {capval,policy,simulate,sweep} --config FILE --out DIR``.

Config files are YAML. Nested mappings and dotted keys are equivalent, so
``costs: {theta_b: 0.5}`` and ``costs.theta_b: 0.5`` mean the same thing.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import policy as pol
from .model import ConfigError, CostParams, EnvironmentProcess, SystemConfig, check
from .scenarios import ScenarioId, coefficient_of_variation, homogeneous_costs, homogeneous_scenario
from .sim import PolicySpec, compare_policies, monte_carlo, simulate_path
from .transient import PhasePlan, capacity_value, capacity_value_piecewise

KNOWN_KEYS = {
    "scenario",
    "system.m", "system.r", "system.ell", "system.mu_s", "system.mu_a",
    "system.alpha", "system.beta", "system.q_env", "system.arrivals",
    "costs.theta_b", "costs.theta_a", "costs.theta_s", "costs.theta_u",
    "bounds.m", "bounds.r",
    "planning.T",
    "sim.delta", "sim.horizon", "sim.replications", "sim.seed", "sim.x0", "sim.y0",
    "sim.policies", "sim.trajectory",
    "capval.t", "capval.x0", "capval.y0", "capval.m", "capval.r",
    "policy.x_max", "policy.incumbent",
    "sweep.alpha", "sweep.burst", "sweep.ell", "sweep.policies",
}

DEFAULT_POLICIES = {
    "hom": ["equilibrium", "transient"],
    "pred": ["equilibrium_unaware", "dynamic_equilibrium", "transient"],
    "bursty": ["equilibrium_unaware", "transient_unaware"],
    "batchy": ["equilibrium_unaware", "transient"],
}


def flatten(tree, prefix: str = "") -> dict:
    out = {}
    for k, v in (tree or {}).items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    """Parsed and validated run configuration; defaults follow the homogeneous experiment."""

    scenario: ScenarioId | None
    system: SystemConfig
    costs: CostParams
    bounds: pol.SearchBounds
    T: float = 1.5
    delta: float = 1.5
    horizon: float = 60.0
    replications: int = 100_000
    seed: int = 42
    x0: int = 0
    y0: int = 1
    policies: list = field(default_factory=list)
    trajectory: bool = False
    t_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5])
    cv_x0: list = field(default_factory=lambda: [0])
    cv_y0: int = 1
    cv_m: list = field(default_factory=list)
    cv_r: list = field(default_factory=list)
    x_max: int | None = None
    incumbent: tuple | None = None
    sweep_alpha: list = field(default_factory=list)
    sweep_burst: list = field(default_factory=list)
    sweep_ell: list = field(default_factory=list)
    sweep_policies: list = field(default_factory=list)

    def plan(self, horizon: float | None = None) -> PhasePlan | None:
        if self.scenario is None:
            return None
        return self.scenario.plan(self.horizon if horizon is None else horizon)


def _num_list(v, cast=float) -> list:
    if isinstance(v, (list, tuple)):
        return [cast(x) for x in v]
    return [cast(v)]


def _range(v, key: str) -> tuple[int, int]:
    vals = _num_list(v, int)
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise ConfigError(f"{key} must be [min, max]")
    return vals[0], vals[1]


def parse_config(text: str, seed: int | None = None) -> RunConfig:
    """Parse YAML config text; raises :class:`ConfigError` naming the offending field."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ConfigError(f"malformed config{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of keys to values")
    flat = flatten(raw)
    unknown = sorted(set(flat) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    def get(key, default=None, cast=None):
        if key not in flat:
            return default
        try:
            return cast(flat[key]) if cast else flat[key]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    scenario = ScenarioId.parse(str(flat["scenario"])) if "scenario" in flat else None
    if scenario is not None:
        base = scenario.config()
        costs = homogeneous_costs()
    elif "system.arrivals" not in flat and any(k.startswith("sweep.") for k in flat):
        # sweeps build their own scenarios; the homogeneous one supplies costs and rates
        base = homogeneous_scenario()[0]
        costs = homogeneous_costs()
    else:
        if "system.arrivals" not in flat:
            raise ConfigError("either scenario or system.arrivals is required")
        base = None
        costs = CostParams()
    sys_keys = [k for k in flat if k.startswith("system.")]
    if base is None or sys_keys:
        base = _system_from(flat, base, get)
    costs = CostParams(
        theta_b=get("costs.theta_b", costs.theta_b, float),
        theta_a=get("costs.theta_a", costs.theta_a, float),
        theta_s=get("costs.theta_s", costs.theta_s, float),
        theta_u=get("costs.theta_u", costs.theta_u, float),
    )
    if costs.violations():
        raise ConfigError("costs: " + "; ".join(costs.violations()))
    m_lo, m_hi = _range(get("bounds.m", [20, 60]), "bounds.m")
    r_lo, r_hi = _range(get("bounds.r", [0, 30]), "bounds.r")
    bounds = pol.SearchBounds(m_lo, m_hi, r_lo, r_hi)

    rc = RunConfig(scenario, base, costs, bounds)
    rc.T = get("planning.T", rc.T, float)
    rc.delta = get("sim.delta", rc.delta, float)
    rc.horizon = get("sim.horizon", rc.horizon, float)
    rc.replications = get("sim.replications", rc.replications, int)
    rc.seed = get("sim.seed", rc.seed, int) if seed is None else int(seed)
    rc.x0 = get("sim.x0", rc.x0, int)
    rc.y0 = get("sim.y0", rc.y0, int)
    kind = scenario.kind if scenario else "hom"
    rc.policies = [str(p) for p in get("sim.policies", DEFAULT_POLICIES[kind], list)]
    rc.trajectory = bool(get("sim.trajectory", False))
    rc.t_grid = get("capval.t", rc.t_grid, _num_list)
    rc.cv_x0 = get("capval.x0", rc.cv_x0, lambda v: _num_list(v, int))
    rc.cv_y0 = get("capval.y0", rc.cv_y0, int)
    rc.cv_m = get("capval.m", [base.m], lambda v: _num_list(v, int))
    rc.cv_r = get("capval.r", [base.r], lambda v: _num_list(v, int))
    rc.x_max = get("policy.x_max", None, int)
    inc = get("policy.incumbent", None, lambda v: _num_list(v, int))
    rc.incumbent = tuple(inc) if inc else None
    rc.sweep_alpha = get("sweep.alpha", [], _num_list)
    rc.sweep_burst = get("sweep.burst", [], _num_list)
    rc.sweep_ell = get("sweep.ell", [], lambda v: _num_list(v, int))
    rc.sweep_policies = [str(p) for p in get("sweep.policies", [], list)]

    if rc.T <= 0 or rc.delta <= 0 or rc.horizon <= 0:
        raise ConfigError("planning.T, sim.delta and sim.horizon must be positive")
    if rc.replications < 2:
        raise ConfigError("sim.replications must be at least 2")
    if any(t < 0 for t in rc.t_grid):
        raise ConfigError("capval.t entries must be nonnegative")
    if not 1 <= rc.y0 <= base.n_env or not 1 <= rc.cv_y0 <= base.n_env:
        raise ConfigError(f"y0 must lie in 1..{base.n_env}")
    check(base)
    return rc


def _system_from(flat, base, get) -> SystemConfig:
    arrivals = get("system.arrivals", None if base is None else base.arrivals.tolist())
    arrivals = np.atleast_2d(np.asarray(arrivals, dtype=float))
    if "system.q_env" in flat:
        env = EnvironmentProcess(get("system.q_env"))
    elif "system.alpha" in flat or "system.beta" in flat:
        env = EnvironmentProcess.two_state(get("system.alpha", 1.0, float), get("system.beta", 1.0, float))
    elif base is not None:
        env = base.env
    else:
        env = EnvironmentProcess.single() if arrivals.shape[0] == 1 else None
        if env is None:
            raise ConfigError("system.q_env or system.alpha/beta needed for several environment states")
    d = base or SystemConfig(1, 0, arrivals.shape[1], 1.0, 0.0, env, arrivals)
    cfg = SystemConfig(
        get("system.m", d.m, int), get("system.r", d.r, int), arrivals.shape[1],
        get("system.mu_s", d.mu_s, float), get("system.mu_a", d.mu_a, float), env, arrivals,
    )
    if "system.ell" in flat and get("system.ell", cast=int) != cfg.ell:
        raise ConfigError(f"system.ell={flat['system.ell']} disagrees with arrivals width {cfg.ell}")
    return check(cfg)


# ---------------------------------------------------------------- policies


def unaware_model(cfg: SystemConfig, rate: float | None = None) -> SystemConfig:
    """Unit-batch, single-environment model at the averaged (or given) task rate."""
    if rate is None:
        rate = float(cfg.env.stationary() @ cfg.task_rates())
    return SystemConfig(cfg.m, cfg.r, 1, cfg.mu_s, cfg.mu_a, EnvironmentProcess.single(), [[rate]])


def build_policy(spec: str, rc: RunConfig, cfg: SystemConfig, plan: PhasePlan | None, threads: int = 1) -> PolicySpec:
    """Policy from its name: ``static:M,R``, ``equilibrium``, ``equilibrium_unaware[:RATE]``,
    ``dynamic_equilibrium``, ``transient``, ``transient_unaware[:RATE]``."""
    name, _, arg = spec.partition(":")
    if name == "static":
        try:
            m, r = (int(v) for v in arg.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad static policy {spec!r}; expected static:M,R") from exc
        return PolicySpec.static(m, r, spec)
    rate = float(arg) if arg else None
    if name == "equilibrium":
        return pol.equilibrium_policy(cfg, rc.costs, rc.bounds, name=spec)
    if name == "equilibrium_unaware":
        return pol.equilibrium_policy(unaware_model(cfg, rate), rc.costs, rc.bounds, name=spec)
    if name == "dynamic_equilibrium":
        if plan is None:
            return pol.equilibrium_policy(cfg, rc.costs, rc.bounds, name=spec)
        return pol.dynamic_equilibrium_policy(cfg, plan, rc.costs, rc.bounds, rc.horizon, name=spec)
    if name == "transient":
        return pol.transient_policy(cfg, rc.costs, rc.T, rc.delta, rc.horizon, rc.bounds,
                                    plan=plan, name=spec, threads=threads)
    if name == "transient_unaware":
        return pol.transient_policy(unaware_model(cfg, rate), rc.costs, rc.T, rc.delta, rc.horizon,
                                    rc.bounds, name=spec, threads=threads)
    raise ConfigError(f"unknown policy {spec!r}")


# ---------------------------------------------------------------- commands


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


CAPVAL_HEADER = ("t", "x0", "y0", "m", "r", "g")
SURFACE_HEADER = ("m", "r", "equilibrium_rate")
MAP_HEADER = ("x", "y", "m", "r", "g_value")
SUMMARY_HEADER = ("policy", "mean", "se", "ci_low", "ci_high", "mean_blocking", "mean_abandonment", "mean_operating")
GAIN_HEADER = ("base", "other", "gain_percent", "gain_se")
SWEEP_HEADER = ("alpha", "burst", "ell", "cov", "base", "other", "base_mean", "other_mean", "gain_percent", "gain_se")


def cmd_capval(rc: RunConfig, threads: int = 1) -> dict:
    rows = []
    for m in rc.cv_m:
        for r in rc.cv_r:
            cfg = check(rc.system.with_capacity(m, r))
            for x0 in rc.cv_x0:
                if x0 > m + r:
                    raise ConfigError(f"capval.x0={x0} exceeds capacity m+r={m + r}")
                for t in rc.t_grid:
                    if t == 0:
                        g = 0.0
                    elif rc.plan() is not None:
                        g = capacity_value_piecewise(rc.plan().window(0.0, t), cfg, rc.costs, x0, rc.cv_y0).g
                    else:
                        g = capacity_value(cfg, rc.costs, x0, rc.cv_y0, t).g
                    rows.append((t, x0, rc.cv_y0, m, r, g))
    return {"capval.csv": _csv_text(CAPVAL_HEADER, rows)}


def cmd_policy(rc: RunConfig, threads: int = 1) -> dict:
    cfg = rc.system
    plan = rc.plan()
    if plan is not None:
        cfg = cfg.with_arrivals(plan.arrivals[0])
    (m_eq, r_eq), surface = pol.optimal_equilibrium(cfg, rc.costs, rc.bounds)
    b = rc.bounds
    surf_rows = [
        (b.m_min + i, b.r_min + j, surface[i, j])
        for i in range(surface.shape[0])
        for j in range(surface.shape[1])
        if np.isfinite(surface[i, j])
    ]
    window = plan.window(0.0, rc.T) if plan is not None else None
    if window is not None and len(window.breakpoints) == 1:
        cfg, window = cfg.with_arrivals(window.arrivals[0]), None
    dm = pol.decision_map(cfg, rc.costs, rc.T, b, rc.x_max, plan=window,
                          incumbent=rc.incumbent or (m_eq, r_eq), threads=threads)
    return {
        "equilibrium_surface.csv": _csv_text(SURFACE_HEADER, surf_rows),
        "decision_map.csv": _csv_text(MAP_HEADER, dm.rows()),
    }


def cmd_simulate(rc: RunConfig, threads: int = 1) -> dict:
    plan = rc.plan()
    cfg = rc.system
    true_model = (cfg, plan) if plan is not None else cfg
    policies = [build_policy(p, rc, cfg, plan, threads) for p in rc.policies]
    out = {}
    if len(policies) == 1:
        summaries = [monte_carlo(true_model, policies[0], rc.costs, rc.horizon, rc.x0, rc.y0,
                                 rc.replications, rc.seed)]
        gains = []
    else:
        cmp = compare_policies(true_model, policies, rc.costs, rc.horizon, rc.replications, rc.seed,
                               x0=rc.x0, y0=rc.y0)
        summaries, gains = cmp.summaries, cmp.gains
    out["summary.csv"] = _csv_text(SUMMARY_HEADER, [
        (s.name, s.mean, s.se, s.ci_low, s.ci_high, s.mean_blocking, s.mean_abandonment, s.mean_operating)
        for s in summaries
    ])
    out["gains.csv"] = _csv_text(GAIN_HEADER, [(g.base, g.other, g.percent, g.se) for g in gains])
    if rc.trajectory:
        for i, p in enumerate(policies):
            tally = simulate_path(true_model, p, rc.costs, rc.horizon, rc.x0, rc.y0, rc.seed, record=True)
            out[f"trajectory_{i}.csv"] = _csv_text(
                tally.TRAJECTORY_HEADER, [tuple(int(v) if 1 <= j <= 4 else v for j, v in enumerate(row))
                                          for row in tally.trajectory])
    return out


def cmd_sweep(rc: RunConfig, threads: int = 1) -> dict:
    if bool(rc.sweep_ell) == bool(rc.sweep_alpha or rc.sweep_burst):
        raise ConfigError("sweep needs either sweep.ell or sweep.alpha with sweep.burst")
    points = []
    if rc.sweep_ell:
        for ell in rc.sweep_ell:
            points.append((ScenarioId("batchy", ell=ell), np.nan, np.nan, ell))
    else:
        if not rc.sweep_alpha or not rc.sweep_burst:
            raise ConfigError("bursty sweep needs both sweep.alpha and sweep.burst")
        for a in rc.sweep_alpha:
            for lb in rc.sweep_burst:
                sid = ScenarioId.parse(f"bursty:{a},{lb}")
                points.append((sid, a, lb, 1))
    rows = []
    for sid, a, lb, ell in points:
        cfg = sid.config()
        names = rc.sweep_policies or DEFAULT_POLICIES[sid.kind]
        policies = [build_policy(p, rc, cfg, None, threads) for p in names]
        cmp = compare_policies(cfg, policies, rc.costs, rc.horizon, rc.replications, rc.seed, x0=rc.x0, y0=rc.y0)
        means = {s.name: s.mean for s in cmp.summaries}
        for g in cmp.gains:
            if g.base == names[0]:
                rows.append((a, lb, ell, coefficient_of_variation(ell), g.base, g.other,
                             means[g.base], means[g.other], g.percent, g.se))
    return {"sweep.csv": _csv_text(SWEEP_HEADER, rows)}


COMMANDS = {"capval": cmd_capval, "policy": cmd_policy, "simulate": cmd_simulate, "sweep": cmd_sweep}


def _threads(arg: int | None) -> int:
    if arg is None:
        arg = int(os.environ.get("CAPVAL_THREADS", "0") or 0)
    if arg < 0:
        raise ConfigError("--threads must be >= 0")
    import numba

    n = numba.config.NUMBA_NUM_THREADS if arg == 0 else min(arg, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="capval", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("."))
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
        rc = parse_config(text, seed=args.seed)
        threads = _threads(args.threads)
        files = COMMANDS[args.command](rc, threads)
    except (ConfigError, OSError) as exc:
        print(f"capval: error: {exc}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        (args.out / name).write_text(content, encoding="utf-8")
        print(args.out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
