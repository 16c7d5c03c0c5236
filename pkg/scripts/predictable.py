"""Predictable bursts: rate 60 and 80 alternating every 10 time units over [0, 60]."""
from _common import parse, gain_rows, parser, write_rows

from capval.model import EnvironmentProcess, SystemConfig
from capval.policy import SearchBounds, dynamic_equilibrium_policy, optimal_equilibrium, transient_policy
from capval.scenarios import homogeneous_scenario, predictable_plan
from capval.sim import PolicySpec, compare_policies

BOUNDS = SearchBounds(20, 60, 0, 30)


def main():
    args = parse(parser(__doc__))
    cfg, costs = homogeneous_scenario()
    plan = predictable_plan(60.0)
    flat = SystemConfig(cfg.m, cfg.r, 1, cfg.mu_s, cfg.mu_a, EnvironmentProcess.single(), [[80.0]])
    pair, _ = optimal_equilibrium(flat, costs, BOUNDS)
    pols = [
        PolicySpec.equilibrium_schedule([pair], [0], BOUNDS.x_max, name="static80"),
        dynamic_equilibrium_policy(cfg, plan, costs, BOUNDS, 60.0, name="dynamic"),
        transient_policy(cfg, costs, 1.5, 1.5, 60.0, BOUNDS, plan=plan, name="transient"),
    ]
    cmp = compare_policies((cfg, plan), pols, costs, 60.0, args.replications, args.seed)
    for g in cmp.gains:
        if g.other == "transient":
            print(f"transient vs {g.base}: {g.percent:.3f}% +- {g.se:.3f}")
    write_rows(args.out / "predictable_gains.csv", ("base", "other", "gain_percent", "gain_se"), gain_rows(cmp))


if __name__ == "__main__":
    main()
