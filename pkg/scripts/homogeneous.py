"""Homogeneous arrivals: equilibrium optimum, decision map, and the static-vs-transient gain."""
from _common import parse, gain_rows, parser, write_rows

from capval.policy import SearchBounds, decision_map, optimal_equilibrium, transient_policy
from capval.scenarios import homogeneous_scenario
from capval.sim import PolicySpec, compare_policies

BOUNDS = SearchBounds(20, 60, 0, 30)


def main():
    args = parse(parser(__doc__))
    cfg, costs = homogeneous_scenario()
    (m, r), surface = optimal_equilibrium(cfg, costs, BOUNDS)
    print(f"equilibrium optimum (m, r) = ({m}, {r}), rate {surface[m - 20, r]:.4f}")
    dm = decision_map(cfg, costs, 1.5, BOUNDS)
    dm.to_csv(args.out / "homogeneous_map.csv")
    print("servers chosen at x = 0, 20, 40, 60, 80:", [dm.choice(x)[0] for x in (0, 20, 40, 60, 80)])
    pols = [PolicySpec.static(m, r, "equilibrium"), transient_policy(cfg, costs, 1.5, 1.5, 60.0, BOUNDS)]
    cmp = compare_policies(cfg, pols, costs, 60.0, args.replications, args.seed)
    for s in cmp.summaries:
        print(f"{s.name:12s} mean loss {s.mean:.3f} +- {s.se:.3f}")
    print(f"gain {cmp.gain('equilibrium', 'transient').percent:.3f}%")
    write_rows(args.out / "homogeneous_gains.csv", ("base", "other", "gain_percent", "gain_se"), gain_rows(cmp))


if __name__ == "__main__":
    main()
