"""Batch arrivals with harmonic batch sizes: gain of a batch-aware transient policy over [0, 54]."""
from _common import parse, parser, write_rows

from capval.policy import SearchBounds, transient_policy
from capval.scenarios import batchy_scenario, coefficient_of_variation, homogeneous_costs
from capval.sim import PolicySpec, compare_policies

BOUNDS = SearchBounds(20, 60, 0, 30)
ELLS = (1, 2, 5, 10, 20, 30)


def main():
    args = parse(parser(__doc__, replications=5_000))
    costs = homogeneous_costs()
    rows = []
    for ell in ELLS:
        cfg = batchy_scenario(ell)
        pols = [PolicySpec.static(40, 8, "equilibrium"), transient_policy(cfg, costs, 1.5, 1.5, 54.0, BOUNDS)]
        g = compare_policies(cfg, pols, costs, 54.0, args.replications, args.seed).gain("equilibrium", "transient")
        cov = coefficient_of_variation(ell)
        print(f"ell={ell:2d} CoV={cov:6.4f}  gain {g.percent:6.3f}% +- {g.se:.3f}")
        rows.append((ell, f"{cov:.4f}", f"{g.percent:.4f}", f"{g.se:.4f}"))
    write_rows(args.out / "batchy_sweep.csv", ("ell", "cov", "gain_percent", "gain_se"), rows)


if __name__ == "__main__":
    main()
