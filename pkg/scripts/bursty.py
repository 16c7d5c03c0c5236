"""Unpredictable bursts: gain of the transient policy over equilibrium on an (alpha, burst) grid.

Both policies plan with the time-averaged rate 80 and never see the burst state.
"""
import itertools

from _common import parse, parser, write_rows

from capval.model import EnvironmentProcess, SystemConfig
from capval.policy import SearchBounds, transient_policy
from capval.scenarios import bursty_scenario, homogeneous_scenario
from capval.sim import PolicySpec, compare_policies

BOUNDS = SearchBounds(20, 60, 0, 30)
ALPHAS = (0.5, 1.0, 2.0, 5.0)
BURSTS = (10.0, 20.0, 30.0, 40.0)


def main():
    args = parse(parser(__doc__, replications=5_000))
    cfg, costs = homogeneous_scenario()
    flat = SystemConfig(cfg.m, cfg.r, 1, cfg.mu_s, cfg.mu_a, EnvironmentProcess.single(), [[80.0]])
    pols = [PolicySpec.static(40, 8, "equilibrium"), transient_policy(flat, costs, 1.5, 1.5, 60.0, BOUNDS)]
    rows = []
    for a, b in itertools.product(ALPHAS, BURSTS):
        cmp = compare_policies(bursty_scenario(a, b), pols, costs, 60.0, args.replications, args.seed)
        g = cmp.gain("equilibrium", "transient")
        base = cmp.summaries[0]
        print(f"alpha={a:4.1f} burst={b:4.0f}  equilibrium loss {base.mean:8.3f}  gain {g.percent:6.3f}%")
        rows.append((a, b, f"{base.mean:.4f}", f"{cmp.summaries[1].mean:.4f}", f"{g.percent:.4f}", f"{g.se:.4f}"))
    write_rows(args.out / "bursty_sweep.csv",
               ("alpha", "burst", "equilibrium_mean", "transient_mean", "gain_percent", "gain_se"), rows)


if __name__ == "__main__":
    main()
