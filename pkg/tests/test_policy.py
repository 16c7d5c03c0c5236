import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capval.model import ConfigError, CostParams, EnvironmentProcess, SystemConfig
from capval.policy import (
    DecisionMap, SearchBounds, decision_map, delta_value, equilibrium_rate, lumped, optimal_equilibrium,
    time_averaged, transient_policy,
)
from capval.scenarios import homogeneous_scenario, predictable_plan
from capval.transient import PhasePlan
from oracles import dense_capacity_values, erlang_b

HOM_BOUNDS = SearchBounds(20, 60, 0, 30)


@pytest.fixture(scope="module")
def hom():
    return homogeneous_scenario()


@pytest.fixture(scope="module")
def hom_map(hom):
    cfg, costs = hom
    return decision_map(cfg, costs, 1.5, HOM_BOUNDS)


def toy_cfg():
    return SystemConfig(1, 0, 1, 1.0, 1.0, EnvironmentProcess.single(), [[1.0]])


class TestEquilibriumRate:
    def test_zero_costs(self, hom):
        assert equilibrium_rate(hom[0], CostParams(), 40, 8) == 0.0

    def test_erlang_two_servers(self):
        cfg = SystemConfig(2, 0, 1, 1.0, 0.0, EnvironmentProcess.single(), [[1.0]])
        assert equilibrium_rate(cfg, CostParams(theta_b=1.0)) == pytest.approx(0.2, abs=1e-12)
        assert erlang_b(2, 1.0) == pytest.approx(0.2)

    def test_homogeneous_optimum(self, hom):
        (m, r), surface = optimal_equilibrium(*hom, HOM_BOUNDS)
        assert (m, r) == (40, 8)
        assert surface.shape == (41, 31)
        assert surface[40 - 20, 8] == pytest.approx(equilibrium_rate(hom[0], hom[1], 40, 8))

    def test_unaffordable_capacity(self, hom):
        cfg, _ = hom
        costs = CostParams(0.5, 0.55, 100.0, 100.0)
        assert optimal_equilibrium(cfg, costs, SearchBounds(5, 15, 0, 5))[0] == (5, 0)

    def test_no_demand(self, hom):
        cfg, costs = hom
        idle = cfg.with_arrivals([[1e-9], [1e-9]])
        assert optimal_equilibrium(idle, costs, SearchBounds(5, 15, 0, 5))[0] == (5, 0)

    def test_empty_bounds(self):
        with pytest.raises(ConfigError):
            SearchBounds(10, 5, 0, 1)


class TestDecisionMap:
    def test_homogeneous_shape(self, hom_map):
        assert np.all(np.diff(hom_map.m[0]) >= 0)
        assert hom_map.choice(0)[0] < 40
        assert np.array_equal(hom_map.m[0], hom_map.m[1])

    def test_feasible(self, hom_map):
        xs = np.arange(hom_map.x_max + 1)
        assert np.all(hom_map.m + hom_map.r >= xs)
        assert np.all((hom_map.m >= 20) & (hom_map.m <= 60) & (hom_map.r >= 0) & (hom_map.r <= 30))
        assert np.all(hom_map.g >= 0)

    def test_toy_brute_force(self):
        cfg = toy_cfg()
        costs = CostParams(1.0, 0.7, 0.3, 0.05)
        bounds = SearchBounds(1, 3, 0, 2)
        dm = decision_map(cfg, costs, 2.0, bounds)
        for x in range(dm.x_max + 1):
            best = None
            for m in range(1, 4):
                for r in range(0, 3):
                    if m + r < x:
                        continue
                    g = dense_capacity_values(m, r, 1.0, 1.0, [[0.0]], [[1.0]],
                                              (1.0, 0.7, 0.3, 0.05), 2.0)[x]
                    if best is None or g < best[0] - 1e-12:
                        best = (g, m, r)
            assert dm.choice(x) == best[1:]
            assert dm.g[0, x] == pytest.approx(best[0], rel=1e-9)

    def test_toy_brute_force_two_environments(self):
        env = EnvironmentProcess.two_state(0.5, 1.5)
        cfg = SystemConfig(1, 0, 1, 1.0, 0.5, env, [[0.5], [3.0]])
        costs = CostParams(1.0, 0.7, 0.3, 0.05)
        dm = decision_map(cfg, costs, 1.0, SearchBounds(1, 3, 0, 2))
        assert dm.n_env == 2
        for y in (1, 2):
            for x in range(dm.x_max + 1):
                cands = []
                for m in range(1, 4):
                    for r in range(0, 3):
                        if m + r >= x:
                            g = dense_capacity_values(m, r, 1.0, 0.5, env.q_env, [[0.5], [3.0]],
                                                      (1.0, 0.7, 0.3, 0.05), 1.0)
                            cands.append((g[(y - 1) * (m + r + 1) + x], m, r))
                g, m, r = min(cands)
                assert dm.choice(x, y) == (m, r)

    def test_deterministic(self):
        cfg = toy_cfg()
        costs = CostParams(1.0, 0.7, 0.3, 0.05)
        a = decision_map(cfg, costs, 2.0, SearchBounds(1, 3, 0, 2))
        b = decision_map(cfg, costs, 2.0, SearchBounds(1, 3, 0, 2), threads=3)
        assert np.array_equal(a.m, b.m) and np.array_equal(a.r, b.r) and np.array_equal(a.g, b.g)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.1, 100.0))
    def test_cost_scaling(self, c):
        cfg = SystemConfig(2, 1, 1, 1.0, 0.5, EnvironmentProcess.two_state(0.5, 1.0), [[0.5], [2.5]])
        costs = CostParams(1.0, 0.7, 0.3, 0.05)
        bounds = SearchBounds(1, 4, 0, 3)
        a = decision_map(cfg, costs, 1.5, bounds)
        b = decision_map(cfg, costs.scaled(c), 1.5, bounds)
        assert np.array_equal(a.m, b.m) and np.array_equal(a.r, b.r)
        np.testing.assert_allclose(b.g, c * a.g, rtol=1e-9)
        assert optimal_equilibrium(cfg, costs, bounds)[0] == optimal_equilibrium(cfg, costs.scaled(c), bounds)[0]
        d1 = delta_value(cfg, costs, (2, 1), (3, 0), 1, 2, 1.5)
        d2 = delta_value(cfg, costs.scaled(c), (2, 1), (3, 0), 1, 2, 1.5)
        assert d2 == pytest.approx(c * d1, rel=1e-9)

    def test_x_max_too_large(self):
        with pytest.raises(ConfigError):
            decision_map(toy_cfg(), CostParams(1, 1, 1, 1), 1.0, SearchBounds(1, 3, 0, 2), x_max=6)

    def test_incumbent_values(self, hom):
        cfg, costs = hom
        dm = decision_map(cfg, costs, 1.5, SearchBounds(35, 45, 5, 15), incumbent=(40, 8))
        assert np.isnan(dm.g_incumbent[0, 49])
        assert np.all(dm.g[:, :49] <= dm.g_incumbent[:, :49] + 1e-12)

    def test_csv(self, tmp_path):
        dm = decision_map(toy_cfg(), CostParams(1.0, 0.7, 0.3, 0.05), 2.0, SearchBounds(1, 3, 0, 2))
        p = tmp_path / "map.csv"
        dm.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,y,m,r,g_value"
        assert len(lines) == 1 + 6


class TestDeltaValue:
    def test_same_pair(self, hom):
        assert delta_value(*hom, (40, 8), (40, 8), 10, 1, 1.5) == 0.0

    def test_antisymmetric(self, hom):
        a = delta_value(*hom, (40, 8), (35, 12), 20, 1, 1.5)
        b = delta_value(*hom, (35, 12), (40, 8), 20, 1, 1.5)
        assert a == pytest.approx(-b, abs=1e-12)

    def test_fewer_servers_at_low_occupancy(self, hom):
        assert delta_value(*hom, (45, 15), (35, 15), 10, 1, 1.5) < 0
        assert delta_value(*hom, (45, 15), (35, 15), 50, 1, 1.5) > 0

    def test_infeasible(self, hom):
        with pytest.raises(ConfigError):
            delta_value(*hom, (40, 8), (20, 0), 30, 1, 1.5)

    def test_switch_cost(self, hom):
        base = delta_value(*hom, (40, 8), (42, 8), 10, 1, 1.5)
        assert delta_value(*hom, (40, 8), (42, 8), 10, 1, 1.5, switch_cost=0.25) == pytest.approx(base + 0.5)


def test_lumping_is_exact(hom):
    cfg, costs = hom
    from capval.transient import capacity_value

    small = cfg.with_capacity(6, 2).with_arrivals([[5.0], [5.0]])
    one = lumped(small)
    assert one.n_env == 1
    for y in (1, 2):
        assert capacity_value(small, costs, 3, y, 1.0).g == pytest.approx(capacity_value(one, costs, 3, 1, 1.0).g,
                                                                          rel=1e-10)


def test_time_averaged():
    env = EnvironmentProcess.two_state(1.0, 3.0)
    cfg = SystemConfig(2, 1, 1, 1.0, 1.0, env, [[4.0], [8.0]])
    assert time_averaged(cfg).arrivals[0, 0] == pytest.approx(0.75 * 4 + 0.25 * 8)


def test_transient_policy_schedule(hom):
    cfg, costs = hom
    cfg = cfg.with_arrivals([[6.0], [6.0]])
    plan = PhasePlan((2.0, 4.0), (np.array([[4.0], [4.0]]), np.array([[8.0], [8.0]])))
    pol = transient_policy(cfg, costs, 1.5, 1.5, 4.0, SearchBounds(2, 6, 0, 3), plan=plan)
    # epochs 0 and 1.5 (window straddles the switch at 2) and 3.0 (rate 8 only)
    assert len(pol.schedule) == 3 and len(set(pol.schedule.tolist())) == 3
    assert not pol.observe_env


def test_predictable_plan_piecewise_map(hom):
    cfg, costs = hom
    window = predictable_plan(60).window(9.0, 1.5)
    dm = decision_map(cfg, costs, 1.5, SearchBounds(25, 50, 0, 15), plan=window)
    before = decision_map(cfg.with_arrivals([[60.0], [60.0]]), costs, 1.5, SearchBounds(25, 50, 0, 15))
    # anticipating the rise to 80 provisions at least as many servers
    assert np.all(dm.m[0, :60] >= before.m[0, :60])
