import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capval.model import ConfigError
from capval.scenarios import (
    ScenarioId, batch_size_pmf, batchy_rates, batchy_scenario, bursty_rates, bursty_scenario, coefficient_of_variation,
    harmonic, homogeneous_scenario, predictable_plan,
)


def test_homogeneous():
    cfg, costs = homogeneous_scenario()
    assert (cfg.m, cfg.r, cfg.ell, cfg.mu_s, cfg.mu_a) == (40, 8, 1, 2.0, 1.0)
    assert cfg.arrivals.tolist() == [[80.0], [80.0]]
    assert (costs.theta_b, costs.theta_a, costs.theta_s, costs.theta_u) == (0.5, 0.55, 0.5, 0.1)


def test_predictable_plan():
    plan = predictable_plan(60.0)
    assert plan.breakpoints == (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    assert plan.arrivals[plan.segment_at(5.0)][0, 0] == 60.0
    assert plan.arrivals[plan.segment_at(15.0)][0, 0] == 80.0
    assert plan.arrivals[plan.segment_at(45.0)][0, 0] == 60.0
    assert plan.arrivals[plan.segment_at(59.9)][0, 0] == 80.0
    with pytest.raises(ConfigError):
        predictable_plan(55.0)


@given(st.floats(0.05, 50.0), st.floats(0.0, 60.0))
def test_bursty_average_is_80(alpha, burst):
    normal, high = bursty_rates(alpha, burst)
    cfg = bursty_scenario(alpha, burst)
    avg = cfg.env.stationary() @ cfg.arrivals[:, 0]
    assert avg == pytest.approx(80.0, abs=1e-12)
    assert high - normal == pytest.approx(burst)
    assert cfg.env.q_env[0, 1] == alpha and cfg.env.q_env[1, 0] == 5.0


def test_bursty_rejects_nonpositive_rate():
    with pytest.raises(ConfigError):
        bursty_rates(100.0, 100.0)


@given(st.integers(1, 60))
def test_batchy_task_rate(ell):
    rates = batchy_rates(ell)
    assert math.fsum(k * rates[k - 1] for k in range(1, ell + 1)) == pytest.approx(80.0, abs=1e-12)
    cfg = batchy_scenario(ell)
    assert cfg.ell == ell and cfg.task_rates()[0] == pytest.approx(80.0, abs=1e-12)
    assert math.fsum(batch_size_pmf(ell)) == pytest.approx(1.0, abs=1e-12)


def test_coefficient_of_variation():
    assert coefficient_of_variation(1) == pytest.approx(0.7071, abs=1e-3)
    assert coefficient_of_variation(30) == pytest.approx(7.9322, abs=1e-3)
    covs = [coefficient_of_variation(l) for l in range(1, 31)]
    assert all(b > a for a, b in zip(covs, covs[1:]))
    assert harmonic(3) == pytest.approx(11 / 6)


def test_scenario_ids():
    assert str(ScenarioId.parse("hom")) == "hom"
    assert ScenarioId.parse("pred").plan(60.0) is not None
    b = ScenarioId.parse("bursty:5,40")
    assert (b.alpha, b.burst) == (5.0, 40.0) and str(b) == "bursty:5,40"
    np.testing.assert_allclose(b.config().arrivals[:, 0], bursty_rates(5.0, 40.0))
    assert ScenarioId.parse("batchy:30").config().ell == 30
    for bad in ("foo", "batchy:0", "bursty:1", "bursty:-1,2"):
        with pytest.raises(ConfigError):
            ScenarioId.parse(bad)
