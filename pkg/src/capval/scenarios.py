"""Canonical parameterizations of the four illustrative experiments."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .model import ConfigError, CostParams, EnvironmentProcess, SystemConfig
from .transient import PhasePlan

BASE_RATE = 80.0
LOW_RATE = 60.0
BURST_EXIT_RATE = 5.0
# (m, r) used only as placeholders in templates; policies resize them
TEMPLATE_CAPACITY = (40, 8)


def homogeneous_costs() -> CostParams:
    return CostParams(theta_b=0.5, theta_a=0.55, theta_s=0.5, theta_u=0.1)


def homogeneous_scenario(rate: float = BASE_RATE) -> tuple[SystemConfig, CostParams]:
    """Unit tasks at ``rate``, mean service 1/2, mean patience 1; a two-state environment with equal rates."""
    m, r = TEMPLATE_CAPACITY
    cfg = SystemConfig(m, r, 1, 2.0, 1.0, EnvironmentProcess.two_state(1.0, 1.0), [[rate], [rate]])
    return cfg, homogeneous_costs()


def predictable_plan(horizon: float = 60.0) -> PhasePlan:
    """Rate 60 on [0, 10), [20, 30), [40, 50), ... and 80 on the other ten-unit blocks."""
    n = horizon / 10.0
    if n < 1 or abs(n - round(n)) > 1e-9:
        raise ConfigError("horizon must be a positive multiple of 10")
    n = int(round(n))
    rates = [LOW_RATE if i % 2 == 0 else BASE_RATE for i in range(n)]
    return PhasePlan(
        tuple(10.0 * (i + 1) for i in range(n)),
        tuple(np.array([[v], [v]]) for v in rates),
    )


def bursty_rates(alpha: float, burst: float) -> tuple[float, float]:
    """(normal, burst) arrival rates.

    The normal rate is lowered by ``burst * alpha / (alpha + 5)`` and a burst
    raises it by ``burst``, which keeps the long-run average at 80.
    """
    if not alpha > 0 or not burst >= 0:
        raise ConfigError("need alpha > 0 and burst size >= 0")
    normal = BASE_RATE - burst * alpha / (alpha + BURST_EXIT_RATE)
    if not normal > 0:
        raise ConfigError(f"normal-regime rate {normal} is not positive")
    return normal, normal + burst


def bursty_scenario(alpha: float, burst: float) -> SystemConfig:
    normal, high = bursty_rates(alpha, burst)
    base, _ = homogeneous_scenario()
    env = EnvironmentProcess.two_state(alpha, BURST_EXIT_RATE)
    return SystemConfig(base.m, base.r, 1, base.mu_s, base.mu_a, env, [[normal], [high]])


def harmonic(ell: int) -> float:
    return math.fsum(1.0 / k for k in range(1, ell + 1))


def batchy_rates(ell: int, rate: float = BASE_RATE) -> np.ndarray:
    """Rate of ``k``-batches is ``rate / (k ell)``, so tasks still arrive at ``rate``."""
    if ell < 1:
        raise ConfigError("maximum batch size must be at least 1")
    k = np.arange(1, ell + 1)
    return rate / (k * ell)


def batchy_scenario(ell: int, rate: float = BASE_RATE) -> SystemConfig:
    base, _ = homogeneous_scenario()
    return SystemConfig(
        base.m, base.r, ell, base.mu_s, base.mu_a, EnvironmentProcess.single(), batchy_rates(ell, rate)[None, :]
    )


def batch_size_pmf(ell: int) -> np.ndarray:
    k = np.arange(1, ell + 1)
    return 1.0 / (k * harmonic(ell))


def coefficient_of_variation(ell: int) -> float:
    """Coefficient of variation of an arbitrary job's total work under the harmonic batch law."""
    if ell < 1:
        raise ConfigError("maximum batch size must be at least 1")
    return math.sqrt(harmonic(ell) * (ell + 2) / 2.0 - 1.0)


@dataclass(frozen=True)
class ScenarioId:
    kind: str
    alpha: float = 0.0
    burst: float = 0.0
    ell: int = 1

    @classmethod
    def parse(cls, text: str) -> "ScenarioId":
        """Accepts ``hom``, ``pred``, ``bursty:ALPHA,BURST`` and ``batchy:ELL``."""
        text = text.strip()
        if text in ("hom", "pred"):
            return cls(text)
        m = re.fullmatch(r"bursty:\s*([^,]+),\s*(.+)", text)
        if m:
            sid = cls("bursty", alpha=float(m.group(1)), burst=float(m.group(2)))
            bursty_rates(sid.alpha, sid.burst)
            return sid
        m = re.fullmatch(r"batchy:\s*(\d+)", text)
        if m:
            sid = cls("batchy", ell=int(m.group(1)))
            if sid.ell < 1:
                raise ConfigError("maximum batch size must be at least 1")
            return sid
        raise ConfigError(f"unknown scenario {text!r}")

    def config(self) -> SystemConfig:
        if self.kind in ("hom", "pred"):
            return homogeneous_scenario()[0]
        if self.kind == "bursty":
            return bursty_scenario(self.alpha, self.burst)
        return batchy_scenario(self.ell)

    def plan(self, horizon: float) -> PhasePlan | None:
        return predictable_plan(horizon) if self.kind == "pred" else None

    def __str__(self) -> str:
        if self.kind == "bursty":
            return f"bursty:{self.alpha:g},{self.burst:g}"
        if self.kind == "batchy":
            return f"batchy:{self.ell}"
        return self.kind
