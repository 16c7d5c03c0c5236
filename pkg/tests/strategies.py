"""Hypothesis strategies for small valid configurations."""
import numpy as np
from hypothesis import strategies as st

from capval.model import CostParams, EnvironmentProcess, SystemConfig


@st.composite
def configs(draw, max_cap=6, max_env=3, max_ell=3):
    m = draw(st.integers(1, max_cap))
    r = draw(st.integers(0, max_cap - m if max_cap > m else 0))
    ell = draw(st.integers(1, min(max_ell, m + r)))
    n_env = draw(st.integers(1, max_env))
    rate = st.floats(0.05, 5.0)
    q = np.array([[draw(rate) if i != j else 0.0 for j in range(n_env)] for i in range(n_env)])
    np.fill_diagonal(q, -q.sum(axis=1))
    arrivals = np.array([[draw(st.floats(0.0, 4.0)) for _ in range(ell)] for _ in range(n_env)])
    arrivals[0, 0] += 0.1
    mu_s = draw(st.floats(0.2, 3.0))
    mu_a = draw(st.sampled_from([0.0, 0.5, 1.7]))
    return SystemConfig(m, r, ell, mu_s, mu_a, EnvironmentProcess(q), arrivals)


costs = st.builds(
    CostParams,
    st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
)
