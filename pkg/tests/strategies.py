"""Hypothesis strategies for discrete measures and martingale pairs."""

import numpy as np
from hypothesis import strategies as st

from wmot.measures import DiscreteMeasure


@st.composite
def measures(draw, min_size=1, max_size=8, lo=-5.0, hi=5.0):
    k = draw(st.integers(min_size, max_size))
    atoms = draw(st.lists(st.floats(lo, hi, allow_nan=False, allow_infinity=False),
                          min_size=k, max_size=k, unique=True))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    w = np.array(raw) / np.sum(raw)
    return DiscreteMeasure(atoms, w, mass_tol=1e-9)


@st.composite
def martingale_pairs(draw, max_n=4, max_m=6):
    """``(mu, nu)`` with ``nu`` the second marginal of random martingale kernels."""
    seed = draw(st.integers(0, 2 ** 31 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(2, max_m))
    y = np.sort(rng.choice(np.arange(-6, 7), size=m, replace=False)).astype(float)
    x = np.sort(rng.uniform(y[0] + 0.05, y[-1] - 0.05, n))
    x = np.unique(np.round(x, 6))
    n = x.size
    mu = rng.dirichlet(np.ones(n))
    K = np.zeros((n, m))
    for i in range(n):
        q = rng.dirichlet(np.ones(m))
        lam = 0.5
        while True:
            t = (x[i] - (1 - lam) * q @ y) / lam
            w = (t - y[0]) / (y[-1] - y[0])
            if 0 <= w <= 1:
                break
            lam = min(1.0, lam + 0.1)
        K[i] = (1 - lam) * q
        K[i, 0] += lam * (1 - w)
        K[i, -1] += lam * w
    nu = mu @ K
    return DiscreteMeasure(x, mu, mass_tol=1e-9), DiscreteMeasure(y, nu, mass_tol=1e-9), K
