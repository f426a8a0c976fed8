"""Semi-discrete dual Newton method for the Gaussian-anchor martingale problem.

For ``C(x, p) = W_2^2(p, N(0,1))`` the martingale problem has the concave dual

    D(b, h) = sum_j b_j nu_j + sum_i mu_i h_i x_i
              + sum_i mu_i (1 + E[min_j (y_j^2 - b_j - h_i y_j - 2 y_j Z)]),

with ``Z`` standard normal. The minimizing index partitions the line into
cells shared by all rows up to a shift of ``-h_i / 2``: row ``i`` of the
optimal plan puts ``Phi(tau_j - h_i/2) - Phi(tau_{j-1} - h_i/2)`` on atom
``j``. Newton ascent on ``(b, h)`` converges quadratically when the pair is
irreducible, i.e. when the optimal kernels charge every atom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtr, ndtri

from .measures import norm_pdf

# acceptable marginal residual once Newton stops making progress
RESIDUAL_FLOOR = 1e-9


@dataclass
class DualNewtonResult:
    plan: np.ndarray  # joint weights
    b: np.ndarray
    h: np.ndarray
    residual: float
    iterations: int
    converged: bool


def lower_envelope(y: np.ndarray, c: np.ndarray):
    """Active indices and breakpoints of ``min_j (c_j - 2 y_j z)`` for increasing ``y``.

    Lines with larger ``y`` win for larger ``z``; ``breaks[k]`` separates
    ``active[k]`` from ``active[k + 1]``.
    """
    act: list[int] = []
    brk: list[float] = []
    for j in range(y.size):
        while act:
            k = act[-1]
            t = (c[j] - c[k]) / (2.0 * (y[j] - y[k]))
            if brk and t <= brk[-1]:
                act.pop()
                brk.pop()
            else:
                break
        if act:
            k = act[-1]
            brk.append((c[j] - c[k]) / (2.0 * (y[j] - y[k])))
        act.append(j)
    return np.array(act, dtype=int), np.array(brk)


class _State:
    def __init__(self, x, mu, y, nu, b, h):
        c = y * y - b
        self.act, self.brk = lower_envelope(y, c)
        n = x.size
        self.u = self.brk[None, :] - 0.5 * h[:, None]
        lo = np.concatenate([np.full((n, 1), -np.inf), self.u], axis=1)
        hi = np.concatenate([self.u, np.full((n, 1), np.inf)], axis=1)
        # cell masses from whichever tail keeps relative accuracy
        mass = np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
        self.P = np.zeros((n, y.size))
        self.P[:, self.act] = np.maximum(mass, 0.0)
        dens = np.concatenate([np.zeros((n, 1)), norm_pdf(self.u), np.zeros((n, 1))], axis=1)
        ya = y[self.act]
        ca = c[self.act]
        inner = ((ca[None, :] - h[:, None] * ya[None, :]) * self.P[:, self.act]).sum(1) \
            - 2.0 * ((dens[:, :-1] - dens[:, 1:]) * ya[None, :]).sum(1)
        self.value = float(b @ nu + (mu * h * x).sum() + (mu * (1.0 + inner)).sum())
        self.grad_b = nu - mu @ self.P
        self.grad_h = mu * x - mu * (self.P @ y)

    @property
    def residual(self) -> float:
        return float(max(np.abs(self.grad_b).max(), np.abs(self.grad_h).max()))


def canonical_start(x, y, nu):
    """``b`` matching ``nu`` exactly when ``h = 0``; ``h`` fitting each barycenter."""
    tau = ndtri(np.clip(np.cumsum(nu)[:-1], 1e-300, 1 - 1e-16))
    c = np.empty(y.size)
    c[0] = y[0] ** 2
    c[1:] = y[0] ** 2 + np.cumsum(2.0 * np.diff(y) * tau)
    b = y * y - c
    return b, fit_shifts(x, y, b)


def fit_shifts(x, y, b, iters: int = 100):
    """Per-row ``h`` making each kernel's mean equal ``x_i`` (bisection)."""
    act, brk = lower_envelope(y, y * y - b)
    ya = y[act]
    lo = np.full(x.size, -80.0)
    hi = np.full(x.size, 80.0)
    for _ in range(iters):
        h = 0.5 * (lo + hi)
        u = brk[None, :] - 0.5 * h[:, None]
        F = np.concatenate([np.zeros((x.size, 1)), ndtr(u), np.ones((x.size, 1))], axis=1)
        m = np.diff(F, axis=1) @ ya
        up = m < x
        lo = np.where(up, h, lo)
        hi = np.where(up, hi, h)
    return 0.5 * (lo + hi)


def _hessian(mu, y, st: _State, m: int):
    act = st.act
    A = act.size
    n = mu.size
    if A < 2:
        return None
    ph = norm_pdf(st.u)
    dy = y[act[1:]] - y[act[:-1]]
    s = mu @ ph
    E = np.zeros((A - 1, m))
    E[np.arange(A - 1), act[:-1]] = 1.0
    E[np.arange(A - 1), act[1:]] = -1.0
    Hbb = -(E.T * (s / (2.0 * dy))) @ E
    Hbh = (E.T @ (0.5 * ph.T)) * mu[None, :]
    Hhh = np.diag(-0.5 * mu * (ph * dy[None, :]).sum(1))
    return np.block([[Hbb, Hbh], [Hbh.T, Hhh]])


def dual_newton(x, mu, y, nu, b=None, h=None, max_iter: int = 60, tol: float = 1e-12) -> DualNewtonResult:
    """Newton ascent with backtracking; ``b[0]`` and ``h[0]`` fix the two-dimensional gauge."""
    x = np.asarray(x, float)
    mu = np.asarray(mu, float)
    y = np.asarray(y, float)
    nu = np.asarray(nu, float)
    n, m = x.size, y.size
    if b is None or h is None:
        b, h = canonical_start(x, y, nu)
    st = _State(x, mu, y, nu, b, h)
    keep = np.concatenate([np.arange(1, m), m + np.arange(1, n)])
    best = st.residual
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        if st.residual <= tol:
            break
        H = _hessian(mu, y, st, m)
        if H is None:
            break
        g = np.concatenate([st.grad_b, st.grad_h])
        Hr = -H[np.ix_(keep, keep)]
        Hr[np.diag_indices_from(Hr)] += 1e-14 * max(1.0, np.abs(Hr).max())
        step = np.zeros(n + m)
        try:
            step[keep] = linalg.cho_solve(linalg.cho_factor(Hr), g[keep])
        except (linalg.LinAlgError, ValueError):
            step[keep] = linalg.lstsq(Hr, g[keep])[0]
        t = 1.0
        slope = float(g @ step)
        while t > 1e-12:
            trial = _State(x, mu, y, nu, b + t * step[:m], h + t * step[m:])
            if trial.value >= st.value + 1e-4 * t * slope - 1e-15 * max(1.0, abs(st.value)):
                break
            t *= 0.5
        else:
            break
        b, h, st = b + t * step[:m], h + t * step[m:], trial
        # residuals bottom out near machine precision on large grids
        if st.residual < 0.5 * best:
            best, stall = st.residual, 0
        else:
            stall += 1
            if stall >= 3 and best < RESIDUAL_FLOOR:
                break
    return DualNewtonResult(mu[:, None] * st.P, b, h, st.residual, it,
                            st.residual <= max(tol, RESIDUAL_FLOOR))
