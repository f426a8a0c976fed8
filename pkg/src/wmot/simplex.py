"""Dense revised simplex with Bland's rule for equality-form LPs.

Solves ``min c @ x`` subject to ``A @ x = b, x >= 0`` by a two-phase method.
The explicit basis inverse is updated by eta products and refactored
periodically. Bland's smallest-index rule guarantees termination on
degenerate transport polytopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
REFACTOR_EVERY = 64


@dataclass
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None
    value: float
    duals: np.ndarray | None
    basis: np.ndarray | None
    iterations: int


class _Tableau:
    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = np.array(basis, dtype=int)
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since = 0

    def pivot(self, k, j, u):
        # basis position k leaves, column j enters; u = Binv @ A[:, j]
        piv = u[k]
        row = self.Binv[k] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[k] = row
        theta = self.xB[k] / piv
        self.xB -= theta * u
        self.xB[k] = theta
        self.basis[k] = j
        self.since += 1
        if self.since >= REFACTOR_EVERY:
            self.refactor()


def _bland_loop(tab: _Tableau, c: np.ndarray, allowed: np.ndarray, opt_tol: float,
                max_iter: int) -> tuple[str, int]:
    it = 0
    while it < max_iter:
        lam = c[tab.basis] @ tab.Binv
        d = c - lam @ tab.A
        d[tab.basis] = 0.0
        cand = np.flatnonzero((d < -opt_tol) & allowed)
        if cand.size == 0:
            return "optimal", it
        j = int(cand[0])
        u = tab.Binv @ tab.A[:, j]
        pos = np.flatnonzero(u > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        xb = np.maximum(tab.xB[pos], 0.0)
        ratios = xb / u[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + PIVOT_TOL * max(1.0, rmin)]
        k = int(ties[np.argmin(tab.basis[ties])])
        tab.pivot(k, j, u)
        it += 1
    return "iteration_limit", it


def solve_equality_lp(A, b, c, max_iter: int = 100000, feas_tol: float = FEAS_TOL) -> SimplexResult:
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    r, N = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # phase 1 on [A | I]
    A1 = np.hstack([A, np.eye(r)])
    c1 = np.concatenate([np.zeros(N), np.ones(r)])
    tab = _Tableau(A1, b, np.arange(N, N + r))
    allowed = np.ones(N + r, dtype=bool)
    status, it1 = _bland_loop(tab, c1, allowed, PIVOT_TOL, max_iter)
    if status != "optimal":
        return SimplexResult(status, None, np.nan, None, None, it1)
    tab.refactor()
    infeas = float(np.sum(np.maximum(tab.xB, 0.0)[tab.basis >= N]))
    if infeas > feas_tol * max(1.0, np.abs(b).max(initial=0.0)):
        return SimplexResult("infeasible", None, np.nan, None, None, it1)

    # drive artificials out of the basis or drop the redundant rows they sit on
    keep_rows = np.ones(r, dtype=bool)
    keep_pos = np.ones(r, dtype=bool)
    for k in range(r):
        if tab.basis[k] < N:
            continue
        rowk = tab.Binv[k] @ A1[:, :N]
        rowk[tab.basis[tab.basis < N]] = 0.0
        cand = np.flatnonzero(np.abs(rowk) > 1e-9)
        if cand.size:
            j = int(cand[np.argmax(np.abs(rowk[cand]))])
            tab.pivot(k, j, tab.Binv @ A1[:, j])
        else:
            # row k of Binv combines the constraints to zero; the artificial's
            # own row carries coefficient one there, so that row is redundant
            keep_rows[tab.basis[k] - N] = False
            keep_pos[k] = False
    rows_idx = np.flatnonzero(keep_rows)
    basis = tab.basis[keep_pos]
    A2 = A[rows_idx]
    b2 = b[rows_idx]
    tab2 = _Tableau(A2, b2, basis)
    allowed2 = np.ones(N, dtype=bool)
    scale = max(1.0, np.abs(c).max(initial=0.0))
    status, it2 = _bland_loop(tab2, c, allowed2, PIVOT_TOL * scale, max_iter)
    tab2.refactor()
    x = np.zeros(N)
    x[tab2.basis] = np.maximum(tab2.xB, 0.0)
    lam_red = c[tab2.basis] @ tab2.Binv
    duals = np.zeros(r)
    duals[rows_idx] = lam_red
    duals *= sign
    return SimplexResult(status, x, float(c @ x), duals, tab2.basis.copy(), it1 + it2)
