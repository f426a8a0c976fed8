"""Maximum-entropy plans with prescribed marginals and per-row moment constraints.

Finds the plan ``P`` closest in relative entropy to ``mu x nu`` subject to
``sum_i P_ij = nu_j`` and ``sum_j P_ij f_k(y_j) = T_ik`` for a few features
``f_k`` (the constant feature included). The solution has the exponential
form ``P_ij = mu_i nu_j exp(b_j + sum_k lam_ik f_k(y_j))``; Newton's method on
the convex dual converges to machine precision whenever the constraint set
contains a strictly positive plan. The Hessian is eliminated block-wise: each
row contributes a ``k x k`` block and only an ``m x m`` Schur complement is
factored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass
class MaxEntResult:
    plan: np.ndarray
    residual: float
    iterations: int
    converged: bool


def maxent_plan(mu, nu, features, targets, max_iter: int = 100, tol: float = 1e-13) -> MaxEntResult:
    """``features`` has shape ``(k, m)``; ``targets`` shape ``(n, k)``."""
    mu = np.asarray(mu, float)
    nu = np.asarray(nu, float)
    Fm = np.asarray(features, float)
    T = np.asarray(targets, float)
    n, m, k = mu.size, nu.size, Fm.shape[0]
    # whiten the features against nu (the solution is unchanged); dependent
    # features are dropped, so their targets are not enforced
    lam_g, U = np.linalg.eigh((Fm * nu[None, :]) @ Fm.T)
    keep = lam_g > 1e-13 * lam_g.max()
    A = U[:, keep] / np.sqrt(lam_g[keep])[None, :]
    Fm = A.T @ Fm
    T = T @ A
    k = Fm.shape[0]
    base = np.log(mu)[:, None] + np.log(nu)[None, :]
    lam = np.zeros((n, k))
    b = np.zeros(m)

    def plan(lam, b):
        with np.errstate(over="ignore"):
            return np.exp(base + lam @ Fm + b[None, :])

    def dual(P, lam, b):
        return float(P.sum() - np.sum(lam * T) - b @ nu)

    P = plan(lam, b)
    f = dual(P, lam, b)
    best = np.inf
    stall = 0
    err = np.inf
    it = 0
    for it in range(max_iter + 1):
        R = P @ Fm.T - T
        cres = P.sum(0) - nu
        err = float(max(np.abs(R).max(), np.abs(cres).max()))
        if err <= tol or it == max_iter:
            break
        if err < 0.5 * best:
            best, stall = err, 0
        else:
            stall += 1
            if stall >= 3 and best < 1e-11:
                break
        K = np.einsum("ij,aj,bj->iab", P, Fm, Fm)
        Kinv = np.linalg.pinv(K, hermitian=True)
        B = P[:, None, :] * Fm[None, :, :]
        C = np.einsum("iab,ibm->iam", Kinv, B)
        S = np.diag(P.sum(0)) - B.reshape(n * k, m).T @ C.reshape(n * k, m)
        S[np.diag_indices_from(S)] += 1e-13 * np.abs(np.diag(S)).max()
        KR = np.einsum("iab,ib->ia", Kinv, R)
        rb = cres - KR.ravel() @ B.reshape(n * k, m)
        try:
            db = linalg.cho_solve(linalg.cho_factor(S), -rb)
        except (linalg.LinAlgError, ValueError):
            try:
                db = linalg.lstsq(S, -rb)[0]
            except (linalg.LinAlgError, ValueError):
                break
        if not np.all(np.isfinite(db)):
            break
        dl = -KR - (C.reshape(n * k, m) @ db).reshape(n, k)
        slope = float(np.sum(R * dl) + cres @ db)
        t = 1.0
        while t > 1e-12:
            l2, b2 = lam + t * dl, b + t * db
            P2 = plan(l2, b2)
            f2 = dual(P2, l2, b2)
            if np.isfinite(f2) and f2 <= f + 1e-4 * t * slope + 1e-15 * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            break
        lam, b, P, f = l2, b2, P2, f2
    return MaxEntResult(P, err, it, err <= max(tol, 1e-10))
