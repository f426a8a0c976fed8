"""Discrete couplings in disintegrated form and the adapted Wasserstein distance."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .measures import DiscreteMeasure, _comonotone_cost, mean

MARTINGALE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DiscreteCoupling:
    """A plan ``pi(dx, dy) = mu(dx) pi_x(dy)`` stored as source plus kernels."""

    source: DiscreteMeasure
    kernels: tuple[DiscreteMeasure, ...]

    def __post_init__(self):
        if not isinstance(self.kernels, tuple):
            object.__setattr__(self, "kernels", tuple(self.kernels))
        if len(self.kernels) != len(self.source):
            raise ValidationError("one kernel per source atom required")

    def __eq__(self, other):
        if not isinstance(other, DiscreteCoupling):
            return NotImplemented
        return self.source == other.source and self.kernels == other.kernels

    @property
    def x(self) -> np.ndarray:
        return self.source.atoms

    @property
    def mu(self) -> np.ndarray:
        return self.source.weights

    def y_grid(self) -> np.ndarray:
        return np.unique(np.concatenate([k.atoms for k in self.kernels]))

    def to_matrix(self, y_grid: np.ndarray | None = None):
        """Dense joint weights ``(x, y, P)`` on ``y_grid`` (union of kernel supports by default)."""
        y = self.y_grid() if y_grid is None else np.asarray(y_grid, float)
        P = np.zeros((len(self.kernels), y.size))
        for i, k in enumerate(self.kernels):
            idx = np.searchsorted(y, k.atoms)
            if np.any(idx >= y.size) or np.any(y[np.minimum(idx, y.size - 1)] != k.atoms):
                raise ValidationError("kernel atom missing from the target grid")
            P[i, idx] = self.mu[i] * k.weights
        return self.x, y, P

    def kernel_matrix(self, y_grid: np.ndarray | None = None):
        """Row-stochastic kernel weights on a common grid."""
        x, y, P = self.to_matrix(y_grid)
        return x, y, P / self.mu[:, None]


def kernels_from_rows(y: np.ndarray, W: np.ndarray) -> tuple[DiscreteMeasure, ...]:
    out = []
    for row in W:
        nz = row > 0
        w = row[nz]
        out.append(DiscreteMeasure(y[nz], w / math.fsum(w)))
    return tuple(out)


def from_matrix(x_atoms, y_atoms, joint) -> DiscreteCoupling:
    """Disintegrate a joint weight matrix with respect to its first marginal."""
    x = np.asarray(x_atoms, float).ravel()
    y = np.asarray(y_atoms, float).ravel()
    P = np.asarray(joint, float)
    if P.shape != (x.size, y.size):
        raise ValidationError(f"matrix shape {P.shape} does not match atoms ({x.size}, {y.size})")
    if not np.all(np.isfinite(P)):
        raise ValidationError("non-finite matrix entry")
    if np.any(P < 0):
        raise ValidationError("negative matrix entry")
    total = math.fsum(P.ravel())
    if total <= 0:
        raise ValidationError("zero total mass")
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"total mass {total!r} differs from 1")
    # duplicate coordinates describe the same point of the plane: merge them
    if np.unique(x).size != x.size or np.any(np.diff(x) <= 0):
        xs, inv = np.unique(x, return_inverse=True)
        Q = np.zeros((xs.size, y.size))
        np.add.at(Q, inv, P)
        x, P = xs, Q
    if np.unique(y).size != y.size or np.any(np.diff(y) <= 0):
        ys, inv = np.unique(y, return_inverse=True)
        Q = np.zeros((x.size, ys.size))
        np.add.at(Q.T, inv, P.T)
        y, P = ys, Q
    rows = np.array([math.fsum(r) for r in P])
    keep = rows > 0
    x, P, rows = x[keep], P[keep], rows[keep]
    source = DiscreteMeasure(x, rows / math.fsum(rows))
    kernels = kernels_from_rows(y, P / rows[:, None])
    return DiscreteCoupling(source, kernels)


def product_kernel_coupling(mu: DiscreteMeasure, kernels: Sequence[DiscreteMeasure]) -> DiscreteCoupling:
    return DiscreteCoupling(mu, tuple(kernels))


def identity_coupling(m: DiscreteMeasure) -> DiscreteCoupling:
    return DiscreteCoupling(m, tuple(DiscreteMeasure.dirac(a) for a in m.atoms))


def second_marginal(pi: DiscreteCoupling) -> DiscreteMeasure:
    atoms = np.concatenate([k.atoms for k in pi.kernels])
    w = np.concatenate([mi * k.weights for mi, k in zip(pi.mu, pi.kernels)])
    y, inv = np.unique(atoms, return_inverse=True)
    acc = [[] for _ in range(y.size)]
    for j, wt in zip(inv.tolist(), w.tolist()):
        acc[j].append(wt)
    weights = np.array([math.fsum(a) for a in acc])
    return DiscreteMeasure(y, weights / math.fsum(weights), mass_tol=1e-9)


@dataclass(frozen=True)
class MartingaleCheck:
    holds: bool
    max_violation: float

    def __bool__(self) -> bool:
        return self.holds


def is_martingale(pi: DiscreteCoupling, tol: float = MARTINGALE_TOL) -> MartingaleCheck:
    viol = max(abs(mean(k) - x) for x, k in zip(pi.x.tolist(), pi.kernels))
    return MartingaleCheck(viol <= tol, float(viol))


def kernel_cost_matrix(k1: Sequence[DiscreteMeasure], k2: Sequence[DiscreteMeasure],
                       r: float = 1.0) -> np.ndarray:
    """Matrix of ``W_r^r`` between every pair of kernels."""
    n1, n2 = len(k1), len(k2)
    if r == 1:
        # integral of |F - G| on a common grid, one source row at a time
        grid = np.unique(np.concatenate([k.atoms for k in (*k1, *k2)]))
        dy = np.diff(grid)
        F1 = _cdf_rows(k1, grid)[:, :-1]
        F2 = _cdf_rows(k2, grid)[:, :-1]
        out = np.empty((n1, n2))
        for i in range(n1):
            out[i] = np.abs(F1[i][None, :] - F2) @ dy
        return out
    out = np.empty((n1, n2))
    c2 = [(k.atoms, k.cumulative) for k in k2]
    for i, a in enumerate(k1):
        ai, ci = a.atoms, a.cumulative
        for l, (bl, cl) in enumerate(c2):
            out[i, l] = _comonotone_cost(ai, ci, bl, cl, r)
    return out


def _cdf_rows(kernels, grid):
    F = np.zeros((len(kernels), grid.size))
    for i, k in enumerate(kernels):
        F[i, np.searchsorted(grid, k.atoms)] = k.weights
    np.cumsum(F, axis=1, out=F)
    return F


def adapted_wasserstein(pi: DiscreteCoupling, pi2: DiscreteCoupling, r: float = 1.0,
                        backend: str = "auto") -> float:
    """AW_r: outer transport on source atoms with cost ``|x - x'|^r + W_r^r(pi_x, pi'_x')``."""
    from .transport_lp import solve_linear_ot

    if r < 1:
        from .errors import DomainError
        raise DomainError("adapted Wasserstein order must be at least 1")
    cost = np.abs(pi.x[:, None] - pi2.x[None, :]) ** r
    cost = cost + kernel_cost_matrix(pi.kernels, pi2.kernels, r)
    res = solve_linear_ot(pi.source, pi2.source, cost, backend=backend)
    return max(res.value, 0.0) ** (1.0 / r)


# ---------------------------------------------------------------------------
# JSON io


def coupling_to_dict(pi: DiscreteCoupling) -> dict:
    return {
        "x_atoms": pi.x.tolist(),
        "mu_weights": pi.mu.tolist(),
        "kernels": [{"atoms": k.atoms.tolist(), "weights": k.weights.tolist()} for k in pi.kernels],
    }


def coupling_from_dict(d: dict) -> DiscreteCoupling:
    try:
        source = DiscreteMeasure(d["x_atoms"], d["mu_weights"], mass_tol=1e-9)
        if len(source) != len(d["x_atoms"]):
            raise ValidationError("source atoms must be distinct with positive weight")
        kernels = tuple(DiscreteMeasure(k["atoms"], k["weights"], mass_tol=1e-9) for k in d["kernels"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed coupling: {exc}") from None
    return DiscreteCoupling(source, kernels)


def dumps_coupling(pi: DiscreteCoupling) -> str:
    return json.dumps(coupling_to_dict(pi), indent=1)


def loads_coupling(text: str) -> DiscreteCoupling:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from None
    return coupling_from_dict(d)


def read_coupling_json(path) -> DiscreteCoupling:
    with open(path, encoding="utf-8") as fh:
        return loads_coupling(fh.read())


def write_coupling_json(pi: DiscreteCoupling, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_coupling(pi))
        fh.write("\n")
