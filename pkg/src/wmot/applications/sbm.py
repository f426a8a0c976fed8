"""Stretched Brownian motion: optimizer, value identity, closed-form simulation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..couplings import DiscreteCoupling, adapted_wasserstein, second_marginal
from ..costs import GaussAnchorCost
from ..errors import DomainError, ValidationError
from ..measures import DiscreteMeasure, ndtri_tail, second_moment
from ..solver import SolveOptions, SolverReport, solve_wmot

T1_CUTOFF = 1e-12


@dataclass
class SbmModel:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    coupling: DiscreteCoupling
    value: float
    mt: float
    z_grids: tuple[np.ndarray, ...]
    report: SolverReport

    def to_dict(self) -> dict:
        return {"value": self.value, "mt": self.mt, **self.report.to_dict()}


def _z_grid(k: DiscreteMeasure) -> np.ndarray:
    c = np.cumsum(k.weights)[:-1]
    tail = np.cumsum(k.weights[::-1])[::-1][1:]
    return ndtri_tail(c, tail)


def sbm_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, opts: SolveOptions | None = None) -> SbmModel:
    """Optimal martingale coupling for ``W_2^2(pi_x, N(0,1))`` and the value ``MT(mu, nu)``."""
    opts = opts or SolveOptions()
    report = solve_wmot(mu, nu, GaussAnchorCost(2.0), opts)
    V = report.value
    mt = 0.5 * (1.0 + second_moment(nu) - V)
    grids = tuple(_z_grid(k) for k in report.coupling.kernels)
    return SbmModel(mu, nu, report.coupling, V, mt, grids, report)


def mt_identity(model: SbmModel) -> float:
    """``MT`` recomputed from the solver value."""
    return 0.5 * (1.0 + second_moment(model.nu) - model.report.value)


@dataclass
class PathEnsemble:
    times: np.ndarray
    source_index: np.ndarray
    values: np.ndarray  # (n_paths, len(times))
    brownian: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_id", "t", "value"])
        ts = [repr(float(t)) for t in self.times]
        for p, row in enumerate(self.values.tolist()):
            for t, v in zip(ts, row):
                w.writerow([p, t, repr(v)])
        return buf.getvalue()


def _validate_times(times) -> np.ndarray:
    t = np.asarray(times, float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
        raise ValidationError("time grid must increase from 0 to 1")
    return t


def _conditional_mean(y: np.ndarray, z: np.ndarray, B: np.ndarray, t: float) -> np.ndarray:
    """``E[F^{-1}(Phi(B_1)) | B_t]`` for one kernel, by summation by parts."""
    if y.size == 1:
        return np.full(B.shape, y[0])
    if 1.0 - t < T1_CUTOFF:
        return y[np.searchsorted(z, B, side="left")]
    s = math.sqrt(1.0 - t)
    dy = np.diff(y)
    out = np.full(B.shape, y[-1])
    chunk = max(1, 2_000_000 // z.size)
    for lo in range(0, B.size, chunk):
        arg = (z[None, :] - B[lo:lo + chunk, None]) / s
        out[lo:lo + chunk] -= ndtr(arg) @ dy
    return out


def sbm_simulate(model: SbmModel, times, n_paths: int, seed: int | None = 0) -> PathEnsemble:
    """Simulate ``M_t = E[F^{-1}_{pi_X}(Phi(B_1)) | X, B_s, s <= t]`` on a time grid."""
    t = _validate_times(times)
    if n_paths < 1:
        raise ValidationError("n_paths must be positive")
    sx, sb = np.random.SeedSequence(seed).spawn(2)
    u = np.random.default_rng(sx).random(n_paths)
    # inverse CDF of mu, left-continuous
    idx = np.minimum(np.searchsorted(model.mu.cumulative, u, side="left"), len(model.mu) - 1)
    incr = np.random.default_rng(sb).standard_normal((n_paths, t.size - 1)) * np.sqrt(np.diff(t))[None, :]
    B = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(incr, axis=1)], axis=1)
    M = np.empty_like(B)
    for i, k in enumerate(model.coupling.kernels):
        rows = np.flatnonzero(idx == i)
        if rows.size == 0:
            continue
        y, z = k.atoms, model.z_grids[i]
        for c, tc in enumerate(t):
            M[rows, c] = _conditional_mean(y, z, B[rows, c], float(tc))
    return PathEnsemble(t, idx, M, B)


@dataclass(frozen=True)
class ProcessBound:
    endpoint_aw: float
    bound: float
    multiplier: float

    def to_dict(self) -> dict:
        return {"endpoint_aw": self.endpoint_aw, "bound": self.bound, "multiplier": self.multiplier}


def stability_multiplier(r: float) -> float:
    return (r / (r - 1.0)) ** r


def sbm_process_bound(model_a: SbmModel, model_b: SbmModel, r: float = 2.0) -> ProcessBound:
    """Bound ``(r/(r-1))^r AW_r^r`` on the adapted distance between the two path laws."""
    if r < 2:
        raise DomainError("the process bound needs r >= 2")
    aw = adapted_wasserstein(model_a.coupling, model_b.coupling, r)
    mult = stability_multiplier(r)
    return ProcessBound(aw, mult * aw ** r, mult)
