"""Discrete probability measures on the real line.

Construction, moments, quantiles, one-dimensional Wasserstein distances,
convex-order testing and quantization of continuous laws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .errors import DomainError, NumericError, ValidationError

MERGE_TOL = 1e-12
MASS_TOL = 1e-12
ORDER_TOL = 1e-9

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def ndtri_tail(c, tail):
    """Standard normal quantile at ``c`` using ``tail = 1 - c`` above one half.

    Passing the upper tail separately keeps full relative accuracy near 1.
    """
    c = np.asarray(c, dtype=float)
    tail = np.asarray(tail, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(c <= 0.5, ndtri(c), -ndtri(tail))


class DiscreteMeasure:
    """Finitely supported probability measure with strictly increasing atoms.

    Atoms closer than ``merge_tol`` are merged into their weighted mean, which
    keeps the barycenter unchanged. Zero weights are dropped; negative weights
    or a total mass away from one raise :class:`ValidationError`.
    """

    __slots__ = ("atoms", "weights")

    def __init__(self, atoms, weights, *, merge_tol: float = MERGE_TOL,
                 mass_tol: float = MASS_TOL):
        a = np.array(atoms, dtype=float).ravel()
        w = np.array(weights, dtype=float).ravel()
        if a.shape != w.shape:
            raise ValidationError("atoms and weights differ in length")
        if a.size == 0:
            raise ValidationError("a measure needs at least one atom")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(w))):
            raise ValidationError("atoms and weights must be finite")
        if np.any(w < 0):
            raise ValidationError("negative weight")
        keep = w > 0
        a, w = a[keep], w[keep]
        if a.size == 0:
            raise ValidationError("zero total mass")
        if abs(math.fsum(w) - 1.0) > mass_tol:
            raise ValidationError(f"weights sum to {math.fsum(w)!r}, not 1")
        if np.any(np.diff(a) <= 0):
            order = np.argsort(a, kind="stable")
            a, w = a[order], w[order]
        if a.size > 1 and np.any(np.diff(a) < merge_tol):
            a, w = _merge(a, w, merge_tol)
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    def __len__(self) -> int:
        return self.atoms.size

    def __repr__(self) -> str:
        return f"DiscreteMeasure(atoms={self.atoms.tolist()}, weights={self.weights.tolist()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (self.atoms.shape == other.atoms.shape
                and bool(np.array_equal(self.atoms, other.atoms))
                and bool(np.array_equal(self.weights, other.weights)))

    def __hash__(self) -> int:
        return hash((self.atoms.tobytes(), self.weights.tobytes()))

    @classmethod
    def dirac(cls, x: float) -> "DiscreteMeasure":
        return cls([x], [1.0])

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        a = np.asarray(atoms, dtype=float)
        return cls(a, np.full(a.size, 1.0 / a.size))

    @property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def cdf(self, t):
        """Right-continuous distribution function."""
        idx = np.searchsorted(self.atoms, t, side="right")
        c = np.concatenate([[0.0], self.cumulative])
        return c[idx]


def _merge(a: np.ndarray, w: np.ndarray, tol: float):
    group = np.concatenate([[0], np.cumsum(np.diff(a) >= tol)])
    first = np.searchsorted(group, np.arange(group[-1] + 1))
    wsum = np.bincount(group, weights=w)
    # offsets from the group's first atom: exact duplicates keep their value bit for bit
    off = np.bincount(group, weights=w * (a - a[first][group]))
    return a[first] + off / wsum, wsum


def mean(m: DiscreteMeasure) -> float:
    return math.fsum(m.atoms * m.weights)


def second_moment(m: DiscreteMeasure) -> float:
    return math.fsum(m.atoms * m.atoms * m.weights)


def quantile(m: DiscreteMeasure, u):
    """Left-continuous inverse ``inf{x : F(x) >= u}`` for ``u`` in (0, 1]."""
    uu = np.asarray(u, dtype=float)
    if np.any(~(uu > 0)) or np.any(uu > 1):
        raise DomainError("quantile level must lie in (0, 1]")
    idx = np.searchsorted(m.cumulative, uu, side="left")
    out = m.atoms[np.minimum(idx, m.atoms.size - 1)]
    return float(out) if out.ndim == 0 else out


def wasserstein_1d(m1: DiscreteMeasure, m2: DiscreteMeasure, r: float = 1.0) -> float:
    """W_r through the comonotone coupling, summed exactly over the merged cumulative grid."""
    if r < 1:
        raise DomainError("Wasserstein order must be at least 1")
    cost = _comonotone_cost(m1.atoms, m1.cumulative, m2.atoms, m2.cumulative, r)
    return cost ** (1.0 / r)


def _comonotone_cost(a1, c1, a2, c2, r):
    grid = np.union1d(c1, c2)
    grid = grid[grid > 0]
    du = np.diff(np.concatenate([[0.0], grid]))
    mid = grid - 0.5 * du
    q1 = a1[np.minimum(np.searchsorted(c1, mid, side="left"), a1.size - 1)]
    q2 = a2[np.minimum(np.searchsorted(c2, mid, side="left"), a2.size - 1)]
    d = np.abs(q1 - q2)
    if r == 1:
        return math.fsum(du * d)
    return math.fsum(du * d ** r)


def potential(m: DiscreteMeasure, k):
    """Call-price potential ``k -> integral of |y - k| m(dy)``, vectorized in ``k``."""
    k = np.asarray(k, dtype=float)
    cw = np.concatenate([[0.0], np.cumsum(m.weights)])
    cm = np.concatenate([[0.0], np.cumsum(m.weights * m.atoms)])
    idx = np.searchsorted(m.atoms, k, side="right")
    below_w, below_m = cw[idx], cm[idx]
    total_m = cm[-1]
    return k * below_w - below_m + (total_m - below_m) - k * (cw[-1] - below_w)


@dataclass(frozen=True)
class ConvexOrderResult:
    holds: bool
    mean_gap: float
    witness: float | None = None
    gap: float = 0.0

    def __bool__(self) -> bool:
        return self.holds


def check_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure,
                       tol: float = ORDER_TOL) -> ConvexOrderResult:
    """Test ``mu <=_c nu`` through equal means and potentials at every atom.

    On failure ``witness`` is the strike with the largest violation
    ``u_mu(k) - u_nu(k)`` and ``gap`` that violation (``None`` witness when
    only the means disagree).
    """
    mean_gap = mean(nu) - mean(mu)
    if abs(mean_gap) > tol:
        return ConvexOrderResult(False, mean_gap, None, abs(mean_gap))
    ks = np.union1d(mu.atoms, nu.atoms)
    viol = potential(mu, ks) - potential(nu, ks)
    j = int(np.argmax(viol))
    if viol[j] > tol:
        return ConvexOrderResult(False, mean_gap, float(ks[j]), float(viol[j]))
    return ConvexOrderResult(True, mean_gap, None, max(float(viol[j]), 0.0))


# ---------------------------------------------------------------------------
# parametric laws and quantization

_FAMILIES = ("normal", "lognormal", "uniform", "two-point", "discrete", "quantile-table")


@dataclass(frozen=True)
class ParametricLaw:
    """Continuous (or two-point) source law accessed through its quantile function.

    Parameters by family:

    * ``normal``: ``mean``, ``sigma``
    * ``lognormal``: ``mean`` (of the law itself) and ``sigma`` (of its log);
      the law is ``mean * exp(sigma Z - sigma**2 / 2)``
    * ``uniform``: ``low``, ``high``
    * ``two-point``: ``atoms`` (two values), ``weights``
    * ``discrete``: ``atoms``, ``weights`` of any finite law
    * ``quantile-table``: ``levels`` from 0 to 1 and nondecreasing ``values``,
      linearly interpolated
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}")
        p = self.params
        try:
            if self.family in ("normal", "lognormal"):
                if not float(p["sigma"]) > 0:
                    raise ValidationError("sigma must be positive")
                if self.family == "lognormal" and not float(p["mean"]) > 0:
                    raise ValidationError("lognormal mean must be positive")
            elif self.family == "uniform":
                if not float(p["low"]) < float(p["high"]):
                    raise ValidationError("uniform endpoints must be ordered")
            elif self.family in ("two-point", "discrete"):
                if self.family == "two-point" and len(p["atoms"]) != 2:
                    raise ValidationError("two-point law needs two atoms")
                DiscreteMeasure(p["atoms"], p["weights"])
            else:
                lv = np.asarray(p["levels"], float)
                vals = np.asarray(p["values"], float)
                if lv.shape != vals.shape or lv.size < 2 or lv[0] != 0 or lv[-1] != 1:
                    raise ValidationError("quantile table levels must run from 0 to 1")
                if np.any(np.diff(lv) <= 0) or np.any(np.diff(vals) < 0):
                    raise ValidationError("quantile table must be increasing")
        except KeyError as exc:
            raise ValidationError(f"missing parameter {exc}") from None

    @classmethod
    def normal(cls, mean: float = 0.0, sigma: float = 1.0) -> "ParametricLaw":
        return cls("normal", {"mean": mean, "sigma": sigma})

    @classmethod
    def lognormal(cls, mean: float = 1.0, sigma: float = 0.2) -> "ParametricLaw":
        return cls("lognormal", {"mean": mean, "sigma": sigma})

    @classmethod
    def discrete(cls, m: DiscreteMeasure) -> "ParametricLaw":
        return cls("discrete", {"atoms": m.atoms.tolist(), "weights": m.weights.tolist()})

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "ParametricLaw":
        return cls("uniform", {"low": low, "high": high})

    def _discrete(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.params["atoms"], self.params["weights"])

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        p, fam = self.params, self.family
        if fam == "normal":
            return p["mean"] + p["sigma"] * ndtri(u)
        if fam == "lognormal":
            s = p["sigma"]
            return p["mean"] * np.exp(s * ndtri(u) - 0.5 * s * s)
        if fam == "uniform":
            return p["low"] + (p["high"] - p["low"]) * u
        if fam in ("two-point", "discrete"):
            return quantile(self._discrete(), np.clip(u, np.nextafter(0, 1), 1.0))
        return np.interp(u, p["levels"], p["values"])

    def mean(self) -> float:
        p, fam = self.params, self.family
        if fam in ("normal", "lognormal"):
            return float(p["mean"])
        if fam == "uniform":
            return 0.5 * (p["low"] + p["high"])
        if fam in ("two-point", "discrete"):
            return mean(self._discrete())
        return self.integrate_quantile(np.array([0.0]), np.array([1.0]))[0]

    def integrate_quantile(self, lo, hi) -> np.ndarray:
        """Exact ``integral of F^{-1}(u) du`` over each ``[lo_k, hi_k]``."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        p, fam = self.params, self.family
        if fam == "normal":
            return p["mean"] * (hi - lo) + p["sigma"] * (norm_pdf(ndtri(lo)) - norm_pdf(ndtri(hi)))
        if fam == "lognormal":
            s = p["sigma"]
            with np.errstate(invalid="ignore", divide="ignore"):
                za, zb = ndtri(lo) - s, ndtri(hi) - s
                # difference of Phi in whichever tail keeps relative accuracy
                upper = 0.5 * (za + zb) > 0
            lower_diff = ndtr(zb) - ndtr(za)
            upper_diff = ndtr(-za) - ndtr(-zb)
            return p["mean"] * np.where(upper, upper_diff, lower_diff)
        if fam == "uniform":
            a, b = p["low"], p["high"]
            return (hi - lo) * (a + 0.5 * (b - a) * (lo + hi))
        if fam in ("two-point", "discrete"):
            d = self._discrete()
            start = np.concatenate([[0.0], d.cumulative[:-1]])

            def prim(u):
                return np.clip(u[..., None] - start, 0.0, d.weights) @ d.atoms

            return prim(hi) - prim(lo)
        lv = np.asarray(p["levels"], float)
        vals = np.asarray(p["values"], float)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(lv) * (vals[1:] + vals[:-1]))])

        def prim(u):
            k = np.clip(np.searchsorted(lv, u, side="right") - 1, 0, lv.size - 2)
            t = u - lv[k]
            slope = (vals[k + 1] - vals[k]) / (lv[k + 1] - lv[k])
            return cum[k] + vals[k] * t + 0.5 * slope * t * t

        return prim(hi) - prim(lo)


def block_means_quadrature(law: ParametricLaw, n: int, tol: float = 1e-10) -> np.ndarray:
    """Block means ``n * integral of F^{-1}`` over ``[(j-1)/n, j/n]`` by adaptive quadrature."""
    out = np.empty(n)
    for j in range(n):
        val, err = integrate.quad(law.quantile, j / n, (j + 1) / n,
                                  epsabs=tol / n, epsrel=tol, limit=200)
        if not np.isfinite(val):
            raise NumericError(f"quadrature failed on block {j}")
        out[j] = n * val
    return out


def quantize(law: ParametricLaw, n: int, scheme: str = "block-mean",
             U: float | None = 0.5, seed: int | None = None,
             method: str = "exact") -> DiscreteMeasure:
    """Equal-weight n-point approximation of ``law``.

    ``scheme="block-mean"`` puts atom j at the mean of F^{-1} over the j-th
    block of (0, 1); paired block means of two laws in convex order stay in
    convex order. ``scheme="quantile"`` uses atoms ``F^{-1}((j - U)/n)``;
    ``U=None`` draws U uniformly from a generator seeded by ``seed``.
    ``method="quad"`` switches block integrals to adaptive quadrature.
    """
    if n < 1:
        raise DomainError("n must be positive")
    if scheme == "block-mean":
        if method == "quad":
            atoms = block_means_quadrature(law, n)
        else:
            edges = np.arange(n + 1) / n
            atoms = n * law.integrate_quantile(edges[:-1], edges[1:])
    elif scheme == "quantile":
        if U is None:
            U = float(np.random.default_rng(seed).uniform(np.nextafter(0, 1), 1.0))
        if not 0 <= U < 1:
            raise DomainError("U must lie in [0, 1)")
        atoms = law.quantile((np.arange(1, n + 1) - U) / n)
    else:
        raise ValidationError(f"unknown quantization scheme {scheme!r}")
    atoms = np.asarray(atoms, float)
    if not np.all(np.isfinite(atoms)):
        raise NumericError("quantile evaluation produced non-finite atoms")
    return DiscreteMeasure(atoms, np.full(n, 1.0 / n))


# ---------------------------------------------------------------------------
# distance to the standard Gaussian


def w2_to_gaussian(p: DiscreteMeasure, rho: float = 2.0) -> float:
    """``W_rho^rho(p, N(0,1))`` via the comonotone map on cumulative blocks."""
    if rho < 1:
        raise DomainError("rho must be at least 1")
    y, w = p.atoms, p.weights
    c = np.cumsum(w)[:-1]
    tail = np.cumsum(w[::-1])[::-1][1:]
    z = ndtri_tail(c, tail)
    if rho == 2:
        dens = np.concatenate([[0.0], norm_pdf(z), [0.0]])
        return math.fsum(np.concatenate([[1.0], w * y * y, -2.0 * y * (dens[:-1] - dens[1:])]))
    edges = np.concatenate([[-np.inf], z, [np.inf]])
    total = []
    for j in range(y.size):
        total.append(_block_power(y[j], edges[j], edges[j + 1], rho))
    return math.fsum(total)


def _block_power(yj, a, b, rho, tol=1e-10):
    f = lambda z: abs(yj - z) ** rho * math.exp(-0.5 * z * z) / _SQRT_2PI
    pieces = []
    if a < yj < b:
        pieces += [(a, yj), (yj, b)]
    else:
        pieces.append((a, b))
    s = 0.0
    for lo, hi in pieces:
        val, _ = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=200)
        s += val
    return s


# ---------------------------------------------------------------------------
# CSV io


def read_measure_csv(path) -> DiscreteMeasure:
    atoms, weights = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["atom", "weight"]:
            raise ValidationError(f"{path}: expected header 'atom,weight'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{lineno}: expected two columns")
            try:
                atoms.append(float(row[0]))
                weights.append(float(row[1]))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not a number") from None
    if not weights:
        raise ValidationError(f"{path}: no atoms")
    total = math.fsum(weights)
    if abs(total - 1.0) > ORDER_TOL:
        raise ValidationError(f"{path}: weights sum to {total!r}")
    if abs(total - 1.0) > MASS_TOL:
        weights = [w / total for w in weights]
    return DiscreteMeasure(atoms, weights)


def write_measure_csv(m: DiscreteMeasure, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_measure_csv(m))


def format_measure_csv(m: DiscreteMeasure) -> str:
    lines = ["atom,weight"]
    lines += [f"{a!r},{w!r}" for a, w in zip(m.atoms.tolist(), m.weights.tolist())]
    return "\n".join(lines) + "\n"


def as_measure(obj) -> DiscreteMeasure:
    """Accept a measure, a CSV path, or an ``(atoms, weights)`` pair."""
    if isinstance(obj, DiscreteMeasure):
        return obj
    if isinstance(obj, (str, Path)):
        return read_measure_csv(obj)
    atoms, weights = obj
    return DiscreteMeasure(atoms, weights)


def union_support(measures: Sequence[DiscreteMeasure]) -> np.ndarray:
    return np.unique(np.concatenate([m.atoms for m in measures]))
