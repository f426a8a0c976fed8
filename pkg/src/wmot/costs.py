"""Cost functionals ``C(x, p)`` and their derivatives in the kernel weights.

Every functional works on a batch of kernels at once: ``x`` has shape
``(n,)``, the common support ``y`` shape ``(m,)`` and the weights ``W`` shape
``(n, m)`` (rows are kernels, zeros allowed). The scalar ``value`` and
``weight_gradient`` methods are thin wrappers over the batch versions.
"""

from __future__ import annotations

import ast
import csv
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, ValidationError
from .measures import DiscreteMeasure, ndtri_tail, norm_pdf, w2_to_gaussian

EPS_SMOOTH = 1e-10
FD_STEP = 1e-6
# quantile clamp for cumulative weights equal to 0 or 1
Z_CLAMP = float(-ndtri(1e-300))


class CostFunctional(ABC):
    convex_in_p: bool = True
    strictly_convex_in_p: bool = False
    is_linear: bool = False

    @abstractmethod
    def row_values(self, x: np.ndarray, y: np.ndarray, W: np.ndarray) -> np.ndarray:
        """``C(x_i, W_i)`` for every row."""

    @abstractmethod
    def row_gradients(self, x: np.ndarray, y: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Partial derivatives ``dC(x_i, W_i)/dW_ij``."""

    def check_domain(self, x: np.ndarray, y: np.ndarray) -> None:
        return None

    def value(self, x: float, p: DiscreteMeasure) -> float:
        xs = np.array([float(x)])
        self.check_domain(xs, p.atoms)
        return float(self.row_values(xs, p.atoms, p.weights[None, :])[0])

    def weight_gradient(self, x: float, support, weights) -> np.ndarray:
        xs = np.array([float(x)])
        y = np.asarray(support, float)
        w = np.asarray(weights, float)
        if y.shape != w.shape:
            raise ValidationError("support and weights differ in length")
        self.check_domain(xs, y)
        return self.row_gradients(xs, y, w[None, :])[0]

    def corrector(self, x, mu, y, nu, martingale: bool, rng=None):
        """Optional structured solver returning a candidate optimal joint plan, or ``None``.

        ``rng``, when given, randomizes the corrector's own starting point.
        """
        return None

    def to_text(self) -> str:
        return type(self).__name__


# ---------------------------------------------------------------------------
# linear costs

_ALLOWED_NAMES = {
    "abs": np.abs, "sqrt": np.sqrt, "exp": np.exp, "log": np.log, "sin": np.sin,
    "cos": np.cos, "tanh": np.tanh, "maximum": np.maximum, "minimum": np.minimum,
    "sign": np.sign, "pi": math.pi, "e": math.e,
}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
                  ast.Constant, ast.operator, ast.unaryop)


def compile_expression(expr: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorized ``c(x, y)`` from an arithmetic expression in ``x`` and ``y``."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse cost expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValidationError(f"unsupported syntax in cost expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _ALLOWED_NAMES and node.id not in ("x", "y"):
            raise ValidationError(f"unknown name {node.id!r} in cost expression")
    code = compile(tree, "<cost>", "eval")

    def c(x, y):
        env = dict(_ALLOWED_NAMES, x=x, y=y)
        return np.broadcast_to(eval(code, {"__builtins__": {}}, env), np.broadcast(x, y).shape)

    return c


class LinearCost(CostFunctional):
    """``C(x, p) = integral of c(x, y) p(dy)`` for a function or tabulated ``c``."""

    is_linear = True

    def __init__(self, c, label: str | None = None):
        self._label = label
        if callable(c):
            self._fn = c
            self._table = None
        else:
            xs, ys, M = c
            self._fn = None
            self._table = (np.asarray(xs, float), np.asarray(ys, float), np.asarray(M, float))

    def cost_matrix(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self._fn is not None:
            M = np.asarray(self._fn(x[:, None], y[None, :]), float)
        else:
            tx, ty, T = self._table
            ix, iy = _lookup(tx, x), _lookup(ty, y)
            M = T[np.ix_(ix, iy)]
        if not np.all(np.isfinite(M)):
            raise DomainError("linear cost is not finite on the working grid")
        return M

    def row_values(self, x, y, W):
        return np.einsum("ij,ij->i", W, self.cost_matrix(x, y))

    def row_gradients(self, x, y, W):
        return np.array(self.cost_matrix(x, y), dtype=float)

    def to_text(self):
        return self._label or "linear"


def _lookup(table: np.ndarray, pts: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(table, pts)
    idx = np.minimum(idx, table.size - 1)
    if not np.allclose(table[idx], pts, rtol=0, atol=1e-12):
        raise DomainError("cost table does not cover every atom of the grid")
    return idx


def linear_cost(c) -> LinearCost:
    return LinearCost(c)


def read_cost_table(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tabulated cost from a CSV with header ``x,y,cost``."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["x", "y", "cost"]:
            raise ValidationError(f"{path}: expected header 'x,y,cost'")
        for row in reader:
            if row:
                rows.append([float(v) for v in row])
    arr = np.array(rows, float).reshape(-1, 3)
    xs, ys = np.unique(arr[:, 0]), np.unique(arr[:, 1])
    M = np.full((xs.size, ys.size), np.nan)
    M[np.searchsorted(xs, arr[:, 0]), np.searchsorted(ys, arr[:, 1])] = arr[:, 2]
    return xs, ys, M


# ---------------------------------------------------------------------------
# VIX functional


@dataclass(frozen=True)
class VixParams:
    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError("delta must be a positive number")


class VixCost(CostFunctional):
    """``C(x, p) = -sqrt((2/delta) * max(s, 0))`` with ``s = integral of ln(x/y) p(dy)``.

    Convex in ``p`` on ``{s >= 0}``, which contains every kernel with
    barycenter ``x`` by Jensen's inequality.
    """

    def __init__(self, params: VixParams | float, eps_smooth: float = EPS_SMOOTH):
        self.params = params if isinstance(params, VixParams) else VixParams(float(params))
        self.eps_smooth = eps_smooth

    @property
    def delta(self) -> float:
        return self.params.delta

    def check_domain(self, x, y):
        if np.any(~(np.asarray(x) > 0)) or np.any(~(np.asarray(y) > 0)):
            raise DomainError("VIX cost needs strictly positive atoms")

    def log_ratio(self, x, y):
        return np.log(x)[:, None] - np.log(y)[None, :]

    def s_values(self, x, y, W):
        return np.einsum("ij,ij->i", W, self.log_ratio(x, y))

    def row_values(self, x, y, W):
        s = self.s_values(x, y, W)
        return -np.sqrt((2.0 / self.delta) * np.maximum(s, 0.0))

    def row_gradients(self, x, y, W):
        s = self.s_values(x, y, W)
        k = 2.0 / self.delta
        denom = np.where(s > self.eps_smooth, np.sqrt(k * np.maximum(s, 0.0)),
                         np.sqrt(k * np.maximum(s, 0.0) + self.eps_smooth))
        coef = np.where(s > 0, -(1.0 / self.delta) / denom, 0.0)
        return coef[:, None] * self.log_ratio(x, y)

    def corrector(self, x, mu, y, nu, martingale: bool, rng=None):
        """Plan on which every kernel has the same log-moment, if one exists.

        Since ``sum_i mu_i s_i`` is the same for every martingale coupling,
        concavity of the square root gives ``F >= -sqrt((2/delta) S)``; a plan
        with ``s_i = S`` for all ``i`` attains this bound and is optimal.
        """
        if not martingale:
            return None
        from .maxent import maxent_plan

        lx, ly = np.log(x), np.log(y)
        S = math.fsum(mu * lx) - math.fsum(nu * ly)
        if S <= 0:
            return None
        feats = np.vstack([np.ones_like(y), y, ly])
        targets = np.column_stack([mu, mu * x, mu * (lx - S)])
        res = maxent_plan(mu, nu, feats, targets)
        return res.plan if res.converged else None

    def growth_constant(self) -> float:
        return 0.25 + 1.0 / self.delta

    @staticmethod
    def growth_function(t):
        t = np.asarray(t, float)
        return np.abs(np.log(t)) + np.abs(t)

    def to_text(self):
        return f"vix:delta={self.delta!r}"


def vix_cost(params: VixParams | float) -> VixCost:
    return VixCost(params)


# ---------------------------------------------------------------------------
# Gaussian anchor W_rho^rho(p, N(0,1))


def _cumulative_quantiles(W: np.ndarray) -> np.ndarray:
    """Gaussian quantiles of the interior cumulative weights, row-wise and clamped."""
    c = np.cumsum(W, axis=1)[:, :-1]
    tail = np.cumsum(W[:, ::-1], axis=1)[:, ::-1][:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = ndtri_tail(np.clip(c, 0.0, 1.0), np.clip(tail, 0.0, 1.0))
    return np.clip(z, -Z_CLAMP, Z_CLAMP)


class GaussAnchorCost(CostFunctional):
    """``C(x, p) = W_rho^rho(p, N(0,1))``, independent of ``x`` and strictly convex in ``p``."""

    strictly_convex_in_p = True

    def __init__(self, rho: float = 2.0):
        if rho < 1:
            raise DomainError("rho must be at least 1")
        self.rho = float(rho)

    def row_values(self, x, y, W):
        if self.rho == 2:
            z = _cumulative_quantiles(W)
            dy = np.diff(y)
            return 1.0 + W @ (y * y) - 2.0 * (norm_pdf(z) @ dy if z.shape[1] else 0.0)
        out = np.empty(W.shape[0])
        for i, row in enumerate(W):
            nz = row > 0
            out[i] = w2_to_gaussian(DiscreteMeasure(y[nz], row[nz] / row[nz].sum(), mass_tol=1e-6),
                                    self.rho)
        return out

    def row_gradients(self, x, y, W):
        if self.rho == 2:
            z = _cumulative_quantiles(W)
            dy = np.diff(y)
            terms = z * dy[None, :]
            # g_k = y_k^2 + 2 sum_{j >= k} dy_j z_j
            suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
            g = np.tile(y * y, (W.shape[0], 1))
            g[:, :-1] += 2.0 * suffix
            return g
        return self._fd_gradients(x, y, W)

    def _fd_gradients(self, x, y, W):
        h = FD_STEP
        G = np.empty_like(W, dtype=float)
        for i, p in enumerate(W):
            base = None
            for k in range(p.size):
                d = -p.copy()
                d[k] += 1.0
                up = self.row_values(x[i:i + 1], y, (p + h * d)[None])[0]
                if p[k] >= h / (1 + h):
                    dn = self.row_values(x[i:i + 1], y, (p - h * d)[None])[0]
                    G[i, k] = (up - dn) / (2 * h)
                else:
                    if base is None:
                        base = self.row_values(x[i:i + 1], y, p[None])[0]
                    G[i, k] = (up - base) / h
        return G

    def corrector(self, x, mu, y, nu, martingale: bool, rng=None):
        if self.rho != 2 or not martingale:
            return None
        from .gauss_dual import canonical_start, dual_newton

        b = h = None
        if rng is not None:
            # cells fitted to a perturbed nu: a different dual start, all atoms active
            b, h = canonical_start(x, y, 0.7 * nu + 0.3 * rng.dirichlet(np.ones(nu.size)))
        res = dual_newton(x, mu, y, nu, b, h)
        return res.plan if res.converged else None

    def to_text(self):
        return f"gauss:rho={self.rho!r}"


def gauss_anchor_cost(rho: float = 2.0) -> GaussAnchorCost:
    return GaussAnchorCost(rho)


# ---------------------------------------------------------------------------
# config strings


def parse_cost(text: str) -> CostFunctional:
    """Build a cost from ``linear:<expr|csv>``, ``vix:delta=<float>`` or ``gauss:rho=<float>``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "linear":
        arg = arg.strip()
        if not arg:
            raise ValidationError("linear cost needs an expression or CSV path")
        if arg.lower().endswith(".csv") or os.path.isfile(arg):
            return LinearCost(read_cost_table(arg), label=text)
        return LinearCost(compile_expression(arg), label=text)
    params = _parse_params(arg)
    if kind not in ("vix", "gauss"):
        raise ValidationError(f"unknown cost kind {kind!r}")
    key = "delta" if kind == "vix" else "rho"
    unknown = sorted(set(params) - {key})
    if unknown:
        raise ValidationError(f"unknown parameters {unknown} for cost {kind!r}")
    if key not in params and kind == "vix":
        raise ValidationError("vix cost needs delta=<float>")
    try:
        val = float(params.get(key, 2.0))
    except ValueError:
        raise ValidationError(f"bad numeric parameter in {text!r}") from None
    return VixCost(VixParams(val)) if kind == "vix" else GaussAnchorCost(val)


def _parse_params(arg: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in arg.split(","))):
        key, eq, val = part.partition("=")
        if not eq:
            raise ValidationError(f"expected key=value, got {part!r}")
        out[key.strip()] = val.strip()
    return out
