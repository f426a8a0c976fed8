"""Seeded stability experiments over refining quantization levels."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .couplings import adapted_wasserstein, write_coupling_json
from .costs import parse_cost
from .errors import InfeasibleError, ValidationError
from .measures import ParametricLaw, check_convex_order, quantize, read_measure_csv
from .solver import SolveOptions, SolverReport, solve_wmot

ORDER_CHECK_TOL = 1e-10
VIX_DELTA = 1.0 / 12.0


def parse_law(text: str) -> ParametricLaw:
    """``normal:mean=0,sigma=1``, ``lognormal:mean=1,sigma=0.2``, ``uniform:low=0,high=1`` or ``csv:<path>``."""
    fam, _, arg = text.strip().partition(":")
    fam = fam.strip().lower()
    if fam == "csv":
        if not arg:
            raise ValidationError("csv law needs a path")
        return ParametricLaw.discrete(read_measure_csv(arg))
    expected = {"normal": ("mean", "sigma"), "lognormal": ("mean", "sigma"), "uniform": ("low", "high")}
    if fam not in expected:
        raise ValidationError(f"unknown law family {fam!r}")
    params = {}
    for item in filter(None, (s.strip() for s in arg.split(","))):
        k, eq, v = item.partition("=")
        k = k.strip()
        if not eq or k not in expected[fam]:
            raise ValidationError(f"bad parameter {item!r} for {fam}")
        try:
            params[k] = float(v)
        except ValueError:
            raise ValidationError(f"parameter {k} is not a number: {v!r}") from None
    missing = set(expected[fam]) - set(params)
    if missing:
        raise ValidationError(f"{fam} law is missing {sorted(missing)}")
    return ParametricLaw(fam, params)


def law_to_text(law: ParametricLaw) -> str:
    if law.family in ("two-point", "discrete"):
        pairs = ";".join(f"{a!r}@{w!r}" for a, w in zip(law.params["atoms"], law.params["weights"]))
        return f"{law.family}:{pairs}"
    return law.family + ":" + ",".join(f"{k}={float(v)!r}" for k, v in sorted(law.params.items()))


@dataclass(frozen=True)
class ExperimentConfig:
    mu: ParametricLaw
    nu: ParametricLaw
    cost: str
    levels: tuple[int, ...] = (16, 64, 256, 1024)
    scheme: str = "block-mean"
    seed: int = 0
    U: float | None = 0.5
    name: str = "custom"
    out_dir: str | None = None
    save_couplings: bool = False

    def __post_init__(self):
        lv = tuple(int(n) for n in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv or any(n < 1 for n in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValidationError("levels must be positive and strictly increasing")
        if self.scheme not in ("block-mean", "quantile"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        parse_cost(self.cost)
        a, b = self.mu, self.nu
        if a.family == b.family and a.family in ("normal", "lognormal"):
            if a.params["mean"] != b.params["mean"] or a.params["sigma"] > b.params["sigma"]:
                raise ValidationError("marginal pair is not in convex order "
                                      "(needs equal means and sigma_mu <= sigma_nu)")

    @property
    def n_ref(self) -> int:
        return self.levels[-1]

    def to_dict(self) -> dict:
        return {"name": self.name, "mu": law_to_text(self.mu), "nu": law_to_text(self.nu),
                "cost": self.cost, "levels": list(self.levels), "scheme": self.scheme,
                "seed": self.seed, "U": self.U}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def preset(name: str, **overrides) -> ExperimentConfig:
    """Named experiment setups.

    * ``vix``: lognormal marginals one month apart at 20% volatility, VIX cost
    * ``gauss``: lognormal sigma 0.2 against 0.3, Gaussian-anchor cost
    * ``normal``: N(0, 1) against N(0, 1.5^2), Gaussian-anchor cost
    * ``identity``: the same lognormal twice, Gaussian-anchor cost
    """
    s0 = 0.2
    presets = {
        "vix": dict(mu=ParametricLaw.lognormal(1.0, s0),
                    nu=ParametricLaw.lognormal(1.0, math.sqrt(s0 ** 2 + VIX_DELTA * s0 ** 2)),
                    cost=f"vix:delta={VIX_DELTA!r}"),
        "gauss": dict(mu=ParametricLaw.lognormal(1.0, 0.2), nu=ParametricLaw.lognormal(1.0, 0.3),
                      cost="gauss:rho=2"),
        "normal": dict(mu=ParametricLaw.normal(0.0, 1.0), nu=ParametricLaw.normal(0.0, 1.5),
                       cost="gauss:rho=2"),
        "identity": dict(mu=ParametricLaw.lognormal(1.0, 0.2), nu=ParametricLaw.lognormal(1.0, 0.2),
                         cost="gauss:rho=2"),
    }
    if name not in presets:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    kw = dict(presets[name], name=name)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    """Read a ``[stability]`` section of ``key = value`` lines.

    Keys: ``preset``, ``mu``, ``nu``, ``cost``, ``levels`` (comma list),
    ``scheme``, ``seed``, ``u``, ``out``, ``save_couplings``. A preset fills
    defaults that the other keys override.
    """
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not cp.has_section("stability"):
        raise ValidationError(f"{path}: missing [stability] section")
    sec = cp["stability"]
    known = {"preset", "mu", "nu", "cost", "levels", "scheme", "seed", "u", "out", "save_couplings"}
    unknown = set(sec) - known
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    kw: dict = {}
    try:
        if "mu" in sec:
            kw["mu"] = parse_law(sec["mu"])
        if "nu" in sec:
            kw["nu"] = parse_law(sec["nu"])
        if "cost" in sec:
            kw["cost"] = sec["cost"]
        if "levels" in sec:
            kw["levels"] = tuple(int(v) for v in sec["levels"].split(","))
        if "scheme" in sec:
            kw["scheme"] = sec["scheme"].strip()
        if "seed" in sec:
            kw["seed"] = sec.getint("seed")
        if "u" in sec:
            kw["U"] = None if sec["u"].strip().lower() == "random" else sec.getfloat("u")
        if "out" in sec:
            kw["out_dir"] = sec["out"].strip()
        if "save_couplings" in sec:
            kw["save_couplings"] = sec.getboolean("save_couplings")
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if "preset" in sec:
        return preset(sec["preset"].strip(), **kw)
    missing = {"mu", "nu", "cost"} - set(kw)
    if missing:
        raise ValidationError(f"{path}: missing keys {sorted(missing)}")
    return ExperimentConfig(**kw)


@dataclass
class StabilityRow:
    n: int
    value: float
    abs_diff_ref: float
    aw1_ref: float | None
    gap: float
    iterations: int
    seconds: float


@dataclass
class ExperimentTable:
    config: ExperimentConfig
    rows: list[StabilityRow]
    metadata: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "value", "abs_diff_ref", "aw1_ref", "gap", "iterations"])
        for r in self.rows:
            w.writerow([r.n, repr(r.value), repr(r.abs_diff_ref),
                        "" if r.aw1_ref is None else repr(r.aw1_ref), repr(r.gap), r.iterations])
        return buf.getvalue()

    def to_dict(self) -> dict:
        rows = [{"n": r.n, "value": r.value, "abs_diff_ref": r.abs_diff_ref, "aw1_ref": r.aw1_ref,
                 "gap": r.gap, "iterations": r.iterations} for r in self.rows]
        return {"config": self.config.to_dict(), "metadata": self.metadata, "rows": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def timings_csv(self) -> str:
        lines = ["n,seconds"] + [f"{r.n},{r.seconds!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> dict:
        """Write ``stability.csv``, ``stability.json`` and (not deterministic) ``timings.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / "stability.csv", "json": out / "stability.json",
                 "timings": out / "timings.csv"}
        paths["csv"].write_text(self.to_csv(), encoding="utf-8")
        paths["json"].write_text(self.to_json(), encoding="utf-8")
        paths["timings"].write_text(self.timings_csv(), encoding="utf-8")
        if self.config.save_couplings:
            (out / "couplings").mkdir(exist_ok=True)
            for n, rep in self.reports.items():
                write_coupling_json(rep.coupling, out / "couplings" / f"n{n}.json")
        return paths


def versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy", "highspy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def worker_count() -> int:
    raw = os.environ.get("WMOT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"WMOT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("WMOT_THREADS must be nonnegative")
    return n


def quantized_pair(config: ExperimentConfig, n: int):
    mu_n = quantize(config.mu, n, config.scheme, U=config.U, seed=config.seed)
    nu_n = quantize(config.nu, n, config.scheme, U=config.U, seed=config.seed)
    return mu_n, nu_n


def _solve_level(config: ExperimentConfig, n: int):
    t0 = time.perf_counter()
    mu_n, nu_n = quantized_pair(config, n)
    order = check_convex_order(mu_n, nu_n, tol=ORDER_CHECK_TOL)
    if not order:
        raise InfeasibleError(f"level n={n}: quantized pair leaves the convex order "
                              f"(mean gap {order.mean_gap:.3e}, potential gap {order.gap:.3e} "
                              f"at {order.witness})")
    rep = solve_wmot(mu_n, nu_n, parse_cost(config.cost), SolveOptions(seed=config.seed))
    return rep, time.perf_counter() - t0


def run_stability(config: ExperimentConfig, threads: int | None = None) -> ExperimentTable:
    """Solve every level, then compare values and optimizers with the finest level."""
    threads = worker_count() if threads is None else threads
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(lambda n: _solve_level(config, n), config.levels))
    else:
        done = [_solve_level(config, n) for n in config.levels]
    reports: dict[int, SolverReport] = {n: rep for n, (rep, _) in zip(config.levels, done)}
    ref = reports[config.n_ref]
    strict = parse_cost(config.cost).strictly_convex_in_p
    rows = []
    for n, (rep, secs) in zip(config.levels, done):
        aw = None
        if strict:
            t0 = time.perf_counter()
            aw = 0.0 if n == config.n_ref else adapted_wasserstein(rep.coupling, ref.coupling, 1)
            secs += time.perf_counter() - t0
        rows.append(StabilityRow(n, float(rep.value), abs(float(rep.value) - float(ref.value)),
                                 aw, float(rep.gap), int(rep.iterations), secs))
    meta = {"config_hash": config.digest(), "versions": versions(),
            "converged": all(r.converged for r in reports.values())}
    table = ExperimentTable(config, rows, meta, reports)
    if config.out_dir:
        table.write(config.out_dir)
    return table


def with_output(config: ExperimentConfig, out_dir) -> ExperimentConfig:
    return replace(config, out_dir=str(out_dir))
