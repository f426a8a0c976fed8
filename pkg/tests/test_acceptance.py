"""The eleven acceptance criteria, each reported as one PASS/FAIL line."""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import comonotone_w1_mc_error, gauss_instance, phi, tangent_fd, vertex_enumeration
from wmot.applications import sbm_process_bound, sbm_simulate, sbm_solve, vix_superreplication
from wmot.cli import cli_main
from wmot.costs import GaussAnchorCost, LinearCost, VixCost
from wmot.couplings import adapted_wasserstein, from_matrix
from wmot.harness import VIX_DELTA, preset, quantized_pair, run_stability, with_output
from wmot.measures import DiscreteMeasure as D
from wmot.measures import ParametricLaw, check_convex_order, quantize, wasserstein_1d
from wmot.monotonicity import check_finite_optimality, check_martingale_c_monotone
from wmot.solver import SolveOptions, evaluate, solve_wmot
from wmot.transport_lp import TransportLP, solve_linear_mot, solve_lp

GAUSS = GaussAnchorCost(2.0)


def record(k, title, ok, detail=""):
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip())
    print(ACCEPTANCE_LINES[-1])
    assert ok, ACCEPTANCE_LINES[-1]


def _integer_instances(rng, count):
    grid = np.arange(-3, 4)
    out = []
    while len(out) < count:
        n = int(rng.integers(1, 4))
        m = int(rng.integers(2, 9 - n))
        y = np.sort(rng.choice(grid, m, replace=False)).astype(float)
        inner = grid[(grid >= y[0]) & (grid <= y[-1])]
        x = np.sort(rng.choice(inner, min(n, inner.size), replace=False)).astype(float)
        mu = rng.dirichlet(np.ones(x.size))
        if rng.random() < 0.5:
            # random nu: keeps only the pairs that happen to be in convex order
            nu = rng.dirichlet(np.ones(m))
            if not check_convex_order(D(x, mu), D(y, nu), tol=1e-12):
                continue
        else:
            K = np.zeros((x.size, m))
            for i, xi in enumerate(x):
                q = rng.dirichlet(np.ones(m))
                lam = 0.5
                while True:
                    w = ((xi - (1 - lam) * q @ y) / lam - y[0]) / (y[-1] - y[0])
                    if 0 <= w <= 1:
                        break
                    lam = min(1.0, lam + 0.1)
                K[i] = (1 - lam) * q
                K[i, 0] += lam * (1 - w)
                K[i, -1] += lam * w
            nu = mu @ K
        keep = nu > 0
        y, nu = y[keep], nu[keep]
        out.append((x, mu, y, nu, rng.integers(-5, 6, (x.size, y.size)).astype(float)))
    return out


def test_1_lp_exactness():
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    for x, mu, y, nu, C in _integer_instances(np.random.default_rng(1), 240):
        ref, _ = vertex_enumeration(x, mu, y, nu, C)
        res = solve_linear_mot(D(x, mu, mass_tol=1e-9), D(y, nu, mass_tol=1e-9), C)
        worst = max(worst, abs(res.value - ref))
        checked += 1
    secs = time.perf_counter() - t0
    record(1, "LP exactness", checked >= 200 and worst <= 1e-9 and secs < 30,
           f"{checked} instances, max error {worst:.2e}, {secs:.1f}s")


def _kernels(rep):
    return np.array([k.weights for k in rep.coupling.kernels])


def test_2_unique_coupling():
    target = np.array([[0.75, 0.25], [0.25, 0.75]])
    cases = {
        "linear": (D([-1, 1], [0.5, 0.5]), D([-2, 2], [0.5, 0.5]),
                   LinearCost(lambda x, y: np.cos(x * y) + y ** 3)),
        "gauss": (D([-1, 1], [0.5, 0.5]), D([-2, 2], [0.5, 0.5]), GAUSS),
        "vix": (D([2, 4], [0.5, 0.5]), D([1, 5], [0.5, 0.5]), VixCost(VIX_DELTA)),
    }
    errs = {}
    for name, (mu, nu, cost) in cases.items():
        rep = solve_wmot(mu, nu, cost)
        errs[name] = float(np.abs(_kernels(rep) - target).max())
    record(2, "unique coupling", max(errs.values()) <= 1e-9,
           " ".join(f"{k}={v:.1e}" for k, v in errs.items()))


def _rel_error(cost, x, y, w, h=1e-6):
    g = cost.weight_gradient(x, y, w)
    g = g - g @ w
    f = lambda v: float(cost.row_values(np.array([x]), y, v[None, :])[0])
    fd = np.array([tangent_fd(f, w, k, h) for k in range(y.size)])
    return np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300)


def test_3_gradients():
    rng = np.random.default_rng(3)
    lin = LinearCost(lambda x, y: np.sin(x * y) + 0.3 * y ** 2)
    vix = VixCost(VIX_DELTA)
    worst = {"linear": 0.0, "gauss": 0.0, "vix": 0.0}
    for _ in range(100):
        m = int(rng.integers(2, 8))
        y = np.sort(rng.uniform(-3, 3, m))
        w = rng.dirichlet(np.ones(m)) * 0.9 + 0.1 / m
        x = float(rng.uniform(-2, 2))
        worst["linear"] = max(worst["linear"], _rel_error(lin, x, y, w))
        worst["gauss"] = max(worst["gauss"], _rel_error(GAUSS, x, y, w))
    done = 0
    while done < 100:
        m = int(rng.integers(2, 8))
        y = np.sort(np.exp(rng.normal(0, 0.4, m)))
        w = rng.dirichlet(np.ones(m)) * 0.9 + 0.1 / m
        x = float(w @ y)
        s = math.log(x) - w @ np.log(y)
        if not s > 10 * vix.eps_smooth:
            continue
        worst["vix"] = max(worst["vix"], _rel_error(vix, x, y, w))
        done += 1
    record(3, "gradients", max(worst.values()) <= 1e-5,
           " ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_4_frank_wolfe_certification():
    rng = np.random.default_rng(4)
    worst_gap = worst_dv = worst_aw = 0.0
    max_it = 0
    for k in range(50):
        x, mu, y, nu, _ = gauss_instance(rng)
        a, b = D(x, mu, mass_tol=1e-9), D(y, nu, mass_tol=1e-9)
        r1 = solve_wmot(a, b, GAUSS)
        r2 = solve_wmot(a, b, GAUSS, SolveOptions(initial="random", seed=1000 + k))
        worst_gap = max(worst_gap, r1.gap, r2.gap)
        max_it = max(max_it, r1.iterations, r2.iterations)
        worst_dv = max(worst_dv, abs(r1.value - r2.value))
        worst_aw = max(worst_aw, adapted_wasserstein(r1.coupling, r2.coupling, 1))
    ok = worst_gap <= 1e-6 and max_it <= 5000 and worst_dv <= 2e-6 and worst_aw <= 1e-4
    record(4, "Frank-Wolfe certification", ok,
           f"gap {worst_gap:.1e}, iterations {max_it}, value diff {worst_dv:.1e}, AW1 {worst_aw:.1e}")


def test_5_convex_order_quantization():
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(20):
        mean = float(rng.uniform(0.5, 3.0))
        s1 = float(rng.uniform(0.05, 0.6))
        s2 = s1 + float(rng.uniform(0.01, 0.5))
        a, b = ParametricLaw.lognormal(mean, s1), ParametricLaw.lognormal(mean, s2)
        for n in range(4, 1025):
            failures += not check_convex_order(quantize(a, n), quantize(b, n), tol=1e-10)
    record(5, "convex-order quantization", failures == 0, f"{failures} failing levels of 20x1021")


@pytest.fixture(scope="module")
def vix_run(tmp_path_factory):
    t0 = time.perf_counter()
    table = run_stability(with_output(preset("vix"), tmp_path_factory.mktemp("vix1")))
    return table, time.perf_counter() - t0


@pytest.fixture(scope="module")
def gauss_run(tmp_path_factory):
    return run_stability(with_output(preset("gauss"), tmp_path_factory.mktemp("gauss1")))


def test_6_vix_stability(vix_run):
    table, secs = vix_run
    V = {r.n: r.value for r in table.rows}
    coarse, fine = abs(V[16] - V[64]), abs(V[256] - V[1024])
    cfg = preset("vix")
    mu_n, _ = quantized_pair(cfg, 256)
    control = vix_superreplication(mu_n, mu_n, VIX_DELTA).d_super
    ok = fine < coarse and fine <= 1e-3 * max(1.0, abs(V[1024])) and secs <= 600 and control == 0.0
    record(6, "VIX stability", ok,
           f"|V16-V64|={coarse:.2e} |V256-V1024|={fine:.2e} {secs:.1f}s control={control!r}")


def test_7_gauss_optimizer_stability(gauss_run):
    aw = [r.aw1_ref for r in gauss_run.rows[:-1]]
    record(7, "Gauss optimizer stability", all(b < a for a, b in zip(aw, aw[1:])),
           "AW1 " + " ".join(f"{v:.3e}" for v in aw))


def test_8_stretched_brownian_motion():
    t0 = time.perf_counter()
    mu = D([-1.0, 0.0, 1.0], [0.3, 0.4, 0.3])
    nu = D([-3.0, -1.0, 0.0, 1.0, 3.0], [0.1, 0.25, 0.3, 0.25, 0.1])
    model = sbm_solve(mu, nu)
    ens = sbm_simulate(model, np.linspace(0.0, 1.0, 21), 100_000, seed=0)
    M = ens.values
    N = M.shape[0]
    worst_z = 0.0
    for s, t in itertools.combinations(range(M.shape[1]), 2):
        d = M[:, t] - M[:, s]
        se = d.std(ddof=1) / math.sqrt(N)
        if se > 0:
            worst_z = max(worst_z, abs(d.mean()) / se)
        elif d.mean() != 0:
            worst_z = math.inf
    vals, counts = np.unique(M[:, -1], return_counts=True)
    w1 = wasserstein_1d(D(vals, counts / N, mass_tol=1e-9), nu)
    mc = comonotone_w1_mc_error(nu, N, 200, np.random.default_rng(0))
    # MT from the kernels directly: E[Y Z] under the comonotone pairing with N(0, 1)
    mt = 0.0
    for m_i, k, z in zip(mu.weights, model.coupling.kernels, model.z_grids):
        dens = np.array([phi(v) for v in z])
        mt += m_i * (k.atoms @ (np.r_[0.0, dens] - np.r_[dens, 0.0]))
    secs = time.perf_counter() - t0
    ok = worst_z <= 3 and w1 <= 4 * mc and abs(mt - model.mt) <= 1e-10 and secs <= 60
    record(8, "stretched Brownian motion", ok,
           f"max z {worst_z:.2f}, W1 {w1:.4f} <= 4x{mc:.4f}, MT diff {abs(mt - model.mt):.1e}, {secs:.1f}s")


def test_9_process_bound_constant():
    mu = D([-1.0, 1.0], [0.5, 0.5])
    a = sbm_solve(mu, D([-2.0, 2.0], [0.5, 0.5]))
    b = sbm_solve(mu, D([-3.0, -1.0, 1.0, 3.0], [0.2, 0.3, 0.3, 0.2]))
    pb = sbm_process_bound(a, b, 2)
    self_bound = sbm_process_bound(a, a, 2).bound
    ok = pb.multiplier == 4.0 and pb.bound == 4.0 * pb.endpoint_aw ** 2 and self_bound == 0.0
    record(9, "process bound constant", ok, f"multiplier {pb.multiplier!r}, self bound {self_bound!r}")


def _perturbed_3x4(rng):
    mu = D([-1.0, 0.0, 1.0], [0.3, 0.4, 0.3])
    nu = D([-2.0, -0.5, 0.5, 2.0], [0.15, 0.35, 0.35, 0.15])
    P = solve_wmot(mu, nu, GAUSS).plan
    S = solve_linear_mot(mu, nu, rng.standard_normal((3, 4))).plan
    # total-variation mass 0.05 moved along the segment towards another vertex
    Q = P + (0.1 / np.abs(S - P).sum()) * (S - P)
    return from_matrix(mu.atoms, nu.atoms, Q)


def test_10_monotonicity_loop():
    rng = np.random.default_rng(10)
    worst_opt = 0.0
    for _ in range(30):
        x, mu, y, nu, _ = gauss_instance(rng, 5, 7)
        rep = solve_wmot(D(x, mu, mass_tol=1e-9), D(y, nu, mass_tol=1e-9), GAUSS)
        worst_opt = max(worst_opt, check_martingale_c_monotone(rep.coupling, GAUSS).improvement)
    pert = check_martingale_c_monotone(_perturbed_3x4(rng), GAUSS).improvement

    disagree = 0
    for k in range(500):
        x, mu, y, nu, _ = gauss_instance(rng, 4, 6)
        a, b = D(x, mu, mass_tol=1e-9), D(y, nu, mass_tol=1e-9)
        C = rng.standard_normal((x.size, y.size))
        plan = solve_linear_mot(a, b, C).plan
        if k % 2:
            other = solve_linear_mot(a, b, rng.standard_normal(C.shape)).plan
            plan = plan + rng.choice([1e-3, 0.3, 1.0]) * (other - plan)
        pi = from_matrix(x, y, plan / plan.sum())
        got = check_finite_optimality(pi, LinearCost((x, y, C))).optimal
        lp = TransportLP(x, mu, y, nu, C, martingale=True)
        dual_gap = float(np.sum(C * pi.to_matrix()[2])) - solve_lp(lp, "simplex").dual_value(lp)
        disagree += got != (dual_gap <= 1e-6)
    ok = worst_opt <= 2e-6 and pert > 1e-4 and disagree == 0
    record(10, "monotonicity loop", ok,
           f"optimizers {worst_opt:.1e}, perturbation {pert:.2e}, {disagree}/500 disagreements")


def test_11_determinism(tmp_path, vix_run, gauss_run):
    same = True
    for name, first in (("vix", vix_run[0]), ("gauss", gauss_run)):
        out = tmp_path / name
        assert cli_main(["stability", "--preset", name, "--out", str(out)]) == 0
        first_dir = first.config.out_dir
        for f in ("stability.csv", "stability.json"):
            same &= (out / f).read_bytes() == (Path(first_dir) / f).read_bytes()
    record(11, "determinism", same, "vix and gauss presets, CSV and JSON")
