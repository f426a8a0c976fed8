"""Command-line interface: ``wmot <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .applications import sbm_simulate, sbm_solve, vix_superreplication
from .couplings import adapted_wasserstein, is_martingale, read_coupling_json, write_coupling_json
from .costs import parse_cost
from .errors import InfeasibleError, NumericError, WmotError
from .harness import load_config, parse_law, preset, run_stability
from .measures import check_convex_order, format_measure_csv, quantize, read_measure_csv
from .monotonicity import check_martingale_c_monotone
from .solver import SolveOptions, solve_wmot

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", dest="fmt", action="store_const", const="json", help="JSON output")
    g.add_argument("--csv", dest="fmt", action="store_const", const="csv", help="CSV output")


def _summary(d: dict, fmt: str | None, default: str = "json") -> str:
    if (fmt or default) == "json":
        return json.dumps(d, indent=1) + "\n"
    keys = [k for k, v in d.items() if not isinstance(v, (dict, list))]
    return ",".join(keys) + "\n" + ",".join(repr(d[k]) if isinstance(d[k], float) else str(d[k])
                                             for k in keys) + "\n"


def cmd_solve(a):
    mu, nu = read_measure_csv(a.mu), read_measure_csv(a.nu)
    opts = SolveOptions(martingale=not a.no_martingale, max_iterations=a.max_iter,
                        gap_tolerance=a.tol, step_rule=a.step,
                        initial="random" if a.random_start else None, seed=a.seed)
    rep = solve_wmot(mu, nu, parse_cost(a.cost), opts)
    if a.coupling_out:
        write_coupling_json(rep.coupling, a.coupling_out)
    if a.trace:
        Path(a.trace).write_text(rep.trace_csv(), encoding="utf-8")
    if a.fmt == "csv":
        _emit(_summary({"value": rep.value, "gap": rep.gap, "iterations": rep.iterations,
                        "converged": rep.converged}, "csv"), a.out)
    else:
        _emit(rep.to_json() + "\n", a.out)
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_check_order(a):
    res = check_convex_order(read_measure_csv(a.mu), read_measure_csv(a.nu), tol=a.tol)
    if a.fmt:
        _emit(_summary({"holds": res.holds, "mean_gap": res.mean_gap, "gap": res.gap,
                        "witness": res.witness}, a.fmt), None)
    else:
        print("true" if res.holds else f"false (witness {res.witness!r}, gap {res.gap!r})")
    return EXIT_OK


def cmd_aw(a):
    d = adapted_wasserstein(read_coupling_json(a.pi), read_coupling_json(a.pi2), a.r)
    if a.fmt:
        _emit(_summary({"r": a.r, "aw": d}, a.fmt), None)
    else:
        print(repr(d))
    return EXIT_OK


def cmd_vix(a):
    res = vix_superreplication(read_measure_csv(a.mu), read_measure_csv(a.nu), a.delta)
    d = res.to_dict()
    if a.out:
        Path(a.out).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")
    if a.fmt:
        d.pop("coupling")
        _emit(_summary(d, a.fmt), None)
    else:
        print(repr(res.d_super))
    return EXIT_OK if res.report.converged else EXIT_NUMERIC


def cmd_sbm(a):
    if a.grid < 2 or a.paths < 1:
        raise _UsageError("sbm: --grid must be at least 2 and --paths positive")
    model = sbm_solve(read_measure_csv(a.mu), read_measure_csv(a.nu))
    ens = sbm_simulate(model, np.linspace(0.0, 1.0, a.grid), a.paths, a.seed)
    _emit(ens.to_csv(), a.out)
    if a.out:
        info = {"value": model.value, "mt": model.mt, "gap": model.report.gap,
                "paths": a.paths, "grid": a.grid, "seed": a.seed}
        sys.stdout.write(_summary(info, a.fmt))
    return EXIT_OK


def cmd_monotone(a):
    pi = read_coupling_json(a.coupling)
    if not is_martingale(pi):
        raise InfeasibleError("coupling is not a martingale coupling")
    res = check_martingale_c_monotone(pi, parse_cost(a.cost), a.gap_tol)
    d = res.to_dict()
    _emit(json.dumps(d, indent=1) + "\n", a.out)
    if a.out:
        print("true" if res.monotone else f"false (improvement {res.improvement!r})")
    return EXIT_OK


def cmd_stability(a):
    if a.config:
        cfg = load_config(a.config)
    else:
        cfg = preset(a.preset)
    over = {}
    if a.levels:
        over["levels"] = tuple(int(v) for v in a.levels.split(","))
    if a.seed is not None:
        over["seed"] = a.seed
    if a.out:
        over["out_dir"] = a.out
    if over:
        from dataclasses import replace
        cfg = replace(cfg, **over)
    table = run_stability(cfg, threads=a.threads)
    if a.fmt == "json":
        sys.stdout.write(table.to_json())
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK if table.metadata["converged"] else EXIT_NUMERIC


def cmd_quantize(a):
    m = quantize(parse_law(a.law), a.n, a.scheme, U=None if a.random_u else a.U, seed=a.seed)
    if a.fmt == "json":
        _emit(json.dumps({"atoms": m.atoms.tolist(), "weights": m.weights.tolist()}) + "\n", a.out)
    else:
        _emit(format_measure_csv(m), a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wmot", description="Weak martingale transport toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("solve", help="solve a weak (martingale) transport problem")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--cost", required=True, help="linear:<expr|csv>, vix:delta=D or gauss:rho=R")
    s.add_argument("--no-martingale", action="store_true")
    s.add_argument("--max-iter", type=int, default=5000)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--step", choices=("line-search", "classic"), default="line-search")
    s.add_argument("--random-start", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--coupling-out")
    s.add_argument("--trace")
    _fmt_flags(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("check-order", help="test mu <=_c nu")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    _fmt_flags(s)
    s.set_defaults(func=cmd_check_order)

    s = sub.add_parser("aw-dist", help="adapted Wasserstein distance of two couplings")
    s.add_argument("--pi", required=True)
    s.add_argument("--pi2", required=True)
    s.add_argument("--r", type=float, default=1.0)
    _fmt_flags(s)
    s.set_defaults(func=cmd_aw)

    s = sub.add_parser("vix", help="model-free VIX future upper bound")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--out")
    _fmt_flags(s)
    s.set_defaults(func=cmd_vix)

    s = sub.add_parser("sbm", help="simulate the stretched Brownian motion")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--paths", type=int, default=10000)
    s.add_argument("--grid", type=int, default=21)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    _fmt_flags(s)
    s.set_defaults(func=cmd_sbm)

    s = sub.add_parser("monotone-check", help="martingale C-monotonicity of a coupling")
    s.add_argument("--coupling", required=True)
    s.add_argument("--cost", required=True)
    s.add_argument("--gap-tol", type=float, default=1e-6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_monotone)

    s = sub.add_parser("stability", help="value/optimizer stability across quantization levels")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config")
    g.add_argument("--preset", choices=("vix", "gauss", "normal", "identity"))
    s.add_argument("--levels")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--threads", type=int, help="worker threads (default: WMOT_THREADS, 0 = serial)")
    _fmt_flags(s)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("quantize", help="n-point quantization of a parametric law")
    s.add_argument("--law", required=True, help="e.g. lognormal:mean=1,sigma=0.2")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--scheme", choices=("block-mean", "quantile"), default="block-mean")
    s.add_argument("--U", type=float, default=0.5)
    s.add_argument("--random-u", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    _fmt_flags(s)
    s.set_defaults(func=cmd_quantize)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (WmotError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
