"""Run a stability preset and print the table.

    python scripts/stability.py vix --out results/vix
    python scripts/stability.py gauss --levels 16,64,256
"""

import argparse
import time

from wmot.harness import preset, run_stability


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("preset", choices=("vix", "gauss", "normal", "identity"))
    ap.add_argument("--levels", default="16,64,256,1024")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    ap.add_argument("--save-couplings", action="store_true")
    a = ap.parse_args()
    cfg = preset(a.preset, levels=tuple(int(v) for v in a.levels.split(",")), seed=a.seed,
                 out_dir=a.out, save_couplings=a.save_couplings)
    t0 = time.perf_counter()
    table = run_stability(cfg)
    print(table.to_csv(), end="")
    rows = table.rows
    for prev, cur in zip(rows, rows[1:-1]):
        print(f"# |V_{prev.n} - V_ref| = {prev.abs_diff_ref:.3e} -> |V_{cur.n} - V_ref| = {cur.abs_diff_ref:.3e}")
    print(f"# converged: {table.metadata['converged']}, {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
