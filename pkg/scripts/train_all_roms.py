"""Train the four ROMs on one benchmark and print the per-m test-error curves."""
import argparse

import numpy as np

from rte_rbm import bench
from rte_rbm.greedy import ROM_KINDS
from rte_rbm.problems import registry


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="homogeneous-1d", choices=sorted(registry()))
    ap.add_argument("--preset", default="quick", choices=("quick", "paper"))
    ap.add_argument("--tol-sratio", type=float, default=None)
    ap.add_argument("--n-test", type=int, default=None)
    ap.add_argument("--out", default=None, help="directory; each ROM's run is written to a subdirectory")
    args = ap.parse_args()

    for rom in ROM_KINDS:
        out = None if args.out is None else f"{args.out}/{rom}"
        run = bench.run_experiment(args.problem, rom, preset=args.preset, tol_sratio=args.tol_sratio,
                                   n_test=args.n_test, out=out)
        log = run["result"].log
        print(f"\n{rom}: terminal m = {run['result'].m}, status {log.status}, FOM solves {log.fom_solves}")
        print(f"{'m':>3} {'max E_L2':>10} {'max E_Res':>10} {'S-ratio':>10}")
        for rec, l2, res in zip(log.records, log.test_l2, log.test_res):
            print(f"{rec.m:>3} {np.max(l2):10.3e} {np.max(res):10.3e} {rec.spectral_ratio:10.3e}")


if __name__ == "__main__":
    main()
