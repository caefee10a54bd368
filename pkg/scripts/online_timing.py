"""FOM and online ROM solve times on the lattice as the mesh is refined."""
import argparse

import numpy as np

from rte_rbm import bench
from rte_rbm.greedy import ROM_KINDS
from rte_rbm.problems import get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base", type=int, default=21, help="cells per side of the coarsest mesh (a multiple of 7)")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--m", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=30)
    args = ap.parse_args()

    shapes = [(args.base * k, args.base * k) for k in range(1, args.levels + 1)]
    mus = np.array([[0.6, 11.5], [1.4, 8.5]])
    rows = bench.online_timing(get_problem("lattice-2d"), shapes, ("cl", 20, 6), args.m, mus, repeat=args.repeat)
    print(f"{'mu':>12} {'N':>9} {'FOM s':>9} " + " ".join(f"{r:>10}" for r in ROM_KINDS))
    for row in rows:
        print(f"{str(row['mu']):>12} {row['N']:>9} {row['fom_s']:9.3f} "
              + " ".join(f"{row[r] * 1e6:8.1f}us" for r in ROM_KINDS))


if __name__ == "__main__":
    main()
