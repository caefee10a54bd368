"""Average SI-DSA iteration counts on the 2D benchmarks."""
import argparse

import numpy as np

from rte_rbm.fom import build_system, solve
from rte_rbm.problems import get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="paper")
    ap.add_argument("--n-test", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for name in ("lattice-2d", "line-source-2d", "pin-cell-2d"):
        problem = get_problem(name)
        system = build_system(problem, args.preset)
        sols = [solve(system, mu, method="si-dsa") for mu in problem.test_set(args.n_test, args.seed)]
        its = np.array([s.iterations for s in sols])
        secs = np.array([s.seconds for s in sols])
        print(f"{name:>15}: N = {system.size}, iterations mean {its.mean():.2f} (min {its.min()}, max {its.max()}), "
              f"{secs.mean():.1f} s per solve")


if __name__ == "__main__":
    main()
