"""Condition numbers of the QR route versus the normal equations at a fixed basis size."""
import argparse

from rte_rbm import bench
from rte_rbm.fom import build_system
from rte_rbm.greedy import GreedyConfig, train
from rte_rbm.problems import get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="varying-scattering-1d")
    ap.add_argument("--preset", default="paper")
    ap.add_argument("--m", type=int, default=15)
    ap.add_argument("--n-test", type=int, default=10)
    args = ap.parse_args()

    problem = get_problem(args.problem)
    system = build_system(problem, args.preset)
    basis = train(system, GreedyConfig("pg-res", problem.training_set(), 1e-300, max_m=args.m)).basis
    out = bench.conditioning_comparison(system, basis, basis.m, problem.test_set(args.n_test, 0))
    print(f"m = {basis.m}")
    print(f"{'cond QR':>10} {'cond normal':>12} {'ratio to QR^2':>14}")
    for q, n, r in zip(out["qr"], out["normal"], out["ratio"]):
        print(f"{q:10.3e} {n:12.3e} {r:14.6f}")


if __name__ == "__main__":
    main()
