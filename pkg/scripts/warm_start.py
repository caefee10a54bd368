"""SI-DSA iterations on the pin-cell from zero and from reduced-density initial guesses."""
import argparse

from rte_rbm import bench
from rte_rbm.problems import Discretization, get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fine", type=int, default=40, help="cells per side of the fine mesh")
    ap.add_argument("--coarse", type=int, default=20, help="cells per side of the coarse mesh")
    ap.add_argument("--n-test", type=int, default=8)
    ap.add_argument("--m", type=int, nargs="+", default=[5, 10, 15])
    args = ap.parse_args()

    problem = get_problem("pin-cell-2d")
    quad = ("cl", 30, 6)
    out = bench.rom_initial_guess_study(problem, args.m, problem.test_set(args.n_test, 0),
                                        Discretization((args.fine, args.fine), quad),
                                        Discretization((args.coarse, args.coarse), quad))
    print(f"zero guess: {out['zero']:.2f}")
    print(f"{'m':>3} {'fine':>8} {'coarse':>8} {'S-ratio':>10}")
    for m, f, c, r in zip(out["m"], out["fine"], out["coarse"], out["ratio"]):
        print(f"{m:>3} {f:8.2f} {c:8.2f} {r:10.2e}")


if __name__ == "__main__":
    main()
