"""Compare stacked-factor and Pythagorean residual evaluation along a PG-Res basis."""
import argparse

from rte_rbm import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="two-material-1d")
    ap.add_argument("--preset", default="paper")
    ap.add_argument("--tol-sratio", type=float, default=1e-10)
    args = ap.parse_args()

    run = bench.run_experiment(args.problem, "pg-res", preset=args.preset, tol_sratio=args.tol_sratio, variant="prime")
    mus = run["test_mus"][~run["failed"]]
    cmp = bench.residual_method_comparison(run["system"], run["result"].basis, mus)
    print(f"{'m':>3} {'stacked':>10} {'pythagorean':>12} {'clamped':>8}")
    for k, (a, v, c) in enumerate(zip(cmp["alg5"], cmp["variant1"], cmp["clamped"]), start=1):
        print(f"{k:>3} {a.max():10.3e} {v.max():12.3e} {int(c.sum()):>8}")


if __name__ == "__main__":
    main()
