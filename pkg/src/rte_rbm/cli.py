"""Command-line interface: rte-rbm {train,predict,evaluate,bench-online,dsa-study,registry-dump}."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numba
import numpy as np

from . import bench
from . import fom as fom_mod
from .greedy import ROM_KINDS, VARIANTS
from .problems import Discretization, get_problem, registry

PRESETS = ("paper", "quick")
EXIT_INVARIANT = 3


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _mu1(text: str):
    return "center" if text == "center" else _floats(text)


def _count(text: str) -> int:
    """Parse sizes such as 212k, 1.9M or 5000."""
    scale = {"k": 1e3, "K": 1e3, "m": 1e6, "M": 1e6}
    if text and text[-1] in scale:
        return int(round(float(text[:-1]) * scale[text[-1]]))
    return int(float(text))


def _shape(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def configure_threads(requested):
    env = os.environ.get("RTE_RBM_THREADS")
    threads = int(env) if env else requested
    if threads:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    return threads or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rte-rbm", description="Reduced basis ROMs for parametric radiative transfer")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", required=True, choices=sorted(registry()))
        p.add_argument("--preset", default="quick", choices=PRESETS)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("train", help="run the greedy offline stage and persist the run")
    common(p)
    p.add_argument("--rom", required=True, choices=ROM_KINDS)
    p.add_argument("--kpoint", type=int, default=1)
    p.add_argument("--tol-sratio", type=float, default=None)
    p.add_argument("--max-m", type=int, default=60)
    p.add_argument("--mu1", type=_mu1, default="center")
    p.add_argument("--variant", default="standard", choices=VARIANTS)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--train-shape", type=_shape, default=None)
    p.add_argument("--record-train-residuals", action="store_true")
    p.add_argument("--zero-timings", action="store_true", help="write timing columns as 0 for byte-stable output")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("predict", help="evaluate a stored ROM at one parameter")
    p.add_argument("--artifacts", type=Path, required=True)
    p.add_argument("--mu", type=_floats, required=True)
    p.add_argument("--lift", type=Path, default=None, help="write U c to this .npy file")

    p = sub.add_parser("evaluate", help="per-m test errors of a stored ROM")
    p.add_argument("--artifacts", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("bench-online", help="FOM versus online ROM times across mesh sizes")
    p.add_argument("--artifacts", type=Path, required=True, help="output directory for the timing table")
    p.add_argument("--problem", default="lattice-2d", choices=sorted(registry()))
    p.add_argument("--n-list", default="212k,847k,1.9M")
    p.add_argument("--quadrature", type=_shape, default=(20, 6), help="CL quadrature (n_theta,n_xi)")
    p.add_argument("--m", type=int, default=15)
    p.add_argument("--mu", type=_floats, action="append", default=None)
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--train-shape", type=_shape, default=(5, 5))
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("dsa-study", help="SI-DSA iterations from zero and reduced-density initial guesses")
    p.add_argument("--problem", default="pin-cell-2d", choices=sorted(registry()))
    p.add_argument("--mesh", type=_shape, default=(80, 80))
    p.add_argument("--coarse-mesh", type=_shape, default=(40, 40))
    p.add_argument("--quadrature", type=_shape, default=(30, 6))
    p.add_argument("--m-list", default="5,10,15")
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--train-shape", type=_shape, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)

    sub.add_parser("registry-dump", help="print the benchmark registry as JSON")
    return parser


def _problem_json(problem) -> dict:
    def terms(ts):
        return [{"constant": t.coefficient.constant, "linear": list(t.coefficient.linear),
                 "boxes": [[list(b.lower), list(b.upper)] for b in t.boxes], "weighted": t.weight is not None}
                for t in ts]

    return {
        "name": problem.name, "dim_x": problem.dim_x, "lower": list(problem.lower), "upper": list(problem.upper),
        "scattering": terms(problem.scattering), "absorption": terms(problem.absorption),
        "n_sources": len(problem.sources), "has_inflow": problem.inflow is not None,
        "param_lower": list(problem.param_lower), "param_upper": list(problem.param_upper),
        "train_shape": list(problem.train_shape), "n_test": problem.n_test, "tol_sratio": problem.tol_sratio,
        "solver": problem.solver, "tol_si": problem.tol_si,
        "presets": {k: {"shape": list(v.shape), "quadrature": list(v.quadrature), "degree": v.degree}
                    for k, v in problem.presets.items()},
        "notes": problem.notes,
    }


def cmd_train(args) -> int:
    workers = configure_threads(args.threads)
    run = bench.run_experiment(args.problem, args.rom, preset=args.preset, tol_sratio=args.tol_sratio,
                               max_m=args.max_m, kpoint=args.kpoint, mu1=args.mu1, variant=args.variant,
                               seed=args.seed, n_test=args.n_test, train_shape=args.train_shape, out=args.out,
                               workers=workers, record_train_residuals=args.record_train_residuals,
                               zero_timings=args.zero_timings)
    res = run["result"]
    print(f"{args.problem} {args.rom}: m={res.m} status={res.log.status} fom_solves={res.log.fom_solves}")
    if not run["meta"]["pg_res_monotone"]:
        print("residual monotonicity violated for PG-Res", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def cmd_predict(args) -> int:
    rom = bench.StoredRom.load(args.artifacts)
    c = rom.solve(np.asarray(args.mu))
    np.savetxt(sys.stdout, c[None, :], fmt="%.17g", delimiter=",")
    if args.lift is not None:
        np.save(args.lift, rom.lift(c))
    return 0


def cmd_evaluate(args) -> int:
    workers = configure_threads(args.threads)
    rom = bench.StoredRom.load(args.artifacts)
    meta = rom.meta
    problem = get_problem(meta["problem"])
    system = fom_mod.build_system(problem, meta["preset"])
    seed = meta["seed"] if args.seed is None else args.seed
    mus = problem.test_set(args.n_test or meta["n_test"], seed)
    sols, failed = bench.solve_test_set(bench.FomCache(system), mus, workers)
    errs = bench.errors_by_m(system, meta["rom"], rom.basis(), mus[~failed], sols[:, ~failed],
                             meta["variant"], meta["rank_tol"])
    rows = [[m + 1, np.max(errs["l2"][m]), np.max(errs["res"][m]), np.max(errs["cond"][m])]
            for m in range(errs["l2"].shape[0])]
    header = ["m", "e_l2_test", "e_res_test", "max_cond"]
    out = args.out or args.artifacts / "evaluate.csv"
    bench._write_csv(out, header, rows)
    print(",".join(header))
    for r in rows:
        print(",".join(bench.fmt(v) for v in r))
    return 0


def cmd_bench_online(args) -> int:
    configure_threads(args.threads)
    problem = get_problem(args.problem)
    quad = ("cl", *args.quadrature)
    n_dirs = args.quadrature[0] * args.quadrature[1]
    nl = 2 ** problem.dim_x
    shapes = []
    for n in args.n_list.split(","):
        side = math.sqrt(_count(n) / (n_dirs * nl))
        # keep material regions aligned: round to a multiple of the coarsest aligned resolution
        base = problem.discretization("quick").shape[0]
        side = max(base, int(round(side / base)) * base)
        shapes.append((side, side))
    if args.mu:
        mus = args.mu
    elif args.problem == "lattice-2d":
        mus = [(0.6, 11.5), (1.4, 8.5)]
    else:
        mus = [tuple(problem.test_set(1)[0])]
    rows = bench.online_timing(problem, shapes, quad, args.m, np.asarray(mus), repeat=args.repeat,
                               train_shape=args.train_shape)
    args.artifacts.mkdir(parents=True, exist_ok=True)
    roms = list(ROM_KINDS)
    header = ["mu", "N", "fom_s", *roms]
    table = [[" ".join(bench.fmt(v) for v in r["mu"]), r["N"], r["fom_s"], *[r[k] for k in roms]] for r in rows]
    with open(args.artifacts / "bench_online.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([row[0], *[bench.fmt(v) for v in row[1:]]])
    print(f"{'mu':>14} {'N':>10} {'FOM':>10} " + " ".join(f"{k:>10}" for k in roms))
    for r in rows:
        mu = "(" + ",".join(f"{v:g}" for v in r["mu"]) + ")"
        print(f"{mu:>14} {r['N']:>10.2e} {r['fom_s']:>10.2e} " + " ".join(f"{r[k]:>10.2e}" for k in roms))
    return 0


def cmd_dsa_study(args) -> int:
    configure_threads(args.threads)
    problem = get_problem(args.problem)
    quad = ("cl", *args.quadrature)
    m_values = [int(v) for v in args.m_list.split(",")]
    mus = problem.test_set(args.n_test, args.seed)
    coarse = Discretization(args.coarse_mesh, quad) if args.coarse_mesh else None
    out = bench.rom_initial_guess_study(problem, m_values, mus, Discretization(args.mesh, quad), coarse,
                                        train_shape=args.train_shape)
    header = ["m", "spectral_ratio", "si_dsa_zero", "si_dsa_rom_fine", "si_dsa_rom_coarse"]
    rows = [[m, out["ratio"][i], out["zero"], out["fine"][i], out.get("coarse", [math.nan] * len(m_values))[i]]
            for i, m in enumerate(m_values)]
    print(",".join(header))
    for r in rows:
        print(",".join(bench.fmt(v) for v in r))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        bench._write_csv(args.out / "dsa_study.csv", header, rows)
    return 0


def cmd_registry_dump(args) -> int:
    json.dump({k: _problem_json(v) for k, v in registry().items()}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate, "bench-online": cmd_bench_online,
            "dsa-study": cmd_dsa_study, "registry-dump": cmd_registry_dump}


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
