"""Improvement of DRESS over the naive estimator across delta and n'.

Writes one CSV row per (ratio, n', delta) with the mean of n * (MSE_naive - MSE_dress),
its standard error and the one-tailed p-value.

    python scripts/regression_sweep.py --out sweep.csv --reps 200
"""
import argparse
import csv
import sys

from dress.simulation import RegressionConfig, default_threads, eps_for_delta, run_improvement_experiment


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--deltas", default="0,1,2,5,10")
    p.add_argument("--nprimes", default="100,1000,5000")
    p.add_argument("--ratios", default="poly:1,poly:2,kulsif")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--out", default="-")
    args = p.parse_args(argv)

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = None
    for ratio in args.ratios.split(","):
        for nprime in (int(v) for v in args.nprimes.split(",")):
            for target in (float(v) for v in args.deltas.split(",")):
                cfg = RegressionConfig(
                    d=args.d, n=args.n, nprime=nprime, sigma=args.sigma,
                    eps=eps_for_delta(target, args.n, args.sigma, args.d),
                    ratio=ratio, reps=args.reps, seed=args.seed,
                )
                row = run_improvement_experiment(cfg, args.threads).row()
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                    writer.writeheader()
                writer.writerow(row)
                fh.flush()
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
