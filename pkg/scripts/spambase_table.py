"""DRESS (KuLSIF weights) vs MLE logistic regression over a grid of n, n' and D.

Needs the UCI Spambase file:

    python scripts/spambase_table.py --data spambase.data --splits 50 --out table.csv
"""
import argparse
import csv
import sys

from dress.data import load_csv
from dress.simulation import ClassificationConfig, default_threads, run_classification


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--data", required=True)
    p.add_argument("--ns", default="200,500,800")
    p.add_argument("--nprimes", default="500,1000,2000")
    p.add_argument("--Ds", default="10,20,30,40,50,57")
    p.add_argument("--splits", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--out", default="-")
    args = p.parse_args(argv)

    ds = load_csv(args.data)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "nprime", "D", "dress_mean", "dress_sd", "mle_mean", "mle_sd", "p_value", "splits_used"])
    for nprime in (int(v) for v in args.nprimes.split(",")):
        for n in (int(v) for v in args.ns.split(",")):
            for D in (int(v) for v in args.Ds.split(",")):
                s = run_classification(ds, ClassificationConfig(n, nprime, D, args.splits, args.seed), args.threads)
                w.writerow([n, nprime, D, f"{s.dress_mean:.2f}", f"{s.dress_sd:.2f}", f"{s.mle_mean:.2f}",
                            f"{s.mle_sd:.2f}", f"{s.p_value:.3f}", len(s.records)])
                fh.flush()
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
