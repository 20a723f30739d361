"""Compare the eta = phi improvement formula with replicated sandwich variances.

Prints the formula matrix, both Monte Carlo estimates and their relative
Frobenius errors for each requested delta.

    python scripts/validate_improvement.py --deltas 2,5 --reps 500
"""
import argparse

import numpy as np

from dress.simulation import RegressionConfig, default_threads, eps_for_delta, sandwich_validation


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--deltas", default="5")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--nprime", type=int, default=5000)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--basis", type=int, default=1)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--eval-samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=default_threads())
    args = p.parse_args(argv)

    np.set_printoptions(precision=5, suppress=True)
    for target in (float(v) for v in args.deltas.split(",")):
        cfg = RegressionConfig(
            d=args.d, n=args.n, nprime=args.nprime, sigma=args.sigma,
            eps=eps_for_delta(target, args.n, args.sigma, args.d),
            ratio=f"poly:{args.basis}", eta="naive", reps=args.reps, seed=args.seed,
        )
        v = sandwich_validation(cfg, args.eval_samples, args.threads)
        print(f"delta={target:g} eps={cfg.eps:.5f} reps={v.reps_used}")
        print("formula\n", v.formula)
        print(f"noise-integrated (rel. error {v.rel_error:.3f})\n", v.rao_blackwell)
        print(f"plain (rel. error {v.rel_error_plain:.3f})\n", v.plain)


if __name__ == "__main__":
    main()
