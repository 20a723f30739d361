"""Command-line front end: ``dress {simulate,classify,diff,ratio}``.

Exit codes: 0 ok, 1 validation outside tolerance, 2 unstable experiment,
3 rank/singularity failure, 64 usage error, 66 input file problem.

Every command writes its outputs plus ``manifest.json`` into ``--out``.  The
result files are deterministic given the flags; the manifest additionally
records wall-clock timestamps.  ``--config manifest.json`` (or a flat JSON
object keyed by option name) re-runs with the recorded configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from .data import SPAMBASE_SOURCE, load_csv
from .density_ratio import (
    MomentFunction,
    NAIVE,
    QIN,
    PolyBasis,
    kulsif_fit,
    median_bandwidth,
    solve_ratio_moment,
    zero_model,
)
from .errors import ContractViolation, DressError, IngestError
from .simulation import (
    ClassificationConfig,
    RegressionConfig,
    default_threads,
    delta,
    eps_for_delta,
    replication_rng,
    run_classification,
    run_improvement_experiment,
    sandwich_validation,
    true_function,
)

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_NOINPUT = 0, 1, 64, 66

RESULT_COLUMNS = [
    "delta", "eps", "mean_improvement", "std_error", "p_value", "reps_used", "failures",
    "d", "n", "nprime", "sigma", "ratio", "eta", "reps", "seed", "ridge", "integrate_noise",
]
SPLIT_COLUMNS = ["split", "dress_error", "mle_error", "test_size"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _basis_degree(text: str) -> int:
    if not text.startswith("poly:"):
        raise argparse.ArgumentTypeError("basis must be poly:L")
    try:
        return int(text.split(":", 1)[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad basis {text!r}") from None


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $DRESS_THREADS or CPU count)")
    p.add_argument("--config", type=Path, default=None, help="JSON config or manifest to take defaults from")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dress", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="regression improvement sweep over delta")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--nprime", type=int, default=5000)
    p.add_argument("--sigma", type=float, default=0.2)
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--delta-grid", type=_floats, default=None)
    grid.add_argument("--eps-grid", type=_floats, default=None)
    p.add_argument("--ratio", default="poly:1", help="comma list of poly:L and/or kulsif")
    p.add_argument("--eta", choices=["naive", "qin"], default="qin")
    p.add_argument("--ridge", type=float, default=1e-2, help="KuLSIF ridge")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--integrate-noise", action="store_true",
                   help="average the response noise out analytically in each replication")
    _common(p)

    p = sub.add_parser("classify", help="DRESS (KuLSIF) vs MLE logistic regression on a CSV dataset")
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--label-column", default="-1")
    p.add_argument("--positive-label", default="1")
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--nprime", type=int, default=2000)
    p.add_argument("--D", type=int, default=20)
    p.add_argument("--splits", type=int, default=50)
    p.add_argument("--ridge", type=float, default=1e-2)
    p.add_argument("--bandwidth", type=float, default=None)
    _common(p)

    p = sub.add_parser("diff", help="asymptotic improvement matrices for the regression example")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None, help="alternative to --eps (uses --sigma)")
    p.add_argument("--basis", type=_basis_degree, default=1, metavar="poly:L")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--nprime", type=int, default=5000)
    p.add_argument("--mode", choices=["eta-phi", "optimal", "general"], default="eta-phi")
    p.add_argument("--eta", choices=["naive", "qin", "optimal"], default="naive",
                   help="moment function for --mode general")
    p.add_argument("--eval-samples", type=int, default=100_000)
    p.add_argument("--validate", action="store_true")
    p.add_argument("--reps", type=int, default=500, help="replications for --validate")
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--tolerance", type=float, default=0.25, help="relative Frobenius tolerance for --validate")
    _common(p)

    p = sub.add_parser("ratio", help="density-ratio fit diagnostics on p = q Gaussian data")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--nprime", type=int, default=500)
    p.add_argument("--basis", type=_basis_degree, default=1, metavar="poly:L")
    p.add_argument("--eta", choices=["naive", "qin"], default="qin")
    p.add_argument("--ridge", type=float, default=1e-2)
    p.add_argument("--bandwidth", type=float, default=None)
    _common(p)
    return parser


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, Path):
        return str(v)
    return v


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(rows, columns, path: Path) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    path.write_text(buf.getvalue())


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise IngestError(f"cannot read config {args.config}: {exc}") from exc
        cfg = cfg.get("config", cfg)
        if cfg.get("command", args.command) != args.command:
            raise UsageError(f"config is for command {cfg['command']!r}, not {args.command!r}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {k: v for k, v in cfg.items() if k in known and k not in ("config", "command")}
        for k in ("out", "data"):
            if defaults.get(k) is not None:
                defaults[k] = Path(defaults[k])
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "threads", "func")}


def _cmd_simulate(args) -> tuple[int, dict]:
    if args.delta_grid is None and args.eps_grid is None:
        raise UsageError("one of --delta-grid or --eps-grid is required")
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    if not args.sigma > 0:
        raise UsageError("--sigma must be positive")
    if args.eps_grid is not None:
        eps_list = args.eps_grid
    else:
        eps_list = [eps_for_delta(dl, args.n, args.sigma, args.d) for dl in args.delta_grid]
    rows = []
    for ratio in [r.strip() for r in args.ratio.split(",") if r.strip()]:
        for eps in eps_list:
            cfg = RegressionConfig(
                d=args.d, n=args.n, nprime=args.nprime, sigma=args.sigma, eps=eps, ratio=ratio,
                eta=args.eta, reps=args.reps, seed=args.seed, ridge=args.ridge,
                integrate_noise=args.integrate_noise,
            )
            summary = run_improvement_experiment(cfg, args.threads)
            rows.append((summary.row(), summary.failures))
    _write_csv([r for r, _ in rows], RESULT_COLUMNS, args.out / "results.csv")
    _dump_json(
        {"rows": [dict(r, failure_records=f) for r, f in rows], "columns": RESULT_COLUMNS},
        args.out / "summary.json",
    )
    for r, _ in rows:
        print(f"ratio={r['ratio']} delta={r['delta']:.3f} improvement={r['mean_improvement']:+.5f} "
              f"se={r['std_error']:.5f} p={r['p_value']:.4f}")
    return EXIT_OK, {"results": "results.csv", "summary": "summary.json"}


def _cmd_classify(args) -> tuple[int, dict]:
    if args.data is None:
        raise IngestError(f"--data is required; expected source: {SPAMBASE_SOURCE}")
    if not args.data.is_file():
        raise IngestError(f"data file not found: {args.data}\nexpected source: {SPAMBASE_SOURCE}")
    ds = load_csv(args.data, args.label_column, args.positive_label)
    if not 1 <= args.D <= ds.dim:
        raise ContractViolation(f"--D {args.D} outside 1..{ds.dim} for this dataset")
    cfg = ClassificationConfig(args.n, args.nprime, args.D, args.splits, args.seed, args.ridge, args.bandwidth)
    s = run_classification(ds, cfg, args.threads)
    _write_csv(s.records, SPLIT_COLUMNS, args.out / "splits.csv")
    _dump_json(
        {
            "dataset": {"path": args.data.name, "rows": ds.n_total, "features": ds.dim, "rejected_rows": ds.n_rejected},
            "dress_error_mean": s.dress_mean, "dress_error_sd": s.dress_sd,
            "mle_error_mean": s.mle_mean, "mle_error_sd": s.mle_sd,
            "p_value": s.p_value, "splits_used": len(s.records), "failures": s.failures, "config": s.config,
        },
        args.out / "summary.json",
    )
    print(f"n={cfg.n} n'={cfg.nprime} D={cfg.D}: DRESS {s.dress_mean:.2f}±{s.dress_sd:.2f}  "
          f"MLE {s.mle_mean:.2f}±{s.mle_sd:.2f}  p={s.p_value:.3f}")
    return EXIT_OK, {"splits": "splits.csv", "summary": "summary.json"}


def _cmd_diff(args) -> tuple[int, dict]:
    if (args.eps is None) == (args.delta is None):
        raise UsageError("give exactly one of --eps or --delta")
    eps = args.eps if args.eps is not None else eps_for_delta(args.delta, args.n, args.sigma, args.d)
    if args.basis < 1 or args.eval_samples < 2:
        raise UsageError("basis degree and --eval-samples must be positive")
    X = replication_rng(args.seed, 2**31, 2).standard_normal((args.eval_samples, args.d))
    spec = asy.UbarSpec(asy.ANALYTIC_REGRESSION, np.ones(args.d), f=lambda Z: true_function(Z, eps))
    U, Phi = asy.ubar_samples(spec, X), PolyBasis(args.basis)(X)
    n, npr = args.n, args.nprime
    if args.mode == "eta-phi":
        report = asy.diff_eta_phi(U, Phi, n, npr)
    elif args.mode == "optimal":
        report = asy.diff_optimal(U, Phi, n, npr)
    else:
        eta = Phi
        if args.eta == "optimal":
            eta = Phi + asy.optimal_phitilde(U, Phi, n, npr).phitilde_samples
        report = asy.diff_general(U, Phi, eta, n, npr)
    out = {"eps": eps, "delta": delta(eps, n, args.sigma, args.d), "basis": f"poly:{args.basis}", "report": report.to_dict()}
    try:
        gap = asy.diff_optimal(U, Phi, n, npr).diff_matrix - asy.diff_eta_phi(U, Phi, n, npr).diff_matrix
        out["optimal_minus_eta_phi_min_eigenvalue"] = float(np.linalg.eigvalsh(gap).min())
        out["optimal_dominates_eta_phi"] = bool(out["optimal_minus_eta_phi_min_eigenvalue"] >= -1e-8)
    except asy.RankDeficient as exc:
        if args.mode == "optimal":
            raise
        out["optimal_dominates_eta_phi"] = None
        out["dominance_note"] = str(exc)
    code = EXIT_OK
    if args.validate:
        cfg = RegressionConfig(d=args.d, n=n, nprime=npr, sigma=args.sigma, eps=eps, ratio=f"poly:{args.basis}",
                               eta="naive", reps=args.reps, seed=args.seed)
        v = sandwich_validation(cfg, args.eval_samples, args.threads)
        out["validation"] = {
            "formula": v.formula, "empirical_rao_blackwell": v.rao_blackwell, "empirical_plain": v.plain,
            "rel_error": v.rel_error, "rel_error_plain": v.rel_error_plain, "tolerance": args.tolerance,
            "within_tolerance": bool(v.rel_error <= args.tolerance), "reps_used": v.reps_used,
        }
        if v.rel_error > args.tolerance:
            code = EXIT_VALIDATION
    _dump_json(out, args.out / "report.json")
    print(json.dumps(_jsonable({"mode": report.mode, "diff_matrix": report.diff_matrix,
                                "min_eigenvalue": report.min_eigenvalue()})))
    return code, {"report": "report.json"}


def _cmd_ratio(args) -> tuple[int, dict]:
    if min(args.n, args.nprime) < 2:
        raise UsageError("--n and --nprime must be at least 2")
    Xl = replication_rng(args.seed, 0, 0).standard_normal((args.n, args.d))
    Xu = replication_rng(args.seed, 0, 1).standard_normal((args.nprime, args.d))
    mf = MomentFunction(NAIVE if args.eta == "naive" else QIN)
    pfit = solve_ratio_moment(Xl, Xu, zero_model(PolyBasis(args.basis), args.d), mf)
    h = args.bandwidth or median_bandwidth(np.vstack([Xl, Xu]), seed=args.seed)
    kfit = kulsif_fit(Xl, Xu, h, args.ridge)
    wk = kfit(Xl)
    out = {
        "parametric": {"basis": f"poly:{args.basis}", "eta": mf.kind, "theta": pfit.theta,
                       "iterations": pfit.iterations, "residual": pfit.residual,
                       "mean_abs_weight_minus_one": float(np.mean(np.abs(pfit.model(Xl) - 1)))},
        "kulsif": {"bandwidth": h, "ridge": args.ridge, "condition": kfit.condition,
                   "normal_residual": kfit.normal_residual, "warnings": kfit.warnings,
                   "mean_abs_weight_minus_one": float(np.mean(np.abs(wk - 1))),
                   "clamped_fraction": float(np.mean(kfit.raw(Xl) < kfit.floor))},
    }
    _dump_json(out, args.out / "ratio.json")
    print(json.dumps(_jsonable(out)))
    return EXIT_OK, {"ratio": "ratio.json"}


COMMANDS = {"simulate": _cmd_simulate, "classify": _cmd_classify, "diff": _cmd_diff, "ratio": _cmd_ratio}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        args = _parse(argv)
        if args.threads is None:
            args.threads = default_threads()
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        args.out.mkdir(parents=True, exist_ok=True)
        code, outputs = COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except DressError as exc:
        print(f"dress: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    _dump_json(
        {
            "command": args.command,
            "argv": argv,
            "config": dict(_config_echo(args), command=args.command),
            "seed": args.seed,
            "version": __version__,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": outputs,
            "exit_code": code,
        },
        args.out / "manifest.json",
    )
    return code


if __name__ == "__main__":
    sys.exit(main())
