"""Command-line front end: ``nmm-scalelab <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data or fitting error.

Commands that produce a JSON document write it to ``--out`` (``-`` means
stdout) and print a short human-readable summary otherwise. ``--input`` also
accepts ``fixture:<name>`` for the bundled datasets (early, late, moe,
heldout_8b).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fitloss, flops, frontier, hull, ingest, metrics, resample, sparse, specialization
from .core import Arch, EvalSet, LossSurfaceFit
from .errors import ScaleLabError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Output:
    def __init__(self, digits: int | None, stdout=None, stderr=None):
        self.digits = digits
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr

    def num(self, x: float) -> str:
        return repr(float(x)) if self.digits is None else f"{float(x):.{self.digits}g}"

    def emit(self, doc: dict, out: str | None, summary: str):
        text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
        if out == "-":
            self.stdout.write(text)
            self.stderr.write(summary + "\n")
            return
        if out:
            Path(out).write_text(text, encoding="utf-8")
        self.stdout.write(summary + "\n")


# --- helpers ---------------------------------------------------------------------

def _load_runs(source: str):
    if source.startswith("fixture:"):
        return ingest.load_fixture(source.split(":", 1)[1])
    return ingest.load_runs(source)


def _select(records, args, single_group: bool = True):
    sel = [r for r in records
           if (args.arch is None or r.arch is Arch(args.arch))
           and (args.mixture is None or r.mixture == args.mixture)
           and (args.eval_set is None or r.eval_set is EvalSet(args.eval_set))]
    if not sel:
        raise ScaleLabError("no runs match --arch/--mixture/--eval-set")
    groups = {(r.arch.value, r.mixture, r.eval_set.value) for r in sel}
    if single_group and len(groups) > 1:
        raise ScaleLabError(f"input mixes {len(groups)} (arch, mixture, eval_set) groups; "
                            "narrow it with --arch/--mixture/--eval-set")
    return sel


def _load_dense_fit(path) -> LossSurfaceFit:
    fit = ingest.load_fit(path)
    if not isinstance(fit, LossSurfaceFit):
        raise ScaleLabError(f"--fit {path}: expected a loss_surface fit, got {type(fit).__name__}")
    return fit


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _fit_summary(fit: LossSurfaceFit, o: _Output) -> str:
    return (f"E={o.num(fit.e_irreducible)} A={o.num(fit.a_coef)} B={o.num(fit.b_coef)} "
            f"alpha={o.num(fit.alpha)} beta={o.num(fit.beta)} objective={o.num(fit.objective)} "
            f"converged={str(fit.converged).lower()}")


# --- commands ---------------------------------------------------------------------

def cmd_fit(args, o: _Output):
    recs = _select(_load_runs(args.input), args)
    cfg = fitloss.FitConfig(huber_delta=args.delta)
    fit = fitloss.fit(recs, cfg, threads=args.threads)
    o.emit(ingest.fit_to_dict(fit), args.out, _fit_summary(fit, o))


def cmd_frontier(args, o: _Output):
    fit = _load_dense_fit(args.fit)
    if args.method == "closed-form":
        if args.relation != "early":
            raise UsageError("--method closed-form supports only --relation early")
        laws = frontier.closed_form_frontier(fit)
    else:
        if args.flops:
            budgets = _floats(args.flops, "--flops")
        elif args.input:
            budgets = frontier.run_flops_values(_load_runs(args.input), arch=args.arch)
        else:
            raise UsageError("--method regression needs --flops or --input")
        relation = None
        if args.relation == "late":
            if args.vision_p is not None and args.vision_q is not None:
                model = (args.vision_p, args.vision_q)
            elif args.input:
                model = frontier.fit_vision_linear([r for r in _load_runs(args.input) if r.arch is Arch.LATE])
            else:
                raise UsageError("--relation late needs --vision-p/--vision-q or late runs via --input")
            relation = frontier.make_late_relation(model, args.vision_offset)
        grid = frontier.TokenGrid(args.d_min, args.d_max, args.d_points)
        laws = frontier.regress_frontier(fit, budgets, relation, grid)
    cols = frontier.exponent_columns(laws)
    summary = " ".join(f"{k}={o.num(v)}" for k, v in cols.items())
    o.emit(ingest.fit_to_dict(laws), args.out, summary)


def cmd_hull(args, o: _Output):
    recs = _select(_load_runs(args.input), args)
    law = hull.compute_law_from_records(recs, args.min_flops)
    o.emit(ingest.fit_to_dict(law), args.out, f"k={o.num(law.k)} c={o.num(law.p)}")


def cmd_predict(args, o: _Output):
    fit = _load_dense_fit(args.fit)
    ns, ds = _floats(args.n, "--n"), _floats(args.d, "--d")
    if len(ns) != len(ds) and 1 not in (len(ns), len(ds)):
        raise UsageError("--n and --d must have equal lengths or one value")
    width = max(len(ns), len(ds))
    for n, d in zip(ns * (width if len(ns) == 1 else 1), ds * (width if len(ds) == 1 else 1)):
        o.stdout.write(o.num(fitloss.predict_loss(fit, n, d)) + "\n")


def cmd_bootstrap(args, o: _Output):
    recs = _select(_load_runs(args.input), args)
    summary = resample.bootstrap(recs, fitloss.FitConfig(huber_delta=args.delta), iterations=args.iters,
                                 seed=args.seed, threads=args.threads)
    mean, std = summary.mean, summary.std
    lines = ["coef,mean,std"] + [f"{k},{o.num(mean[k])},{o.num(std[k])}" for k in resample.COEFFICIENTS]
    o.emit(summary.to_dict(), args.out, "\n".join(lines))


def cmd_sparse_fit(args, o: _Output):
    recs = _select(_load_runs(args.input), args, single_group=False)
    fixed = {}
    for item in args.fix or []:
        name, _, value = item.partition("=")
        try:
            fixed[name] = float(value)
        except ValueError:
            raise UsageError(f"--fix expects name=value, got {item!r}") from None
    fit = sparse.fit_sparse(recs, sparse.SparseFitConfig(huber_delta=args.delta, fixed=fixed), threads=args.threads)
    summary = " ".join(f"{k}={o.num(getattr(fit, k))}" for k in sparse.PARAMS)
    o.emit(ingest.fit_to_dict(fit), args.out, summary)


def cmd_spec_score(args, o: _Output):
    table = ingest.load_assignments(args.assignments)
    o.stdout.write("layer,score\n")
    for layer, score in enumerate(specialization.layer_scores(table, args.metric)):
        o.stdout.write(f"{layer},{o.num(score)}\n")


def cmd_flops(args, o: _Output):
    if args.arch == "late":
        if args.n_vision is None:
            raise UsageError("--arch late needs --n-vision")
        frac = flops.DEFAULT_VISION_TOKEN_FRACTION if args.vision_frac is None else args.vision_frac
        value = flops.late_flops(args.n_vision, args.n, args.d, frac)
    elif args.arch == "moe":
        value = flops.moe_flops(args.n, args.d)
    else:
        value = flops.early_flops(args.n, args.d)
    o.stdout.write(o.num(value) + "\n")


def cmd_eval(args, o: _Output):
    fit = _load_dense_fit(args.fit)
    recs = _select(_load_runs(args.input), args, single_group=False)
    ev = metrics.evaluate(fit, recs)
    o.stdout.write("mse,r2,mae_percent\n")
    o.stdout.write(f"{o.num(ev.mse)},{o.num(ev.r_squared)},{o.num(ev.mae_percent)}\n")


# --- parser -------------------------------------------------------------------------

def _add_filters(p, eval_default="avg"):
    p.add_argument("--arch", choices=[a.value for a in Arch])
    p.add_argument("--mixture")
    p.add_argument("--eval-set", default=eval_default, choices=[e.value for e in EvalSet])


def build_parser() -> argparse.ArgumentParser:
    def common_options(p, default):
        p.add_argument("--threads", type=int, default=default,
                       help="cap on worker threads (default: $NMM_SCALELAB_THREADS or 1)")
        p.add_argument("--digits", type=int, default=default,
                       help="round printed numbers to this many significant digits")
        p.add_argument("--config", default=default, help="JSON file of option defaults; explicit flags win")

    parser = _Parser(prog="nmm-scalelab", description="Scaling-law estimation from training-run logs.")
    common_options(parser, None)
    # the same options after the subcommand; SUPPRESS keeps an absent flag from masking the global one
    common = _Parser(add_help=False)
    common_options(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    add_parser = sub.add_parser
    sub.add_parser = lambda *a, **k: add_parser(*a, parents=[common], **k)

    p = sub.add_parser("fit", help="fit the loss law to runs")
    p.add_argument("--input", required=True)
    _add_filters(p)
    p.add_argument("--delta", type=float, default=1e-3, help="Huber transition")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("frontier", help="compute-optimal allocation laws from a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--method", choices=["regression", "closed-form"], default="regression")
    p.add_argument("--relation", choices=["early", "late"], default="early")
    p.add_argument("--input", help="runs whose FLOPs set the budgets (and late vision sizes)")
    p.add_argument("--arch", choices=[a.value for a in Arch], help="restrict budgets to one architecture")
    p.add_argument("--flops", help="comma-separated budgets instead of --input")
    p.add_argument("--d-min", type=float, default=1e10)
    p.add_argument("--d-max", type=float, default=6e11)
    p.add_argument("--d-points", type=int, default=200)
    p.add_argument("--vision-offset", type=float, default=frontier.DEFAULT_VISION_OFFSET)
    p.add_argument("--vision-p", type=float)
    p.add_argument("--vision-q", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("hull", help="fit L = k C^c on the minimum-loss hull")
    p.add_argument("--input", required=True)
    _add_filters(p)
    p.add_argument("--min-flops", type=float, default=hull.DEFAULT_MIN_FLOPS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hull)

    p = sub.add_parser("predict", help="predicted loss at (N, D)")
    p.add_argument("--fit", required=True)
    p.add_argument("--n", required=True, help="parameters, comma-separated for several")
    p.add_argument("--d", required=True, help="tokens, comma-separated for several")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bootstrap", help="bootstrap spread of the fitted coefficients")
    p.add_argument("--input", required=True)
    _add_filters(p)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("sparse-fit", help="fit the sparsity-aware law to MoE runs")
    p.add_argument("--input", required=True)
    _add_filters(p)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--fix", action="append", metavar="NAME=VALUE",
                   help=f"pin a parameter; names: {', '.join(sparse.PARAMS)}")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sparse_fit)

    p = sub.add_parser("spec-score", help="per-layer expert specialization as CSV")
    p.add_argument("--assignments", required=True)
    p.add_argument("--metric", choices=sorted(specialization.METRICS), default="entropy")
    p.set_defaults(func=cmd_spec_score)

    p = sub.add_parser("flops", help="training FLOPs of one run")
    p.add_argument("--arch", choices=["early", "late", "moe"], default="early")
    p.add_argument("--n", type=float, required=True, help="decoder (active) parameters")
    p.add_argument("--d", type=float, required=True, help="training tokens")
    p.add_argument("--n-vision", type=float, help="vision-encoder parameters (late)")
    p.add_argument("--vision-frac", type=float, help="share of tokens seen by the encoder (late)")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("eval", help="prediction errors of a fit on runs")
    p.add_argument("--fit", required=True)
    p.add_argument("--input", required=True)
    _add_filters(p)
    p.set_defaults(func=cmd_eval)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv, args):
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config {args.config}: {exc}") from None
    if not isinstance(config, dict):
        raise UsageError("--config must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions} | {a.dest for a in parser._actions}
    unknown = sorted(set(k.replace("-", "_") for k in config) - known)
    if unknown:
        raise UsageError(f"--config: unknown options {unknown}")
    values = {k.replace("-", "_"): v for k, v in config.items()}
    subparser.set_defaults(**values)
    parser.set_defaults(**{k: v for k, v in values.items() if k in {"threads", "digits"}})
    return parser.parse_args(argv)


def main(argv=None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(parser, argv, args)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args, _Output(args.digits, stdout, stderr))
    except UsageError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except (ScaleLabError, OSError, KeyError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
