"""Command-line entry point: ``ctff run``, ``ctff sweep`` and ``ctff gen``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import CtffError
from .experiment import load_experiment, read_csv, run_experiment, write_csv
from .factored import FactoredDistribution, PropagationConfig
from .filtering import ENGINES, filter_run, load_timeline
from .generators import generate, quarter_split_states
from .model import load_model, model_to_dict

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ZERO_EVIDENCE = 3
EXIT_SPARSE = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CtffError):
        return exc.exit_code
    if isinstance(exc, (ValueError, KeyError, FileNotFoundError)):
        return EXIT_VALIDATION
    return 1


def _l_value(text: str):
    return text if text == "auto" else int(text)


def _initial(args, model) -> FactoredDistribution:
    if args.initial:
        return FactoredDistribution.from_dict(json.loads(Path(args.initial).read_text()))
    if args.states:
        return FactoredDistribution.deterministic(model, [int(s) for s in args.states.split(",")])
    if args.quarter_split:
        return FactoredDistribution.deterministic(model, quarter_split_states(model.n))
    return FactoredDistribution.uniform(model)


def cmd_run(args) -> int:
    model = load_model(args.model)
    timeline = load_timeline(args.timeline, model)
    cfg = PropagationConfig(theta=args.theta, l=args.l, tail_tol=args.tail_tol, rkf_tol=args.rkf_tol, kappa=args.kappa)
    result = filter_run(model, args.engine, _initial(args, model), timeline, cfg)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["query_t", "query_var", "value", "probability"])
        for a in result.answers:
            for value, p in enumerate(a.marginal):
                writer.writerow([a.time, model.names[a.var], value, repr(float(p))])
    finally:
        if args.out:
            out.close()
    print(f"log_likelihood={result.log_likelihood!r}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    experiment, base = load_experiment(args.experiment)
    rows = run_experiment(experiment, base)
    out = Path(args.out) if args.out else base / experiment.get("out", Path(args.experiment).with_suffix(".csv").name)
    write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    if not args.no_figure:
        from .plotting import plot_results

        if args.figure:
            fig = Path(args.figure)
        else:
            fig = base / experiment["figure"] if "figure" in experiment else out.with_suffix(".png")
        plot_results(read_csv(out), fig, experiment.get("name"))
        print(f"wrote figure {fig}", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    params = {"n": args.n, "rows": args.rows, "cols": args.cols, "tau": args.tau, "beta": args.beta,
              "dynamics": args.dynamics}
    model = generate(args.kind, **{k: v for k, v in params.items() if v is not None})
    text = json.dumps(model_to_dict(model), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctff", description="Filtering in continuous-time Bayesian networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="filter one timeline with one engine")
    run.add_argument("--model", required=True)
    run.add_argument("--engine", required=True, choices=sorted(ENGINES))
    run.add_argument("--timeline", required=True)
    run.add_argument("--theta", type=float, default=2.0)
    run.add_argument("--l", type=_l_value, default="auto")
    run.add_argument("--tail-tol", type=float, default=1e-10)
    run.add_argument("--rkf-tol", type=float, default=1e-6)
    run.add_argument("--kappa", type=float, default=0.0)
    init = run.add_mutually_exclusive_group()
    init.add_argument("--initial", help="JSON file with 'marginals'")
    init.add_argument("--states", help="comma-separated deterministic start")
    init.add_argument("--quarter-split", action="store_true")
    run.add_argument("--out", help="CSV path (default stdout)")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a time-versus-accuracy experiment")
    sweep.add_argument("--experiment", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--figure")
    sweep.add_argument("--no-figure", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("gen", help="write a generated model as JSON")
    gen.add_argument("kind", choices=["running-example", "ring", "toroid"])
    gen.add_argument("--n", type=int)
    gen.add_argument("--rows", type=int)
    gen.add_argument("--cols", type=int)
    gen.add_argument("--tau", type=float)
    gen.add_argument("--beta", type=float)
    gen.add_argument("--dynamics", choices=["metropolis", "glauber"])
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CtffError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"ctff: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
