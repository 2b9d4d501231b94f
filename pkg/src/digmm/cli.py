"""Command-line entry point: ``digmm {synth,fit,detect,eval,grid}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or
convergence error. Data artifacts go to stdout (or ``--out``); diagnostics go
to stderr.
"""

import argparse
import contextlib
import csv
import json
import logging
import sys

from .dataio import (
    ScenarioSpec,
    generate_scenario,
    load_model,
    paper_like_spec,
    read_csv,
    write_csv,
    write_model,
)
from .detector import (
    DigmmModel,
    ThresholdGmmModel,
    fit_digmm,
    fit_threshold_gmm,
    score,
    Verdict,
)
from .errors import (
    DataError,
    DimensionMismatch,
    MissingLabels,
    NumericError,
    SchemaError,
)
from .evaluate import compare, decision_grid, evaluate, write_grid_csv
from .gmm import EmConfig

logger = logging.getLogger("digmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _read_dataset(path):
    try:
        with open(path, "rb") as fh:
            return read_csv(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def cmd_synth(args):
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot parse scenario spec {args.spec}: {exc}") from exc
        try:
            spec = ScenarioSpec.from_dict(doc)
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc
    else:
        spec = paper_like_spec()
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    data = generate_scenario(spec)
    with _output(args.out) as fh:
        write_csv(data, fh)
    logger.info("wrote %d rows (%d anomalies)", data.n, int((data.labels == 0).sum()))


def cmd_fit(args):
    if args.m < 1:
        raise UsageError("--m must be a positive integer")
    try:
        cfg = EmConfig(
            max_iters=args.max_iters,
            rel_tol=args.rel_tol,
            n_init=args.n_init,
            reg_covar=args.reg_covar,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not args.solver_tol > 0:
        raise UsageError("--solver-tol must be positive")
    if args.detector == "digmm":
        if args.nu is None:
            raise UsageError("--nu is required for the digmm detector")
        if not (0.0 < args.nu <= 1.0):
            raise UsageError("--nu must lie in (0, 1]")
    else:
        if (args.log_threshold is None) == (args.target_fpr is None):
            raise UsageError("threshold-gmm needs exactly one of --log-threshold, --target-fpr")
        if args.target_fpr is not None and not (0.0 <= args.target_fpr <= 1.0):
            raise UsageError("--target-fpr must lie in [0, 1]")

    data = _read_dataset(args.data).normal_only()
    if args.detector == "digmm":
        model = fit_digmm(data, args.m, args.nu, cfg, solver_tol=args.solver_tol)
        meta = model.fit_metadata
        logger.info(
            "log-likelihood %.6f, solver %s after %d passes (KKT violation %.3g), rho %.6g",
            meta["log_likelihood"], meta["solver_status"], meta["solver_passes"],
            meta["kkt_violation"], model.rho,
        )
    else:
        model = fit_threshold_gmm(
            data, args.m, cfg, log_threshold=args.log_threshold, target_fpr=args.target_fpr
        )
        logger.info(
            "log-likelihood %.6f, log threshold %.6f",
            model.fit_metadata["log_likelihood"], model.log_threshold,
        )
    with _output(args.out) as fh:
        write_model(model, fh)


def cmd_detect(args):
    model = _load_model(args.model)
    data = _read_dataset(args.data)
    if data.d != model.gmm.d:
        raise DimensionMismatch(f"model has d={model.gmm.d}, data has d={data.d}")
    scores = score(model, data.points) if data.n else []
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "score", "label"])
        for i, s in enumerate(scores):
            writer.writerow([i, repr(float(s)), Verdict.from_score(s).label])


def cmd_eval(args):
    data = _read_dataset(args.data)
    if data.labels is None:
        raise MissingLabels(f"{args.data} has no label column")
    models = [(path, _load_model(path)) for path in args.model]
    reports = {path: evaluate(model, data) for path, model in models}
    doc = {"reports": {path: r.to_dict() for path, r in reports.items()}}
    digmm = [p for p, mdl in models if isinstance(mdl, DigmmModel)]
    baseline = [p for p, mdl in models if isinstance(mdl, ThresholdGmmModel)]
    if digmm and baseline:
        doc["comparison"] = {
            "digmm": digmm[0],
            "baseline": baseline[0],
            **compare(reports[digmm[0]], reports[baseline[0]]),
        }
    with _output(args.out) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_grid(args):
    if args.resolution < 2:
        raise UsageError("--resolution must be at least 2")
    model = _load_model(args.model)
    grid = decision_grid(
        model, (args.xmin, args.xmax), (args.ymin, args.ymax), args.resolution
    )
    with _output(args.out) as fh:
        write_grid_csv(grid, fh)


def build_parser():
    parser = _Parser(prog="digmm", description="GMM-based anomaly detection with a learned boundary.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic two-peak dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="JSON scenario spec")
    src.add_argument("--preset", choices=["paper-like"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a detector on the normal rows of a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--detector", choices=["digmm", "threshold-gmm"], required=True)
    p.add_argument("--m", type=int, required=True, help="number of mixture components")
    p.add_argument("--nu", type=float)
    p.add_argument("--log-threshold", type=float)
    p.add_argument("--target-fpr", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-init", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--reg-covar", type=float, default=1e-6)
    p.add_argument("--solver-tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="score and label every row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="AUC and balanced-accuracy report on labelled data")
    p.add_argument("--model", required=True, action="append")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="export model scores on a 2-D lattice")
    p.add_argument("--model", required=True)
    p.add_argument("--xmin", type=float, required=True)
    p.add_argument("--xmax", type=float, required=True)
    p.add_argument("--ymin", type=float, required=True)
    p.add_argument("--ymax", type=float, required=True)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors; report the code instead.
        return exc.code
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except UsageError as exc:
        print(f"digmm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"digmm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"digmm {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
