"""Command line entry point: ``flowbalance <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 convergence failure under
``--strict``, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bistochastic as bs
from . import graphcluster as gc
from . import pipeline as pl
from .flowmatrix import (
    DEFAULT_NONZERO_THRESHOLD,
    DEFAULT_UNIT_TOLERANCE,
    FlowDataError,
    correlation,
    load_flows,
    load_matrix,
    matrix_stats,
    read_flow_csv,
    read_labels,
    save_matrix,
)
from .spectral import SpectrumError, leading_eigenvalues

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3
EXIT_INTERNAL = 4

log = logging.getLogger("flowbalance")


class InputError(Exception):
    pass


def _emit(obj, path, fmt="json", rows=None):
    """Write ``obj`` as JSON (or ``rows`` as CSV) to ``path`` or stdout."""
    if fmt == "csv" and rows is not None:
        fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            for row in rows:
                w.writerow(row)
        finally:
            if path:
                fh.close()
        return
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _matrix(path):
    try:
        return load_matrix(path)
    except (OSError, FlowDataError) as exc:
        raise InputError(f"cannot read matrix {path}: {exc}") from exc


def cmd_ingest(args):
    try:
        labels = read_labels(args.labels) if args.labels else None
        matrix = load_flows(read_flow_csv(args.flows), labels)
    except (OSError, FlowDataError) as exc:
        raise InputError(str(exc)) from exc
    save_matrix(matrix, args.out)
    log.info("wrote %d x %d matrix to %s", matrix.n, matrix.n, args.out)
    return EXIT_OK


def cmd_balance(args):
    matrix = _matrix(args.matrix)
    try:
        b, report = pl.balance(matrix, args.method, args.variant, args.tol, args.max_iter)
    except bs.BalancingError as exc:
        raise InputError(str(exc)) from exc
    save_matrix(b, args.out)
    if args.report:
        _emit(report.to_dict(), args.report)
    log.info("%s: converged=%s iterations=%d deviation=%.3e", report.method.value,
             report.converged, report.iterations, report.max_sum_deviation)
    if args.strict and not report.converged:
        return EXIT_CONVERGENCE
    return EXIT_OK


def _census_rows(census: dict):
    yield ["component", "size", "interstate", "members"]
    for c in census["components"]:
        yield [c["id"], c["size"], int(c["interstate"]), " ".join(c["members"])]


def cmd_cluster(args):
    b = _matrix(args.matrix)
    if args.mode == "hierarchy":
        d = gc.strong_component_hierarchy(b)
        if args.out_dendrogram:
            path = Path(args.out_dendrogram)
            if path.suffix.lower() in (".nwk", ".newick", ".tree"):
                path.write_text(gc.dendrogram_to_newick(d) + "\n", encoding="utf-8")
            else:
                path.write_text(gc.dendrogram_to_json(d, indent=1) + "\n", encoding="utf-8")
        if args.cut is not None:
            p = gc.cut_dendrogram(d, args.cut)
            g = gc.threshold_digraph(b, args.cut)
        else:
            p = None
    else:
        g = gc.unit_entry_digraph(b, args.unit_tol)
        p = gc.strong_components(g)
    if p is not None:
        census = gc.component_census(p, g, b, args.unit_tol).to_dict()
        if args.out_census or args.mode == "unit-digraph":
            _emit(census, args.out_census, args.format, _census_rows(census))
    return EXIT_OK


def cmd_census(args):
    b = _matrix(args.matrix)
    _, strong, weak = pl.unit_digraph_summary(b, args.unit_tol)
    if args.format == "csv":
        rows = [["kind", "component", "size", "interstate", "members"]]
        for kind, census in (("strong", strong), ("weak", weak)):
            rows += [[kind] + r for r in list(_census_rows(census))[1:]]
        _emit(None, args.out, "csv", rows)
    else:
        _emit({"strong": strong, "weak": weak}, args.out)
    return EXIT_OK


def cmd_spectrum(args):
    b = _matrix(args.matrix)
    try:
        report = leading_eigenvalues(b, args.k)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    except SpectrumError as exc:
        if exc.partial is not None:
            out = exc.partial.to_dict()
            out["failed"] = True
            _emit(out, args.out)
        raise
    rows = [["re", "im", "residual"]] + [[e["re"], e["im"], e["residual"]] for e in report.to_dict()["eigenvalues"]]
    _emit(report.to_dict(), args.out, args.format, rows)
    return EXIT_OK


def cmd_report(args):
    b = _matrix(args.matrix)
    out = {
        "stats": matrix_stats(b, args.nonzero_threshold, args.unit_tol).to_dict(),
        "hollow": b.hollow,
        "max_sum_deviation": bs.bistochastic_deviation(b),
    }
    for other in args.compare or []:
        try:
            out.setdefault("correlations", {})[other] = correlation(b, _matrix(other))
        except FlowDataError as exc:
            raise InputError(str(exc)) from exc
    _emit(out, args.out)
    return EXIT_OK


def _config_from_args(args) -> pl.PipelineConfig:
    methods = pl.METHODS if args.method == "both" else (args.method,)
    formats = ("json", "csv") if args.format == "csv" else ("json",)
    return pl.PipelineConfig(
        flows=args.flows, labels=args.labels, out_dir=args.out_dir, methods=methods,
        variant=args.variant, sk_tol=args.sk_tol, sqnorm_tol=args.sqnorm_tol, max_iter=args.max_iter,
        unit_tolerance=args.unit_tol, cut_thresholds=args.cut or (), spectrum_k=args.k,
        formats=formats, strict=args.strict)


def cmd_pipeline(args):
    config = _config_from_args(args)
    try:
        summary = pl.run_pipeline(config)
    except pl.PipelineError as exc:
        log.error("%s", exc)
        return {"input": EXIT_INVALID, "convergence": EXIT_CONVERGENCE}.get(exc.kind, EXIT_INTERNAL)
    log.info("summary written to %s", Path(config.out_dir) / "summary.json")
    return EXIT_OK if summary else EXIT_INTERNAL


def cmd_validate(args):
    config = pl.PipelineConfig(flows=args.flows, labels=args.labels, out_dir=".")
    report = pl.validate_inputs(config)
    _emit(report.to_dict(), None)
    return EXIT_OK if report.ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowbalance", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    p.add_argument("--seed", type=int, default=None, help="accepted for test harnesses; the pipeline is deterministic")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="flow CSV -> matrix file")
    s.add_argument("--flows", required=True)
    s.add_argument("--labels")
    s.add_argument("--out", required=True, help="*.csv for dense CSV, otherwise BSTM binary")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("balance", help="bi-stochastize a matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=("sk", "sqnorm"), default="sk")
    s.add_argument("--variant", choices=("dykstra", "plain"), default="dykstra")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=bs.MAX_ITER)
    s.add_argument("--report", help="write the convergence report as JSON")
    s.add_argument("--strict", action="store_true", help="exit 3 if not converged")
    s.set_defaults(func=cmd_balance)

    s = sub.add_parser("cluster", help="strong-component hierarchy or unit-entry digraph")
    s.add_argument("--matrix", required=True)
    s.add_argument("--mode", choices=("hierarchy", "unit-digraph"), default="hierarchy")
    s.add_argument("--unit-tol", type=float, default=DEFAULT_UNIT_TOLERANCE)
    s.add_argument("--cut", type=float, default=None)
    s.add_argument("--out-dendrogram")
    s.add_argument("--out-census")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("census", help="strong and weak components of the unit-entry digraph")
    s.add_argument("--matrix", required=True)
    s.add_argument("--unit-tol", type=float, default=DEFAULT_UNIT_TOLERANCE)
    s.add_argument("--out")
    s.set_defaults(func=cmd_census)

    s = sub.add_parser("spectrum", help="leading eigenvalues")
    s.add_argument("--matrix", required=True)
    s.add_argument("-k", type=int, default=9)
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("report", help="matrix statistics and correlations")
    s.add_argument("--matrix", required=True)
    s.add_argument("--compare", action="append", help="matrix to correlate with (repeatable)")
    s.add_argument("--nonzero-threshold", type=float, default=DEFAULT_NONZERO_THRESHOLD)
    s.add_argument("--unit-tol", type=float, default=DEFAULT_UNIT_TOLERANCE)
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("pipeline", help="run every stage")
    s.add_argument("--flows", required=True)
    s.add_argument("--labels")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--method", choices=("sk", "sqnorm", "both"), default="sk")
    s.add_argument("--variant", choices=("dykstra", "plain"), default="dykstra")
    s.add_argument("--sk-tol", type=float, default=bs.SK_TOL)
    s.add_argument("--sqnorm-tol", type=float, default=bs.SQNORM_TOL)
    s.add_argument("--max-iter", type=int, default=bs.MAX_ITER)
    s.add_argument("--unit-tol", type=float, default=DEFAULT_UNIT_TOLERANCE)
    s.add_argument("--cut", type=float, action="append")
    s.add_argument("-k", type=int, default=9)
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("validate", help="check input files without running")
    s.add_argument("--flows", required=True)
    s.add_argument("--labels")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except InputError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except Exception as exc:
        log.error("internal error: %s: %s", type(exc).__name__, exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
