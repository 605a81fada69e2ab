"""End-to-end run: ingest, balance, cluster, census, spectrum, summary."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import bistochastic as bs
from . import graphcluster as gc
from .flowmatrix import (
    BINARY_MAGIC,
    DEFAULT_NONZERO_THRESHOLD,
    DEFAULT_UNIT_TOLERANCE,
    FLOW_CSV_HEADER,
    FlowDataError,
    FlowMatrix,
    UndefinedCorrelationError,
    correlation,
    load_flows,
    load_matrix,
    matrix_stats,
    read_flow_csv,
    read_labels,
    save_matrix,
    write_dense_csv,
)
from .spectral import leading_eigenvalues

log = logging.getLogger(__name__)

METHODS = ("sk", "sqnorm")
FAILED_MARKER = "FAILED"


class PipelineError(RuntimeError):
    """A stage failed. ``kind`` is ``"input"``, ``"convergence"`` or ``"internal"``."""

    def __init__(self, stage: str, message: str, kind: str = "internal"):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.kind = kind


@dataclass
class PipelineConfig:
    flows: Path
    out_dir: Path
    labels: Path | None = None
    methods: tuple[str, ...] = ("sk",)
    variant: str = "dykstra"
    sk_tol: float = bs.SK_TOL
    sqnorm_tol: float = bs.SQNORM_TOL
    max_iter: int = bs.MAX_ITER
    unit_tolerance: float = DEFAULT_UNIT_TOLERANCE
    nonzero_threshold: float = DEFAULT_NONZERO_THRESHOLD
    cut_thresholds: tuple[float, ...] = ()
    spectrum_k: int = 9
    top_cosmopolitan: int = 10
    formats: tuple[str, ...] = ("json",)
    strict: bool = False

    def __post_init__(self):
        self.flows = Path(self.flows)
        self.out_dir = Path(self.out_dir)
        if self.labels is not None:
            self.labels = Path(self.labels)
        self.methods = tuple(self.methods)
        self.cut_thresholds = tuple(float(t) for t in self.cut_thresholds)
        self.formats = tuple(self.formats)


@dataclass
class ValidationReport:
    ok: bool
    errors: list[str] = field(default_factory=list)
    n: int | None = None

    def to_dict(self) -> dict:
        return {"ok": self.ok, "errors": list(self.errors), "n": self.n}


def _is_flow_csv(path: Path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return False
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return tuple(h.strip() for h in header) == FLOW_CSV_HEADER


def validate_inputs(config: PipelineConfig) -> ValidationReport:
    """Check inputs and settings without touching the output directory."""
    errors = []
    for name in ("sk_tol", "sqnorm_tol", "unit_tolerance", "nonzero_threshold"):
        value = getattr(config, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            errors.append(f"{name} must be positive, got {value!r}")
    if config.max_iter < 1:
        errors.append(f"max_iter must be positive, got {config.max_iter}")
    if config.spectrum_k < 1:
        errors.append(f"spectrum_k must be positive, got {config.spectrum_k}")
    for m in config.methods:
        if m not in METHODS:
            errors.append(f"unknown method {m!r}")
    if config.variant not in {v.value for v in bs.Variant}:
        errors.append(f"unknown variant {config.variant!r}")
    for f in config.formats:
        if f not in ("json", "csv"):
            errors.append(f"unknown format {f!r}")

    labels = None
    if config.labels is not None:
        if not config.labels.is_file():
            errors.append(f"label file not found: {config.labels}")
        else:
            try:
                labels = read_labels(config.labels)
            except FlowDataError as exc:
                errors.append(str(exc))
    n = None
    if not config.flows.is_file():
        errors.append(f"flow file not found: {config.flows}")
    elif not errors:
        try:
            matrix = _load_input(config.flows, labels)
            n = matrix.n
        except (FlowDataError, UnicodeDecodeError) as exc:
            errors.append(str(exc))
    return ValidationReport(not errors, errors, n)


def _load_input(path: Path, labels=None) -> FlowMatrix:
    if _is_flow_csv(path):
        return load_flows(read_flow_csv(path), labels)
    matrix = load_matrix(path)
    if labels is not None and list(labels) != matrix.codes:
        raise FlowDataError(f"{path}: matrix labels differ from the label file")
    return matrix


def balance(matrix: FlowMatrix, method: str, variant: str = "dykstra", tol: float | None = None,
            max_iter: int = bs.MAX_ITER):
    if method == "sk":
        return bs.sinkhorn_knopp(matrix, tol=bs.SK_TOL if tol is None else tol, max_iter=max_iter)
    if method == "sqnorm":
        return bs.squared_norm_bistochastize(matrix, tol=bs.SQNORM_TOL if tol is None else tol,
                                             max_iter=max_iter, variant=variant)
    raise ValueError(f"unknown method {method!r}")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def unit_digraph_summary(b: FlowMatrix, unit_tolerance: float) -> tuple[dict, dict, dict]:
    """(digraph dict, strong census dict, weak census dict) for the unit entries."""
    g = gc.unit_entry_digraph(b, unit_tolerance)
    strong = gc.component_census(gc.strong_components(g), g, b, unit_tolerance)
    weak = gc.component_census(gc.weak_components(g), g, b, unit_tolerance)
    digraph = {
        "n": g.n,
        "n_arcs": g.n_arcs,
        "arcs": [[b.labels[s].code, b.labels[d].code] for s, d, _ in g.arcs],
    }
    return digraph, strong.to_dict(), weak.to_dict()


def _census_headline(census: dict) -> dict:
    sizes = [c["size"] for c in census["components"]]
    largest = max(census["components"], key=lambda c: (c["size"], -c["id"]))
    return {
        "count": len(sizes),
        "size_histogram": census["size_histogram"],
        "interstate_by_size": census["interstate_by_size"],
        "isolated_classification": census["isolated_classification"],
        "largest_size": largest["size"],
        "largest_members": largest["members"],
    }


def analyze_balanced(b: FlowMatrix, config: PipelineConfig, out: Path, method: str) -> dict:
    """Cluster, census and spectrum stages for one balanced matrix."""
    stage = f"cluster:{method}"
    try:
        dendro = gc.strong_component_hierarchy(b)
        (out / "dendrogram.json").write_text(gc.dendrogram_to_json(dendro, indent=1) + "\n", encoding="utf-8")
        (out / "dendrogram.nwk").write_text(gc.dendrogram_to_newick(dendro) + "\n", encoding="utf-8")
        ranking = gc.cosmopolitan_ranking(dendro)
        cuts = {}
        for t in config.cut_thresholds:
            p = gc.cut_dendrogram(dendro, t)
            cuts[repr(t)] = [[b.labels[i].code for i in sorted(m)] for m in p.components.values()]
        if cuts:
            _dump(cuts, out / "cuts.json")
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc

    stage = f"census:{method}"
    try:
        digraph, strong, weak = unit_digraph_summary(b, config.unit_tolerance)
        _dump(digraph, out / "unit_digraph.json")
        _dump(strong, out / "census_strong.json")
        _dump(weak, out / "census_weak.json")
        if "csv" in config.formats:
            _write_census_csv(strong, out / "census_strong.csv")
            _write_census_csv(weak, out / "census_weak.csv")
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc

    stage = f"spectrum:{method}"
    try:
        spectrum = leading_eigenvalues(b, min(config.spectrum_k, b.n))
        _dump(spectrum.to_dict(), out / "spectrum.json")
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc

    stats = matrix_stats(b, config.nonzero_threshold, config.unit_tolerance)
    return {
        "stats": stats.to_dict(),
        "unit_digraph_arcs": digraph["n_arcs"],
        "strong_components": _census_headline(strong),
        "weak_components": _census_headline(weak),
        "dendrogram_levels": len(dendro.levels),
        "cosmopolitan_top": [
            [r.code, "never" if lvl is None else lvl] for r, lvl in ranking[:config.top_cosmopolitan]
        ],
        "spectrum": spectrum.to_dict()["eigenvalues"],
    }


def _write_census_csv(census: dict, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "size", "interstate", "members"])
        for c in census["components"]:
            w.writerow([c["id"], c["size"], int(c["interstate"]), " ".join(c["members"])])


def _safe_correlation(a: FlowMatrix, b: FlowMatrix):
    try:
        return correlation(a, b)
    except UndefinedCorrelationError:
        return None


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and write artifacts under ``config.out_dir``.

    On failure a ``FAILED`` file naming the stage is written next to
    whatever artifacts were already produced, and PipelineError is raised.
    """
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    try:
        return _run(config, out)
    except PipelineError as exc:
        marker.write_text(f"stage: {exc.stage}\nkind: {exc.kind}\n{exc}\n", encoding="utf-8")
        raise
    except Exception as exc:
        marker.write_text(f"stage: unknown\nkind: internal\n{exc}\n", encoding="utf-8")
        raise PipelineError("unknown", str(exc)) from exc


def _run(config: PipelineConfig, out: Path) -> dict:
    report = validate_inputs(config)
    if not report.ok:
        raise PipelineError("validate", "; ".join(report.errors), kind="input")

    try:
        labels = read_labels(config.labels) if config.labels else None
        raw = _load_input(config.flows, labels)
        save_matrix(raw, out / "raw.bstm")
    except FlowDataError as exc:
        raise PipelineError("ingest", str(exc), kind="input") from exc

    summary = {
        "n": raw.n,
        "raw": matrix_stats(raw, config.nonzero_threshold, config.unit_tolerance).to_dict(),
        "methods": {},
        "correlations": {},
    }
    summary["raw"].pop("top_diag")
    balanced = {}
    for method in config.methods:
        stage = f"balance:{method}"
        sub = out / method
        sub.mkdir(exist_ok=True)
        tol = config.sk_tol if method == "sk" else config.sqnorm_tol
        try:
            b, conv = balance(raw, method, config.variant, tol, config.max_iter)
        except bs.BalancingError as exc:
            raise PipelineError(stage, str(exc), kind="input") from exc
        save_matrix(b, sub / "balanced.bstm")
        if "csv" in config.formats:
            write_dense_csv(b, sub / "balanced.csv")
        _dump(conv.to_dict(), sub / "convergence.json")
        log.info("%s: %d iterations, deviation %.3e", method, conv.iterations, conv.max_sum_deviation)
        if not conv.converged and config.strict:
            raise PipelineError(stage, f"no convergence after {conv.iterations} iterations", kind="convergence")
        balanced[method] = b
        entry = {"convergence": conv.to_dict()}
        entry.update(analyze_balanced(b, config, sub, method))
        summary["methods"][method] = entry
        summary["correlations"][f"raw~{method}"] = _safe_correlation(raw, b)
    if len(balanced) == 2:
        summary["correlations"]["sk~sqnorm"] = _safe_correlation(balanced["sk"], balanced["sqnorm"])

    _dump(summary, out / "summary.json")
    return summary
