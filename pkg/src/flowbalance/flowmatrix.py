"""Square non-negative flow matrices with region labels.

Loading from origin/destination records, dense CSV and binary
serialization, summary statistics and comparison between matrices.
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_NONZERO_THRESHOLD = 1e-10
DEFAULT_UNIT_TOLERANCE = 1e-9

BINARY_MAGIC = b"BSTM"


class FlowDataError(ValueError):
    """Raised for malformed or inconsistent flow data."""


class UndefinedCorrelationError(FlowDataError):
    """Raised when a correlation is requested against a constant matrix."""


@dataclass(frozen=True, order=True)
class RegionId:
    """Region code whose first two characters identify the state."""

    code: str

    def __post_init__(self):
        if not isinstance(self.code, str) or not self.code:
            raise FlowDataError(f"region code must be a non-empty string, got {self.code!r}")

    @property
    def state_prefix(self) -> str:
        return self.code[:2]

    def __str__(self):
        return self.code


def _as_region(code) -> RegionId:
    return code if isinstance(code, RegionId) else RegionId(str(code))


class FlowMatrix:
    """Immutable n x n non-negative matrix with one RegionId per index.

    ``entries`` is stored as a read-only float64 array, so a FlowMatrix can be
    shared between threads without copying.
    """

    __slots__ = ("_entries", "_labels", "_index")

    def __init__(self, entries, labels: Sequence | None = None):
        a = np.array(entries, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise FlowDataError(f"flow matrix must be square and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FlowDataError("flow matrix contains non-finite entries")
        if np.any(a < 0):
            i, j = np.argwhere(a < 0)[0]
            raise FlowDataError(f"flow matrix has negative entry {a[i, j]!r} at ({i}, {j})")
        n = a.shape[0]
        if labels is None:
            labels = [str(i) for i in range(n)]
        regions = tuple(_as_region(c) for c in labels)
        if len(regions) != n:
            raise FlowDataError(f"expected {n} labels, got {len(regions)}")
        index = {}
        for i, r in enumerate(regions):
            if r.code in index:
                raise FlowDataError(f"duplicate label {r.code!r}")
            index[r.code] = i
        a.setflags(write=False)
        self._entries = a
        self._labels = regions
        self._index = index

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def labels(self) -> tuple[RegionId, ...]:
        return self._labels

    @property
    def codes(self) -> list[str]:
        return [r.code for r in self._labels]

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    @property
    def hollow(self) -> bool:
        return bool(np.all(np.diag(self._entries) == 0.0))

    def index_of(self, code) -> int:
        return self._index[str(code)]

    def with_entries(self, entries) -> "FlowMatrix":
        """Same labels, new entries."""
        return FlowMatrix(entries, self._labels)

    def __eq__(self, other):
        if not isinstance(other, FlowMatrix):
            return NotImplemented
        return self._labels == other._labels and np.array_equal(self._entries, other._entries)

    def __repr__(self):
        return f"FlowMatrix(n={self.n}, hollow={self.hollow})"


def load_flows(flow_records: Iterable, labels: Sequence | None = None) -> FlowMatrix:
    """Build a FlowMatrix from ``(origin, dest, flow)`` records.

    Duplicate (origin, dest) pairs are summed. If ``labels`` is omitted the
    index order is the sorted set of codes seen in the records.
    """
    totals: dict[tuple[str, str], float] = {}
    seen: set[str] = set()
    for k, rec in enumerate(flow_records):
        try:
            origin, dest, flow = rec
        except (TypeError, ValueError):
            raise FlowDataError(f"record {k}: expected (origin, dest, flow), got {rec!r}") from None
        origin, dest = str(origin), str(dest)
        try:
            value = float(flow)
        except (TypeError, ValueError):
            raise FlowDataError(f"record {k} {rec!r}: flow is not a number") from None
        if not math.isfinite(value) or value < 0:
            raise FlowDataError(f"record {k} {rec!r}: flow must be finite and non-negative")
        key = (origin, dest)
        totals[key] = totals.get(key, 0.0) + value
        seen.add(origin)
        seen.add(dest)
    if not totals:
        raise FlowDataError("no flow records")

    if labels is None:
        codes = sorted(seen)
    else:
        codes = [_as_region(c).code for c in labels]
        known = set(codes)
        unknown = sorted(seen - known)
        if unknown:
            raise FlowDataError(f"codes not present in label list: {', '.join(unknown[:10])}")
    index = {c: i for i, c in enumerate(codes)}
    entries = np.zeros((len(codes), len(codes)))
    for (o, d), v in totals.items():
        entries[index[o], index[d]] += v
    return FlowMatrix(entries, codes)


def iter_flow_records(matrix: FlowMatrix):
    """Yield the non-zero cells of ``matrix`` as ``(origin, dest, flow)``."""
    codes = matrix.codes
    for i, j in zip(*np.nonzero(matrix.entries)):
        yield codes[i], codes[j], float(matrix.entries[i, j])


# -- flow CSV / label files ---------------------------------------------------

FLOW_CSV_HEADER = ("origin", "dest", "flow")


def read_flow_csv(path) -> list[tuple[str, str, float]]:
    """Read ``origin,dest,flow`` records; errors name the offending line."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FLOW_CSV_HEADER:
            raise FlowDataError(f"{path}: expected header 'origin,dest,flow', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise FlowDataError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            origin, dest, raw = (x.strip() for x in row)
            if not origin or not dest:
                raise FlowDataError(f"{path}: line {line}: empty region code")
            try:
                flow = float(raw)
            except ValueError:
                raise FlowDataError(f"{path}: line {line}: flow {raw!r} is not a number") from None
            if not math.isfinite(flow) or flow < 0:
                raise FlowDataError(f"{path}: line {line}: flow {raw!r} must be finite and non-negative")
            records.append((origin, dest, flow))
    return records


def write_flow_csv(matrix: FlowMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC)
        writer.writerow(FLOW_CSV_HEADER)
        for origin, dest, flow in iter_flow_records(matrix):
            writer.writerow([origin, dest, flow])


def read_labels(path) -> list[str]:
    """One code per line; blank lines are skipped; duplicates are rejected."""
    codes = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            code = line.strip().strip('"')
            if not code:
                continue
            if code in seen:
                raise FlowDataError(f"{path}: line {line_no}: duplicate label {code!r}")
            seen.add(code)
            codes.append(code)
    return codes


def write_labels(codes: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in codes:
            fh.write(f"{c}\n")


# -- dense matrix serialization -----------------------------------------------

def write_dense_csv(matrix: FlowMatrix, path) -> None:
    """Header row of n labels followed by n rows of ``repr`` floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(matrix.codes)
    for row in matrix.entries:
        writer.writerow([repr(float(x)) for x in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_dense_csv(path) -> FlowMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FlowDataError(f"{path}: empty file")
    codes = rows[0]
    body = [r for r in rows[1:] if r]
    if len(body) != len(codes) or any(len(r) != len(codes) for r in body):
        raise FlowDataError(f"{path}: expected {len(codes)} rows of {len(codes)} values")
    try:
        entries = np.array([[float(x) for x in r] for r in body])
    except ValueError as exc:
        raise FlowDataError(f"{path}: {exc}") from None
    return FlowMatrix(entries, codes)


def to_bytes(matrix: FlowMatrix) -> bytes:
    """``BSTM`` + little-endian u64 n + row-major f64 entries + label block.

    The label block holds, per label, a u32 byte length and the UTF-8 code.
    """
    n = matrix.n
    parts = [BINARY_MAGIC, struct.pack("<Q", n), np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes()]
    for code in matrix.codes:
        raw = code.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def from_bytes(data: bytes) -> FlowMatrix:
    if data[:4] != BINARY_MAGIC:
        raise FlowDataError("not a BSTM matrix file (bad magic)")
    if len(data) < 12:
        raise FlowDataError("truncated BSTM header")
    (n,) = struct.unpack_from("<Q", data, 4)
    offset = 12
    nbytes = 8 * n * n
    if len(data) < offset + nbytes:
        raise FlowDataError("truncated BSTM entry block")
    entries = np.frombuffer(data, dtype="<f8", count=n * n, offset=offset).reshape(n, n)
    offset += nbytes
    codes = []
    for _ in range(n):
        if len(data) < offset + 4:
            raise FlowDataError("truncated BSTM label block")
        (size,) = struct.unpack_from("<I", data, offset)
        offset += 4
        codes.append(data[offset:offset + size].decode("utf-8"))
        offset += size
    if offset != len(data):
        raise FlowDataError("trailing bytes after BSTM label block")
    return FlowMatrix(entries, codes)


def save_matrix(matrix: FlowMatrix, path) -> None:
    """Write ``.csv`` as dense CSV, anything else as BSTM binary."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_dense_csv(matrix, path)
    else:
        path.write_bytes(to_bytes(matrix))


def load_matrix(path) -> FlowMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return from_bytes(path.read_bytes())
    return read_dense_csv(path)


# -- statistics ---------------------------------------------------------------

def _check_compatible(a: FlowMatrix, b: FlowMatrix) -> None:
    if a.n != b.n:
        raise FlowDataError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.labels != b.labels:
        raise FlowDataError("label order differs between matrices")


def correlation(a: FlowMatrix, b: FlowMatrix) -> float:
    """Pearson correlation over all n^2 cells, diagonal included."""
    _check_compatible(a, b)
    x = a.entries.ravel()
    y = b.entries.ravel()
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("undefined correlation: a matrix has zero variance")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class MatrixStats:
    n: int
    nonzero_count: int
    sparsity_fraction: float
    diag_sum: float
    diag_nonzero_count: int
    top_diag: list = field(default_factory=list)
    unit_entry_count: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "nonzero_count": self.nonzero_count,
            "sparsity_fraction": self.sparsity_fraction,
            "diag_sum": self.diag_sum,
            "diag_nonzero_count": self.diag_nonzero_count,
            "top_diag": [[r.code, v] for r, v in self.top_diag],
            "unit_entry_count": self.unit_entry_count,
        }


def matrix_stats(matrix: FlowMatrix, nonzero_threshold: float = DEFAULT_NONZERO_THRESHOLD,
                 unit_tolerance: float = DEFAULT_UNIT_TOLERANCE) -> MatrixStats:
    """Sparsity, diagonal and unit-entry summary of a matrix.

    ``nonzero_count`` counts cells that are exactly non-zero; the diagonal
    census uses ``nonzero_threshold``; unit entries are cells with
    ``|value - 1| <= unit_tolerance``.
    """
    if nonzero_threshold < 0 or unit_tolerance < 0:
        raise FlowDataError("thresholds must be non-negative")
    a = matrix.entries
    n = matrix.n
    nonzero = int(np.count_nonzero(a))
    diag = np.diag(a)
    big = np.flatnonzero(diag > nonzero_threshold)
    # stable sort keeps label order among equal values
    order = big[np.argsort(-diag[big], kind="stable")]
    top = [(matrix.labels[i], float(diag[i])) for i in order]
    return MatrixStats(
        n=n,
        nonzero_count=nonzero,
        sparsity_fraction=1.0 - nonzero / (n * n),
        diag_sum=float(math.fsum(diag)),
        diag_nonzero_count=len(big),
        top_diag=top,
        unit_entry_count=int(np.count_nonzero(np.abs(a - 1.0) <= unit_tolerance)),
    )


def matrix_power(matrix: FlowMatrix, k: int) -> FlowMatrix:
    """k-th ordinary matrix power (k >= 1), labels preserved."""
    if int(k) != k or k < 1:
        raise FlowDataError(f"power must be a positive integer, got {k!r}")
    a = matrix.entries
    result = a.copy()
    for _ in range(int(k) - 1):
        result = result @ a
    return matrix.with_entries(result)
