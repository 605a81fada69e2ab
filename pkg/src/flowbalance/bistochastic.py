"""Bi-stochastic balancing of non-negative square matrices.

Two Bregman divergences are supported:

* Kullback-Leibler, generator ``x log x - x``: the minimizer over
  bi-stochastic matrices with the same zero pattern is the diagonal scaling
  found by Sinkhorn-Knopp (alternate row and column normalization).
* Squared norm, generator ``x**2 / 2``: the minimizer is the Euclidean
  projection onto the Birkhoff polytope, found by alternating between the
  affine set {row sums = column sums = 1} and the non-negative orthant, with
  Dykstra's correction on the orthant step.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .flowmatrix import FlowDataError, FlowMatrix

SK_TOL = 1e-12
SQNORM_TOL = 1e-30
MAX_ITER = 200_000
# negative round-off tolerated (and clamped) in squared-norm output
NEGATIVE_CLAMP = 1e-12


class BalancingError(FlowDataError):
    """Raised when a matrix cannot be balanced as requested."""


class Method(str, enum.Enum):
    KL_SINKHORN = "KL_Sinkhorn"
    SQUARED_NORM_DYKSTRA = "SquaredNorm_Dykstra"
    SQUARED_NORM_PLAIN = "SquaredNorm_PlainAlternation"


class DivergenceKind(str, enum.Enum):
    KULLBACK_LEIBLER = "KullbackLeibler"
    SQUARED_NORM = "SquaredNorm"


@dataclass(frozen=True)
class ConvergenceReport:
    """Outcome of a balancing run.

    ``last_step_delta`` is the sum of squared entry changes between the final
    two iterates; ``max_sum_deviation`` the largest ``|sum - 1|`` over all
    row and column sums of the returned matrix.
    """

    iterations: int
    last_step_delta: float
    max_sum_deviation: float
    converged: bool
    method: Method

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


def _entries(a) -> np.ndarray:
    return a.entries if isinstance(a, FlowMatrix) else np.asarray(a, dtype=np.float64)


def _wrap(template, entries: np.ndarray):
    if isinstance(template, FlowMatrix):
        return template.with_entries(entries)
    return FlowMatrix(entries)


def bistochastic_deviation(b) -> float:
    """Largest ``|sum - 1|`` over the 2n row and column sums."""
    x = _entries(b)
    return float(max(np.max(np.abs(x.sum(axis=1) - 1.0)), np.max(np.abs(x.sum(axis=0) - 1.0))))


def _check_square(x: np.ndarray):
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] == 0:
        raise BalancingError(f"expected a non-empty square matrix, got shape {x.shape}")


# -- Kullback-Leibler -------------------------------------------------------

def sinkhorn_knopp(a, tol: float = SK_TOL, max_iter: int = MAX_ITER):
    """Scale ``a`` to bi-stochastic form ``diag(r) @ a @ diag(c)``.

    One iteration is a full row pass followed by a full column pass. The run
    stops once the max row/column sum deviation is at most ``tol``; hitting
    ``max_iter`` returns the current iterate with ``converged=False``.

    Returns:
        (FlowMatrix, ConvergenceReport)

    Raises:
        BalancingError: if some row or column has no positive entry.
    """
    x = _entries(a)
    _check_square(x)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise BalancingError("input must be finite and non-negative")
    zero_rows = np.flatnonzero(~np.any(x > 0, axis=1))
    if zero_rows.size:
        raise BalancingError(f"row {int(zero_rows[0])} has no positive entry")
    zero_cols = np.flatnonzero(~np.any(x > 0, axis=0))
    if zero_cols.size:
        raise BalancingError(f"column {int(zero_cols[0])} has no positive entry")

    n = x.shape[0]
    xt = np.ascontiguousarray(x.T)
    r = np.ones(n)
    c = np.ones(n)
    r_prev, c_prev = r, c

    # products are reused: x @ c feeds both the deviation check and the
    # next row pass, xt @ r both the column pass and the next check
    xc = x @ c
    xtr = xt @ r
    it = 0
    dev = float(max(np.max(np.abs(r * xc - 1.0)), np.max(np.abs(c * xtr - 1.0))))
    while dev > tol and it < max_iter:
        r_prev, c_prev = r, c
        r = 1.0 / xc
        xtr = xt @ r
        c = 1.0 / xtr
        xc = x @ c
        it += 1
        dev = float(max(np.max(np.abs(r * xc - 1.0)), np.max(np.abs(c * xtr - 1.0))))

    b = r[:, None] * x * c[None, :]
    if it:
        prev = r_prev[:, None] * x * c_prev[None, :]
        delta = float(np.sum((b - prev) ** 2))
    else:
        delta = 0.0
    report = ConvergenceReport(
        iterations=it,
        last_step_delta=delta,
        max_sum_deviation=bistochastic_deviation(b),
        converged=dev <= tol,
        method=Method.KL_SINKHORN,
    )
    return _wrap(a, b), report


# -- squared norm -----------------------------------------------------------

def project_affine_doubly_stochastic(x) -> np.ndarray:
    """Euclidean projection onto {Y : all row and column sums equal 1}.

    Closed form ``Y = X + J/n + s J/n^2 - X J/n - J X/n`` with ``J`` the
    all-ones matrix and ``s`` the total of ``X``. Entries may be negative.
    """
    x = np.asarray(_entries(x), dtype=np.float64)
    _check_square(x)
    if not np.all(np.isfinite(x)):
        raise BalancingError("affine projection input has non-finite entries")
    n = x.shape[0]
    rows = x.sum(axis=1)
    cols = x.sum(axis=0)
    total = rows.sum()
    # grouped as deviations from the target so a fixed point maps to itself
    shift = (total - n) / (n * n)
    return x - ((rows - 1.0) / n)[:, None] - ((cols - 1.0) / n)[None, :] + shift


def _project_affine_inplace(y: np.ndarray, n: int, out: np.ndarray) -> np.ndarray:
    rows = y.sum(axis=1)
    cols = y.sum(axis=0)
    shift = (rows.sum() - n) / (n * n)
    rows -= 1.0
    rows /= n
    cols -= 1.0
    cols /= n
    np.subtract(y, rows[:, None], out=out)
    out -= cols[None, :]
    out += shift
    return out


class Variant(str, enum.Enum):
    DYKSTRA = "dykstra"
    PLAIN = "plain"


def squared_norm_bistochastize(a, tol: float = SQNORM_TOL, max_iter: int = MAX_ITER,
                               variant: str | Variant = Variant.DYKSTRA, callback=None):
    """Nearest bi-stochastic matrix to ``a`` in Frobenius norm.

    Alternates the affine projection with clipping at zero. With
    ``variant="dykstra"`` the clipping step carries Dykstra's correction, so
    the limit is the exact projection of ``a`` onto the Birkhoff polytope; the
    affine step needs no correction since the set is affine. With
    ``variant="plain"`` the projections alternate without correction and the
    limit is just some point of the polytope.

    The iteration stops when the sum of squared changes between consecutive
    affine iterates is at most ``tol``, or after ``max_iter`` iterations.
    ``callback(iteration, iterate)``, if given, receives a read-only view of
    each affine iterate.

    Returns:
        (FlowMatrix, ConvergenceReport)
    """
    x = np.array(_entries(a), dtype=np.float64)
    _check_square(x)
    if not np.all(np.isfinite(x)):
        raise BalancingError("input has non-finite entries")
    if np.any(x < 0):
        raise BalancingError("input must be non-negative")
    variant = Variant(variant)
    method = Method.SQUARED_NORM_DYKSTRA if variant is Variant.DYKSTRA else Method.SQUARED_NORM_PLAIN
    n = x.shape[0]

    y = np.empty_like(x)
    y_prev = np.empty_like(x)
    q = np.zeros_like(x)      # Dykstra increment for the orthant
    z = x                     # current orthant iterate, starts at the input
    tmp = np.empty_like(x)
    delta = math.inf
    it = 0
    _project_affine_inplace(z, n, y)
    if callback is not None:
        callback(0, y)
    while it < max_iter:
        y_prev, y = y, y_prev
        if variant is Variant.DYKSTRA:
            np.add(y_prev, q, out=tmp)
            z = np.maximum(tmp, 0.0)
            np.subtract(tmp, z, out=q)
        else:
            z = np.maximum(y_prev, 0.0)
        _project_affine_inplace(z, n, y)
        it += 1
        np.subtract(y, y_prev, out=tmp)
        delta = float(np.einsum("ij,ij->", tmp, tmp))
        if callback is not None:
            callback(it, y)
        if delta <= tol:
            break
    converged = delta <= tol

    out = y
    if out.min() < 0.0:
        if out.min() >= -NEGATIVE_CLAMP:
            out = np.maximum(out, 0.0)
        elif converged:
            raise BalancingError(
                f"converged iterate has entry {out.min():.3e} below -{NEGATIVE_CLAMP:g}")
        else:
            # not converged: fall back to the (non-negative) orthant iterate
            out = z
    out = out.copy()
    report = ConvergenceReport(
        iterations=it,
        last_step_delta=0.0 if math.isinf(delta) else delta,
        max_sum_deviation=bistochastic_deviation(out),
        converged=converged,
        method=method,
    )
    return _wrap(a, out), report


# -- divergences ------------------------------------------------------------

def bregman_divergence(kind: str | DivergenceKind, b, a) -> float:
    """``D(b, a)`` for the squared-norm or Kullback-Leibler generator.

    Squared norm: ``0.5 * sum((b - a)**2)``. Kullback-Leibler:
    ``sum(b log(b/a) - b + a)`` over cells with ``a > 0``, using ``0 log 0 = 0``;
    ``b`` must vanish wherever ``a`` does.
    """
    kind = DivergenceKind(kind)
    bx = _entries(b)
    ax = _entries(a)
    if bx.shape != ax.shape:
        raise BalancingError(f"shape mismatch: {bx.shape} vs {ax.shape}")
    if kind is DivergenceKind.SQUARED_NORM:
        d = bx - ax
        return 0.5 * float(np.sum(d * d))
    if np.any(bx < 0) or np.any(ax < 0):
        raise BalancingError("Kullback-Leibler divergence needs non-negative arguments")
    support = ax > 0
    if np.any(bx[~support] > 0):
        raise BalancingError("infinite divergence: b is positive where a is zero")
    bs = bx[support]
    as_ = ax[support]
    pos = bs > 0
    terms = as_ - bs
    terms[pos] += bs[pos] * np.log(bs[pos] / as_[pos])
    return max(0.0, float(np.sum(terms)))
