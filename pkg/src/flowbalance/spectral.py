"""Leading eigenvalues of (generally non-symmetric) balanced matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .flowmatrix import FlowMatrix

DENSE_LIMIT = 512
RESIDUAL_TOL = 1e-8


class SpectrumError(RuntimeError):
    """Raised when the iterative eigensolver fails; carries partial results."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    k: int
    residuals: np.ndarray
    method: str = "dense"

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [
                {"re": float(v.real), "im": float(v.imag), "residual": float(r)}
                for v, r in zip(self.eigenvalues, self.residuals)
            ],
            "k": self.k,
        }


def sort_order(values: np.ndarray, decimals: int = 10) -> np.ndarray:
    """Indices by modulus desc, then real part desc, then imaginary desc.

    Keys are rounded so that values equal up to round-off tie cleanly.
    """
    v = np.asarray(values, dtype=complex)
    mod = np.round(np.abs(v), decimals)
    re = np.round(v.real, decimals)
    im = np.round(v.imag, decimals)
    return np.lexsort((-im, -re, -mod))


def _residuals(a: np.ndarray, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    r = a @ vectors - vectors * values[None, :]
    return np.linalg.norm(r, axis=0) / np.linalg.norm(vectors, axis=0)


def leading_eigenvalues(b, k: int, method: str = "auto") -> SpectrumReport:
    """The ``k`` largest-modulus eigenvalues of ``b`` with residual norms.

    ``method="auto"`` uses a dense LAPACK eigendecomposition for n up to 512
    and ARPACK's restarted Arnoldi iteration above that; ``"dense"`` and
    ``"arnoldi"`` force one path. Conjugate pairs appear as two entries.
    """
    a = b.entries if isinstance(b, FlowMatrix) else np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if int(k) != k or not 1 <= k <= n:
        raise ValueError(f"k must be an integer in [1, {n}], got {k!r}")
    k = int(k)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "arnoldi"
    if method == "arnoldi" and k >= n - 2:
        # ARPACK needs k < n - 1, plus one spare value
        method = "dense"

    if method == "dense":
        values, vectors = scipy.linalg.eig(a)
    elif method == "arnoldi":
        # one extra value so a conjugate pair straddling the cut is resolved
        # by the sort convention rather than by ARPACK
        k_req = min(k + 1, n - 2)
        ncv = min(n, max(2 * k_req + 1, k_req + 40))
        try:
            values, vectors = scipy.sparse.linalg.eigs(a, k=k_req, which="LM", ncv=ncv, tol=1e-14, maxiter=50 * n)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            partial = None
            if len(exc.eigenvalues):
                idx = sort_order(exc.eigenvalues)
                partial = SpectrumReport(exc.eigenvalues[idx], k,
                                         _residuals(a, exc.eigenvalues, exc.eigenvectors)[idx], "arnoldi-partial")
            raise SpectrumError(f"Arnoldi iteration did not converge for k={k}", partial) from exc
    else:
        raise ValueError(f"unknown method {method!r}")

    idx = sort_order(values)[:k]
    values = values[idx]
    res = _residuals(a, values, vectors[:, idx])
    if method == "arnoldi" and np.any(res > RESIDUAL_TOL):
        raise SpectrumError(
            f"Arnoldi residual {res.max():.2e} exceeds {RESIDUAL_TOL:g}",
            SpectrumReport(values, k, res, "arnoldi-partial"))
    return SpectrumReport(values.astype(complex), k, res, method)
