"""Independent reference computations used to check the library.

None of these share code with ``flowbalance``; they are deliberately
brute-force or solve the problem by a different route.
"""
import itertools

import numpy as np
import scipy.optimize


# -- graphs -------------------------------------------------------------------

def closure(adj: np.ndarray) -> np.ndarray:
    """Reflexive transitive closure (Floyd-Warshall on booleans)."""
    r = adj.astype(bool).copy()
    n = r.shape[0]
    np.fill_diagonal(r, True)
    for k in range(n):
        r |= r[:, k:k + 1] & r[k:k + 1, :]
    return r


def scc_oracle(adj: np.ndarray) -> list[int]:
    r = closure(adj)
    mutual = r & r.T
    return [int(np.flatnonzero(mutual[i])[0]) for i in range(adj.shape[0])]


def wcc_oracle(adj: np.ndarray) -> list[int]:
    a = adj.astype(bool)
    r = closure(a | a.T)
    return [int(np.flatnonzero(r[i])[0]) for i in range(adj.shape[0])]


def random_digraph(rng, n: int, density: float) -> np.ndarray:
    adj = rng.random((n, n)) < density
    np.fill_diagonal(adj, False)
    return adj


# -- balancing ----------------------------------------------------------------

def sk_2x2_closed_form(a: np.ndarray) -> np.ndarray:
    s = np.sqrt(a[0, 0] * a[1, 1])
    t = np.sqrt(a[0, 1] * a[1, 0])
    x = s / (s + t)
    return np.array([[x, 1 - x], [1 - x, x]])


def sk_fixed_point(a: np.ndarray) -> np.ndarray:
    """Solve r_i sum_j a_ij c_j = 1, c_j sum_i a_ij r_i = 1 with r_0 = 1."""
    n = a.shape[0]

    def eqs(z):
        logr = np.concatenate([[0.0], z[:n - 1]])
        logc = z[n - 1:]
        r, c = np.exp(logr), np.exp(logc)
        rows = r * (a @ c) - 1.0
        cols = c * (a.T @ r) - 1.0
        return np.concatenate([rows, cols[:-1]])

    sol = scipy.optimize.root(eqs, np.zeros(2 * n - 1), method="hybr", tol=1e-14)
    logr = np.concatenate([[0.0], sol.x[:n - 1]])
    r, c = np.exp(logr), np.exp(sol.x[n - 1:])
    return r[:, None] * a * c[None, :]


def affine_projection_lstsq(x: np.ndarray) -> np.ndarray:
    """Equality-constrained least squares via the KKT normal equations."""
    n = x.shape[0]
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    c = np.vstack([rows, cols])
    v = x.ravel()
    rhs = c @ v - 1.0
    lam, *_ = np.linalg.lstsq(c @ c.T, rhs, rcond=None)
    return (v - c.T @ lam).reshape(n, n)


def birkhoff_2x2_oracle(a: np.ndarray, grid: int = 200001) -> tuple[np.ndarray, float]:
    """Minimize ||B - A||^2 over B = [[t, 1-t], [1-t, t]], t in [0, 1].

    Dense grid followed by a bounded scalar refinement.
    """
    def f(t):
        b = np.array([[t, 1 - t], [1 - t, t]])
        return float(np.sum((b - a) ** 2))

    ts = np.linspace(0.0, 1.0, grid)
    vals = ((ts - a[0, 0]) ** 2 + (1 - ts - a[0, 1]) ** 2 + (1 - ts - a[1, 0]) ** 2 + (ts - a[1, 1]) ** 2)
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, grid - 1)]
    res = scipy.optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
    t = min([ts[k], res.x], key=f)
    return np.array([[t, 1 - t], [1 - t, t]]), f(t)


def birkhoff_dual_oracle(a: np.ndarray, starts: int = 20, seed: int = 0) -> tuple[np.ndarray, float, float]:
    """Nearest doubly stochastic matrix by multi-start gradient ascent on the dual.

    For multipliers (u, v) the Lagrangian minimizer is
    ``B = max(A - u_i - v_j, 0)`` and the dual function is smooth concave
    with gradient (row sums - 1, column sums - 1). Returns the best primal
    recovery, its squared distance to ``a`` and the best dual value, which
    lower-bounds the optimal squared distance / 2.
    """
    n = a.shape[0]
    rng = np.random.default_rng(seed)

    def neg_dual(z):
        u, v = z[:n], z[n:]
        s = u[:, None] + v[None, :]
        b = np.maximum(a - s, 0.0)
        g = 0.5 * np.sum((b - a) ** 2) + np.sum(s * b) - u.sum() - v.sum()
        grad = np.concatenate([b.sum(axis=1) - 1.0, b.sum(axis=0) - 1.0])
        return -g, -grad

    best = None
    for _ in range(starts):
        z0 = rng.normal(scale=max(1.0, float(np.abs(a).max())), size=2 * n)
        res = scipy.optimize.minimize(neg_dual, z0, jac=True, method="L-BFGS-B",
                                      options={"gtol": 1e-13, "ftol": 1e-16, "maxiter": 20000, "maxcor": 50})
        if best is None or res.fun < best.fun:
            best = res
    u, v = best.x[:n], best.x[n:]
    b = np.maximum(a - u[:, None] - v[None, :], 0.0)
    return b, float(np.sum((b - a) ** 2)), -float(best.fun)


def birkhoff_active_set_oracle(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact projection for small n by enumerating the set of zero cells.

    For every candidate zero set solve the equality-constrained least
    squares problem on the free cells; keep feasible (non-negative)
    solutions and return the closest.
    """
    n = a.shape[0]
    cells = n * n
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    c_full = np.vstack([rows, cols])
    v = a.ravel()
    best, best_d = None, np.inf
    for k in range(cells):
        for zeros in itertools.combinations(range(cells), k):
            free = np.setdiff1d(np.arange(cells), zeros)
            c = c_full[:, free]
            # min ||x - v_free||^2 + ||v_zero||^2  s.t. c x = 1
            rhs = c @ v[free] - 1.0
            lam, *_ = np.linalg.lstsq(c @ c.T, rhs, rcond=None)
            x = v[free] - c.T @ lam
            if np.max(np.abs(c @ x - 1.0)) > 1e-9 or x.min() < -1e-12:
                continue
            full = np.zeros(cells)
            full[free] = x
            d = float(np.sum((full - v) ** 2))
            if d < best_d:
                best, best_d = full.reshape(n, n), d
    return best, best_d


def random_doubly_stochastic(rng, n: int, terms: int = 4) -> np.ndarray:
    """Convex combination of random permutation matrices."""
    w = rng.random(terms)
    w /= w.sum()
    b = np.zeros((n, n))
    for wk in w:
        b[np.arange(n), rng.permutation(n)] += wk
    return b


def permutation_matrix(perm) -> np.ndarray:
    n = len(perm)
    p = np.zeros((n, n))
    p[np.arange(n), perm] = 1.0
    return p


def cycles_of(perm) -> list[frozenset]:
    seen, out = set(), []
    for s in range(len(perm)):
        if s in seen:
            continue
        cyc, x = [], s
        while x not in seen:
            seen.add(x)
            cyc.append(x)
            x = perm[x]
        out.append(frozenset(cyc))
    return out


def permutation_spectrum(perm) -> np.ndarray:
    """Union over cycles of length L of the L-th roots of unity."""
    vals = []
    for cyc in cycles_of(perm):
        L = len(cyc)
        vals.extend(np.exp(2j * np.pi * np.arange(L) / L))
    return np.array(vals)


def match_spectra(x: np.ndarray, y: np.ndarray) -> float:
    """Largest distance under the best one-to-one matching of two spectra."""
    cost = np.abs(np.asarray(x)[:, None] - np.asarray(y)[None, :])
    r, c = scipy.optimize.linear_sum_assignment(cost)
    return float(cost[r, c].max())
