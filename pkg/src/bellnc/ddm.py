"""Double description method for polyhedral cones.

The core routine, :func:`extreme_rays`, converts the H-representation of a
pointed cone ``{x : A x >= 0}`` into its extreme rays.  Two arithmetic
backends share the same code path:

* exact: rays are kept as coprime integer vectors (Python ints), so every
  sign test is exact;
* float: rays are kept max-norm normalized and sign tests use a tolerance.

Adjacency of a (+, -) ray pair is decided with the combinatorial test:
the pair is adjacent iff no third ray is tight on every constraint the
pair shares.

:func:`polytope_vertices` (H to V) and :func:`hull_facets` (V to H) are
thin wrappers that homogenize a polytope into a cone.
"""
from fractions import Fraction

import numpy as np

from . import _rational as rat

__all__ = ["extreme_rays", "polytope_vertices", "hull_facets", "DDError"]


class DDError(ValueError):
    pass


def _initial_basis(A, exact, tol):
    """Pick ``d`` independent rows of ``A`` (first-come order)."""
    d = A.shape[1]
    chosen = []
    if exact:
        basis_rows = []
        for i, row in enumerate(A):
            trial = basis_rows + [list(row)]
            if rat.rank(trial) == len(trial):
                basis_rows = trial
                chosen.append(i)
                if len(chosen) == d:
                    break
    else:
        current = np.zeros((0, d))
        for i, row in enumerate(A):
            trial = np.vstack([current, row])
            if np.linalg.matrix_rank(trial, tol=tol) == len(trial):
                current = trial
                chosen.append(i)
                if len(chosen) == d:
                    break
    if len(chosen) < d:
        raise DDError("cone is not pointed: constraint matrix has rank < dimension")
    return chosen


def extreme_rays(A, exact=True, tol=1e-9):
    """Extreme rays of the pointed cone ``{x : A x >= 0}``.

    Parameters
    ----------
    A : array_like, shape (m, d)
        Constraint rows.  In exact mode entries must be rationals.
    exact : bool
        Use exact integer arithmetic.
    tol : float
        Zero tolerance for the float backend (relative to row norms).

    Returns
    -------
    rays : list
        Coprime integer lists (exact) or a float array (m_rays, d).
    """
    if exact:
        A = np.array([rat.integer_normalize(row) for row in A], dtype=object)
    else:
        A = np.asarray(A, dtype=float)
        norms = np.abs(A).max(axis=1)
        norms[norms == 0] = 1.0
        A = A / norms[:, None]
    m, d = A.shape
    keep = [i for i in range(m) if any(v != 0 for v in A[i])]
    A = A[keep]
    m = A.shape[0]

    basis = _initial_basis(A, exact, tol)
    B = A[basis]
    if exact:
        Bf = [[Fraction(v) for v in row] for row in B]
        # columns of B^-1 are the initial rays
        inv_cols = []
        for j in range(d):
            e = [Fraction(int(i == j)) for i in range(d)]
            inv_cols.append(rat.solve(Bf, e))
        rays = np.array([rat.integer_normalize(c) for c in inv_cols], dtype=object)
    else:
        rays = np.linalg.inv(B).T.copy()
        rays /= np.abs(rays).max(axis=1)[:, None]

    Z = np.zeros((d, m), dtype=bool)
    for r in range(d):
        for j, bi in enumerate(basis):
            Z[r, bi] = r != j

    order = basis + [i for i in range(m) if i not in basis]
    for row_idx in order[len(basis):]:
        a = A[row_idx]
        if exact:
            vals = rays.dot(a)
            sign = np.array([(v > 0) - (v < 0) for v in vals], dtype=int)
        else:
            vals = rays @ a
            sign = np.where(vals > tol, 1, np.where(vals < -tol, -1, 0))
        plus = np.flatnonzero(sign > 0)
        minus = np.flatnonzero(sign < 0)
        zero = np.flatnonzero(sign == 0)

        new_rays, new_Z = [], []
        if len(plus) and len(minus):
            Zf = Z.astype(np.float32)
            Zm = Z[minus]
            need = d - 2
            for p in plus:
                inter = Zm & Z[p]
                cnt = inter.sum(axis=1)
                cand = np.flatnonzero(cnt >= need)
                if not len(cand):
                    continue
                # how many rays are tight on every shared constraint
                cover = inter[cand].astype(np.float32) @ Zf.T
                n_cover = (cover >= cnt[cand][:, None] - 0.5).sum(axis=1)
                for c in cand[n_cover == 2]:
                    n = minus[c]
                    if exact:
                        vp, vn = vals[p], vals[n]
                        new = [vp * x - vn * y for x, y in zip(rays[n], rays[p])]
                        new = rat.integer_normalize(new)
                    else:
                        vp, vn = vals[p], vals[n]
                        new = vp * rays[n] - vn * rays[p]
                        new = new / np.abs(new).max()
                    z = inter[c].copy()
                    z[row_idx] = True
                    new_rays.append(new)
                    new_Z.append(z)

        kept = np.concatenate([plus, zero]).astype(int)
        Zk = Z[kept].copy()
        Zk[np.isin(kept, zero), row_idx] = True
        if exact:
            kept_rays = [list(rays[i]) for i in kept] + [list(r) for r in new_rays]
            rays = np.array(kept_rays, dtype=object).reshape(-1, d)
        else:
            rays = np.vstack([rays[kept]] + ([np.array(new_rays)] if new_rays else []))
        Z = np.vstack([Zk] + ([np.array(new_Z)] if new_Z else [])) if len(Zk) or new_Z else np.zeros((0, m), bool)
        if not len(rays):
            break

    if exact:
        return [list(map(int, r)) for r in rays]
    return np.asarray(rays, dtype=float)


def polytope_vertices(E, e, G, h, exact=True, tol=1e-9):
    """Vertices of the bounded polytope ``{x : E x = e, G x >= h}``.

    Returns a list of Fraction lists (exact) or a float array.  An empty
    list means the polytope is empty.  Raises :class:`DDError` for an
    unbounded region.
    """
    n = len(G[0]) if len(G) else len(E[0])
    if exact:
        E = rat.to_fraction_matrix(E)
        G = rat.to_fraction_matrix(G)
        e = [Fraction(v) for v in e]
        h = [Fraction(v) for v in h]
        if E:
            x0 = rat.solve(E, e)
            if x0 is None:
                return []
            N = rat.nullspace(E, n)
        else:
            x0 = [Fraction(0)] * n
            N = [[Fraction(int(i == j)) for i in range(n)] for j in range(n)]
        k = len(N)
        # homogenized cone over (lam, z): lam*(G x0 - h) + G N z >= 0, lam >= 0
        rows = []
        for gi, hi in zip(G, h):
            const = sum(g * x for g, x in zip(gi, x0)) - hi
            rows.append([const] + [sum(g * Nj[c] for c, g in enumerate(gi)) for Nj in N])
        rows.append([Fraction(1)] + [Fraction(0)] * k)
        rays = extreme_rays(rows, exact=True)
        verts = []
        for r in rays:
            if r[0] == 0:
                raise DDError("polytope is unbounded")
            lam = Fraction(r[0])
            z = [Fraction(v) / lam for v in r[1:]]
            x = [x0[i] + sum(z[j] * N[j][i] for j in range(k)) for i in range(n)]
            verts.append(x)
        return verts

    E = np.asarray(E, dtype=float).reshape(-1, n)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    e = np.asarray(e, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(E):
        x0, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.abs(E @ x0 - e).max() > 1e-9:
            return np.zeros((0, n))
        u, s, vt = np.linalg.svd(E)
        r = int((s > 1e-10 * max(1.0, s.max())).sum())
        N = vt[r:]
    else:
        x0 = np.zeros(n)
        N = np.eye(n)
    rows = np.hstack([(G @ x0 - h)[:, None], G @ N.T])
    rows = np.vstack([rows, np.eye(1, 1 + len(N))])
    rays = extreme_rays(rows, exact=False, tol=tol)
    if len(rays) and np.any(rays[:, 0] <= tol):
        raise DDError("polytope is unbounded")
    if not len(rays):
        return np.zeros((0, n))
    z = rays[:, 1:] / rays[:, :1]
    return x0 + z @ N


def hull_facets(points, exact=True, tol=1e-9):
    """Facets of the convex hull of ``points`` within its affine hull.

    Returns ``(facets, pivots)``.  Each facet is ``(b, c)`` meaning
    ``b + sum_j c[j] * x[pivots[j]] >= 0``; the coordinates indexed by
    ``pivots`` parametrize the affine hull injectively.
    """
    if exact:
        P = [[Fraction(v) for v in p] for p in points]
        p0 = P[0]
        diffs = [[a - b for a, b in zip(p, p0)] for p in P[1:]]
        _, pivots = rat.rref(diffs) if diffs else ([], [])
        if not pivots:
            return [], []
        rows = [[Fraction(1)] + [p[j] for j in pivots] for p in P]
        rays = extreme_rays(rows, exact=True)
        return [(r[0], r[1:]) for r in rays], pivots

    P = np.asarray(points, dtype=float)
    D = P[1:] - P[0]
    # pivot coordinates via column-pivoted QR on the difference matrix
    from scipy.linalg import qr
    _, R, perm = qr(D, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
    r = int((diag > 1e-10 * max(1.0, diag.max() if diag.size else 1.0)).sum())
    pivots = sorted(perm[:r].tolist())
    if not pivots:
        return [], []
    rows = np.hstack([np.ones((len(P), 1)), P[:, pivots]])
    rays = extreme_rays(rows, exact=False, tol=tol)
    return [(r[0], r[1:]) for r in rays], pivots
