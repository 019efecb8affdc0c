"""Assignment polytopes and the product vertex matrix ``T``.

Each party's assignment polytope lives in R^{2 Delta} with coordinates
``q[a * Delta + x] = p(a|x)``.  Its vertices are the extremal
noncontextual response functions.  The product matrix ``T`` has one
column ``u (x) w`` per vertex pair, laid out as a flattened correlation
tensor ``p[a, b, x, y]``.
"""
from dataclasses import dataclass, field
from functools import cached_property
from math import lcm
from fractions import Fraction
import csv
import io
import json

import numpy as np

from . import _rational as rat
from . import ddm
from .geometry import derive_identities

__all__ = [
    "InfeasiblePolytopeError",
    "AssignmentPolytope",
    "ProductVertexMatrix",
    "assignment_vertices",
    "product_vertices",
    "affine_dimension",
    "correlation_index",
    "vertices_to_csv",
    "matrix_to_csv",
]


class InfeasiblePolytopeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AssignmentPolytope:
    """H- and V-representation of one party's assignment polytope.

    H-rep: ``q >= 0``, ``eq_matrix @ q == eq_rhs`` (normalization rows
    followed by identity rows).  ``vertices`` has shape (n_vertices, 2 Delta).
    """

    shape: object
    identities: object
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    vertices: np.ndarray
    exact_vertices: tuple = field(default=None, repr=False)

    @property
    def n_settings(self):
        return self.shape.n_settings

    @property
    def is_exact(self):
        return self.exact_vertices is not None

    def labels(self):
        return self.shape.column_labels()

    def as_tensors(self):
        """Vertices reshaped to ``(n_vertices, 2, Delta)``."""
        return self.vertices.reshape(len(self.vertices), 2, self.n_settings)

    def check(self, tol=1e-9):
        V = self.vertices
        ok = V.min() >= -tol
        ok &= np.abs(V @ self.eq_matrix.T - self.eq_rhs).max() <= tol
        return bool(ok)


def _h_rep(identities, n):
    norm = np.zeros((n, 2 * n))
    for x in range(n):
        norm[x, x] = norm[x, n + x] = 1
    E = np.vstack([norm, identities.coefficients])
    e = np.concatenate([np.ones(n), np.zeros(len(identities))])
    return E, e


def _exact_h_rep(identities, n):
    rows = []
    for x in range(n):
        r = [Fraction(0)] * (2 * n)
        r[x] = r[n + x] = Fraction(1)
        rows.append(r)
    rows += [list(r) for r in identities.exact]
    return rows, [Fraction(1)] * n + [Fraction(0)] * len(identities.exact)


def _polish(V, E, e, tol):
    """Re-solve each float vertex from its tight constraints and dedupe."""
    n = E.shape[1]
    out = []
    for v in V:
        tight = np.flatnonzero(np.abs(v) < 1e-7)
        A = np.vstack([E, np.eye(n)[tight]])
        b = np.concatenate([e, np.zeros(len(tight))])
        if np.linalg.matrix_rank(A, tol=1e-9) < n:
            continue
        w, *_ = np.linalg.lstsq(A, b, rcond=None)
        w[np.abs(w) < 1e-13] = 0.0
        if np.abs(A @ w - b).max() > tol or w.min() < -tol:
            continue
        if any(np.abs(w - u).max() < 1e-8 for u in out):
            continue
        out.append(w)
    return np.array(out).reshape(-1, n)


def _lex_order(V):
    return np.lexsort(np.round(V, 9).T[::-1])


def assignment_vertices(shape, identities=None, exact=None, tol=1e-9):
    """Vertices of the noncontextual assignment polytope of ``shape``.

    Constraints: ``p(b|y) >= 0``, ``sum_b p(b|y) = 1`` and
    ``sum beta_{b,y} p(b|y) = 0`` for every identity row.  Vertices are
    sorted lexicographically.
    """
    if identities is None:
        identities = derive_identities(shape)
    n = shape.n_settings
    if exact is None:
        exact = identities.exact is not None
    E, e = _h_rep(identities, n)
    G = np.eye(2 * n)
    h = np.zeros(2 * n)
    if exact:
        if identities.exact is None:
            raise ValueError("exact mode needs exactly derived identities")
        Ex, ex = _exact_h_rep(identities, n)
        Gx = [[Fraction(int(i == j)) for j in range(2 * n)] for i in range(2 * n)]
        verts = ddm.polytope_vertices(Ex, ex, Gx, [Fraction(0)] * (2 * n), exact=True)
        if not verts:
            raise InfeasiblePolytopeError("assignment polytope is empty")
        verts = sorted(verts)
        V = np.array([[float(v) for v in r] for r in verts])
        return AssignmentPolytope(shape, identities, E, e, V, tuple(tuple(r) for r in verts))

    V = ddm.polytope_vertices(E, e, G, h, exact=False, tol=tol)
    if not len(V):
        raise InfeasiblePolytopeError("assignment polytope is empty")
    V = _polish(V, E, e, tol)
    if not len(V):
        raise InfeasiblePolytopeError("no vertex survived verification")
    V = V[_lex_order(V)]
    return AssignmentPolytope(shape, identities, E, e, V, None)


def correlation_index(a, b, x, y, n_x, n_y):
    """Flat position of ``p(ab|xy)`` in the ``(a, b, x, y)`` row-major layout."""
    return ((a * 2 + b) * n_x + x) * n_y + y


@dataclass(frozen=True, eq=False)
class ProductVertexMatrix:
    """Columns ``u (x) w`` for all vertex pairs of two assignment polytopes.

    ``matrix`` has shape (d, k) with ``d = 4 * Delta_N * Delta_M``; column
    ``i * |V_B| + j`` comes from vertex ``i`` of A and ``j`` of B.
    """

    matrix: np.ndarray
    provenance: tuple
    n_x: int
    n_y: int
    exact: tuple = field(default=None, repr=False)
    polytopes: tuple = field(default=None, repr=False)

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def k(self):
        return self.matrix.shape[1]

    @property
    def tensor_shape(self):
        return (2, 2, self.n_x, self.n_y)

    @property
    def is_exact(self):
        return self.exact is not None

    @cached_property
    def integer_matrix(self):
        """``(scale, M)`` with ``M = scale * T`` an int64 array, exact mode only."""
        if self.exact is None:
            return None
        den = 1
        for col in self.exact:
            for v in col:
                den = lcm(den, Fraction(v).denominator)
        M = np.array([[int(Fraction(v) * den) for v in col] for col in self.exact],
                     dtype=np.int64).T
        return den, M

    def column(self, k):
        return self.matrix[:, k].reshape(self.tensor_shape)

    def labels(self):
        return [f"{a},{b},{x},{y}" for a in range(2) for b in range(2)
                for x in range(self.n_x) for y in range(self.n_y)]


def _outer(u, w, n_x, n_y):
    U = np.asarray(u, dtype=object).reshape(2, n_x)
    W = np.asarray(w, dtype=object).reshape(2, n_y)
    out = np.empty((2, 2, n_x, n_y), dtype=object)
    for a in range(2):
        for b in range(2):
            out[a, b] = np.multiply.outer(U[a], W[b])
    return out.ravel()


def product_vertices(A, B):
    """Product vertex matrix of two assignment polytopes."""
    n_x, n_y = A.n_settings, B.n_settings
    UA = A.as_tensors()
    UB = B.as_tensors()
    cols = np.einsum("iax,jby->ijabxy", UA, UB).reshape(len(UA) * len(UB), -1)
    prov = tuple((i, j) for i in range(len(UA)) for j in range(len(UB)))
    exact = None
    if A.is_exact and B.is_exact:
        exact = tuple(tuple(_outer(u, w, n_x, n_y)) for u in A.exact_vertices
                      for w in B.exact_vertices)
    return ProductVertexMatrix(cols.T.copy(), prov, n_x, n_y, exact, (A, B))


def affine_dimension(T, tol=1e-9):
    """Dimension of the affine hull of the columns of ``T``."""
    if isinstance(T, ProductVertexMatrix):
        if T.is_exact:
            c0 = T.exact[0]
            diffs = [[a - b for a, b in zip(c, c0)] for c in T.exact[1:]]
            return rat.rank(diffs) if diffs else 0
        M = T.matrix
    else:
        M = np.asarray(T, dtype=float)
    if M.shape[1] <= 1:
        return 0
    centered = M - M.mean(axis=1, keepdims=True)
    return int(np.linalg.matrix_rank(centered, tol=tol))


def vertices_to_csv(P):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(P.labels())
    src = P.exact_vertices if P.is_exact else P.vertices
    for v in src:
        w.writerow([str(x) if isinstance(x, Fraction) else repr(float(x)) for x in v])
    return buf.getvalue()


def matrix_to_csv(T):
    """Dense CSV of ``T`` (rows = correlation cells) and a provenance JSON."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell"] + [f"v{k}" for k in range(T.k)])
    for lab, row in zip(T.labels(), T.matrix):
        w.writerow([lab] + [repr(float(v)) for v in row])
    side = json.dumps({"n_x": T.n_x, "n_y": T.n_y,
                       "columns": [{"A": i, "B": j} for i, j in T.provenance]}, indent=2)
    return buf.getvalue(), side
