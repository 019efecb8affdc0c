"""Exact linear algebra over the rationals.

Small, dependency-free helpers used wherever the rational arithmetic
backend is required (rational shapes, exact facet enumeration).  Matrices
are lists of lists (or object arrays) of :class:`fractions.Fraction`.
"""
from fractions import Fraction
from math import gcd

import numpy as np


def to_fraction_matrix(rows):
    return [[Fraction(v) for v in row] for row in rows]


def rref(rows):
    """Reduced row echelon form.

    Returns ``(R, pivots)`` where ``R`` holds only the nonzero rows.
    """
    M = [list(map(Fraction, row)) for row in rows]
    if not M:
        return [], []
    n_rows, n_cols = len(M), len(M[0])
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv for v in M[r]]
        for i in range(n_rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [vi - f * vr for vi, vr in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return M[:r], pivots


def rank(rows):
    return len(rref(rows)[1])


def nullspace(rows, n_cols=None):
    """Basis of the right null space, one basis vector per free column.

    The basis is canonical: vector ``k`` has a 1 in the ``k``-th free
    column and zeros in all other free columns.
    """
    if n_cols is None:
        n_cols = len(rows[0])
    R, pivots = rref(rows) if rows else ([], [])
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * n_cols
        v[f] = Fraction(1)
        for row, p in zip(R, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


def solve(rows, rhs):
    """One solution of ``rows @ x = rhs`` or ``None`` when inconsistent."""
    aug = [list(r) + [Fraction(b)] for r, b in zip(rows, rhs)]
    R, pivots = rref(aug)
    n = len(rows[0])
    if n in pivots:
        return None
    x = [Fraction(0)] * n
    for row, p in zip(R, pivots):
        x[p] = row[n]
    return x


def integer_normalize(vec):
    """Scale a rational vector to coprime integers (sign preserved)."""
    vec = [Fraction(v) for v in vec]
    den = 1
    for v in vec:
        den = den * v.denominator // gcd(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = gcd(g, abs(v))
    if g == 0:
        return ints
    return [v // g for v in ints]


def as_float(arr):
    return np.asarray(arr, dtype=object).astype(float)


def rationalize(values, max_den=10**6, tol=1e-12):
    """Fractions matching ``values`` to ``tol``, or ``None`` if any fails."""
    out = []
    for v in np.ravel(values):
        fr = Fraction(float(v)).limit_denominator(max_den)
        if abs(float(fr) - float(v)) > tol:
            return None
        out.append(fr)
    return out
