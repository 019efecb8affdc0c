"""Secondary measurements that satisfy the target identities exactly.

A secondary effect is a classical post-processing of the primary ones,

    N^s_{a|x} = sum_{a',x'} u[(a,x), (a',x')] N_{a'|x'},

with ``u`` row-stochastic (optionally also mixing in the constant effects
``0`` and ``1``).  Only the primary statistics are needed: when
the other party's steered states span the local operator space, an
operator identity holds iff it holds after contraction with the data.
``u`` is chosen by a linear program maximizing its average diagonal
weight ``C_N``; Bob's map ``v`` is fitted the same way on the transposed
data.
"""
from dataclasses import dataclass, field
import json

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "SecondaryMap",
    "NoSecondaryError",
    "SpanError",
    "steering_matrix",
    "check_span",
    "fit_secondary",
    "fit_side",
    "apply_secondary",
    "identity_residuals",
    "identity_map",
    "secondary_to_json",
]

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class NoSecondaryError(ValueError):
    pass


class SpanError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SecondaryMap:
    """Row-stochastic post-processings for both parties.

    ``u[i, k]`` with ``i, k`` flat ``(a, x)`` indices ``a * Delta_N + x``;
    likewise ``v`` on Bob's side.  When constant effects are allowed the
    maps have two extra columns, the weights on ``0`` and ``1``.
    """

    u: np.ndarray
    v: np.ndarray
    C_N: float
    C_M: float
    residuals: dict = field(default_factory=dict)


def steering_matrix(p):
    """Data matrix ``P[(a,x), (b,y)] = p(ab|xy)``."""
    p = np.asarray(p, dtype=float)
    _, _, nx, ny = p.shape
    return p.transpose(0, 2, 1, 3).reshape(2 * nx, 2 * ny)


def _from_matrix(P, nx, ny):
    return P.reshape(2, nx, 2, ny).transpose(0, 2, 1, 3)


def check_span(p, expected_rank=4, rtol=1e-6):
    """Rank of the steering data matrix from relative singular values."""
    s = np.linalg.svd(steering_matrix(p), compute_uv=False)
    r = int(np.sum(s > rtol * s[0]))
    if expected_rank is not None and r != expected_rank:
        raise SpanError(f"steering data has rank {r}, expected {expected_rank}")
    return r


def fit_side(P, alpha, tie_break=True, trivial_effects=True):
    """Fit ``u`` for the party indexing the rows of ``P``.

    Parameters
    ----------
    P : ndarray, shape (2 * Delta, K)
        Rows ``(a', x')``, columns the other party's ``(b', y')``.
    alpha : ndarray, shape (n_ids, 2 * Delta)
        Identity coefficients to enforce.
    trivial_effects : bool
        Also allow mixing in the constant effects ``0`` and ``1`` (answer
        a fixed outcome regardless of the primary result).  Without them an
        outcome bias of any size in a primary effect can only be removed by
        heavy mixing, so ``C`` jumps well below 1 under statistical noise.

    Returns
    -------
    u : ndarray, shape (2 * Delta, 2 * Delta)
        Weights on the primary effects; rows may sum to less than 1 when
        constant effects are used.
    C : float
    """
    n = P.shape[0]
    delta = n // 2
    K = P.shape[1]
    # other party's marginals p(b'|y'): average over this party's settings
    marg = P.reshape(2, delta, K).sum(axis=0).mean(axis=0)
    # effect "columns": primaries, then the constant effects 0 and 1
    Q = np.vstack([P, np.zeros(K), marg]) if trivial_effects else P
    m = Q.shape[0]

    rows, rhs = [], []
    for t in range(len(alpha)):
        for j in range(K):
            rows.append(np.kron(alpha[t], Q[:, j]))
            rhs.append(0.0)
    for x in range(delta):
        sel = np.zeros(n)
        sel[[x, delta + x]] = 1
        for j in range(K):
            rows.append(np.kron(sel, Q[:, j]))
            rhs.append(marg[j])
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1
        rows.append(np.kron(e, np.ones(m)))
        rhs.append(1.0)
    A_eq = np.array(rows)
    b_eq = np.array(rhs)
    diag = np.zeros((n, m))
    diag[np.arange(n), np.arange(n)] = 1
    diag = diag.ravel()
    c = -diag / n
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                  options=_HIGHS)
    if res.status != 0:
        raise NoSecondaryError(f"secondary LP failed: {res.message}")
    C = -res.fun
    u = res.x
    if tie_break:
        # among optimal maps prefer small weight on earlier entries
        w = np.linspace(1.0, 0.0, n * m, endpoint=False)
        res2 = linprog(w, A_eq=A_eq, b_eq=b_eq, A_ub=-diag[None, :] / n, b_ub=[-C],
                       bounds=(0, None), method="highs", options=_HIGHS)
        if res2.status == 0 and diag @ res2.x / n >= C - 1e-12:
            u = res2.x
    u = np.clip(u, 0, None).reshape(n, m)
    u[u < 1e-14] = 0.0
    u /= u.sum(axis=1, keepdims=True)
    return u, float(np.trace(u[:, :n]) / n)


def fit_secondary(p, identities_N, identities_M, expected_rank=4, tie_break=True,
                  trivial_effects=True):
    """Secondary maps ``(u, v)`` for primary correlations ``p``.

    Raises :class:`SpanError` when the data fail the span check and
    :class:`NoSecondaryError` when an LP is infeasible.
    """
    p = np.asarray(p, dtype=float)
    check_span(p, expected_rank)
    P = steering_matrix(p)
    u, C_N = fit_side(P, identities_N.coefficients, tie_break, trivial_effects)
    v, C_M = fit_side(P.T, identities_M.coefficients, tie_break, trivial_effects)
    smap = SecondaryMap(u, v, C_N, C_M)
    ps = apply_secondary(smap, p)
    res = identity_residuals(ps, identities_N, identities_M)
    return SecondaryMap(u, v, C_N, C_M, res)


def identity_map(nx, ny):
    return SecondaryMap(np.eye(2 * nx), np.eye(2 * ny), 1.0, 1.0)


def _augment(P, rows, cols):
    """Append the constant effects ``0`` and ``1`` to the rows and/or columns of ``P``."""
    nr, nc = P.shape
    row_marg = P.reshape(nr, 2, nc // 2).sum(axis=1).mean(axis=1)
    col_marg = P.reshape(2, nr // 2, nc).sum(axis=0).mean(axis=0)
    if rows:
        P = np.vstack([P, np.zeros(nc), col_marg])
    if cols:
        extra = np.zeros((P.shape[0], 2))
        extra[:nr, 1] = row_marg
        if rows:
            extra[-1, 1] = 1.0
        P = np.hstack([P, extra])
    return P


def apply_secondary(smap, p):
    """``p^s(ab|xy) = sum v[(b,y),(b',y')] u[(a,x),(a',x')] p(a'b'|x'y')``.

    Maps with two extra columns carry weights on the constant effects ``0``
    and ``1``, whose contractions with the data are ``0`` and the other
    party's marginals.
    """
    p = np.asarray(p, dtype=float)
    _, _, nx, ny = p.shape
    P = steering_matrix(p)
    rows = smap.u.shape[1] == P.shape[0] + 2
    cols = smap.v.shape[1] == P.shape[1] + 2
    return _from_matrix(smap.u @ _augment(P, rows, cols) @ smap.v.T, nx, ny)


def identity_residuals(ps, identities_N, identities_M):
    """Largest identity contraction of ``ps`` on each side."""
    P = steering_matrix(ps)
    rN = identities_N.coefficients @ P if len(identities_N) else np.zeros(1)
    rM = identities_M.coefficients @ P.T if len(identities_M) else np.zeros(1)
    return {"N": float(np.abs(rN).max()), "M": float(np.abs(rM).max())}


def secondary_to_json(smap):
    return json.dumps({
        "u": smap.u.tolist(), "v": smap.v.tolist(),
        "C_N": smap.C_N, "C_M": smap.C_M, "residuals": smap.residuals,
    }, indent=2)
