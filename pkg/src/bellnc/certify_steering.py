"""Sufficient-condition certification of unsteerability.

A two-qubit state is certified unsteerable from Alice to Bob when it
decomposes as

    rho = sum_i w_i rho_i + X,   w_i >= 0,  X >= 0,  X^{T_B} >= 0,

where each ``rho_i = (1 (x) L_i)(rho_iso^{base_p})`` is obtained from an
isotropic state known to be unsteerable (``base_p <= 1/2``) by a local
positive trace-preserving map ``L_i`` on Bob.  The PPT part is separable
for two qubits, hence unsteerable, and mixtures of unsteerable states are
unsteerable.

The SDP maximizes the smallest eigenvalue margin ``t`` of ``X`` and
``X^{T_B}``; the state is certified when the returned decomposition passes
a direct eigenvalue check.
"""
from dataclasses import dataclass, field
import json
import warnings

import cvxpy as cp
import numpy as np

from .quantum import isotropic, partial_transpose

__all__ = [
    "SteeringCertificate",
    "haar_unitary",
    "haar_unitaries",
    "certify_unsteerable",
    "certify_unsteerable_positive_map",
    "transpose_map",
    "depolarized_transpose",
    "unitary_map",
    "certification_curve",
    "certificate_to_json",
]

CERTIFIED = "certified-unsteerable"
NOT_CERTIFIED = "not-certified"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class SteeringCertificate:
    """Outcome of an unsteerability SDP.

    ``status`` is ``"certified-unsteerable"``, ``"not-certified"`` or
    ``"indeterminate"``.  ``margin`` is the optimal eigenvalue margin.
    """

    status: str
    weights: np.ndarray
    components: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    residual: float
    min_eig_X: float
    min_eig_XTB: float
    margin: float
    seed: object = None
    n: int = 0
    base_p: float = 0.5
    unitaries: np.ndarray = field(default=None, repr=False)
    message: str = ""

    @property
    def certified(self):
        return self.status == CERTIFIED


def haar_unitary(rng, dim=2):
    """Haar-random unitary: QR of a complex Gaussian, phases fixed by diag(R)."""
    Z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def haar_unitaries(n, seed, dim=2):
    """``n`` unitaries drawn in sequence; a shorter pool is a prefix of a longer one."""
    rng = np.random.default_rng(seed)
    return np.array([haar_unitary(rng, dim) for _ in range(n)]).reshape(n, dim, dim)


def _on_bob(rho, kraus_like):
    """Apply a qubit map ``X -> f(X)`` to Bob's side of a 4x4 operator."""
    R = rho.reshape(2, 2, 2, 2)
    out = np.zeros((2, 2, 2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            out[i, :, j, :] = kraus_like(R[i, :, j, :])
    return out.reshape(4, 4)


def unitary_map(U):
    return lambda X: U @ X @ U.conj().T


def transpose_map(X):
    return X.T


def depolarized_transpose(eta=2 / 3):
    """``X -> eta X^T + (1 - eta) Tr(X) 1/2``, positive and trace preserving."""
    return lambda X: eta * X.T + (1 - eta) * np.trace(X) * np.eye(2) / 2


def _solve(rho, comps):
    """Max-margin decomposition; returns ``(w, t)`` or ``None``."""
    emb = lambda H: np.block([[H.real, -H.imag], [H.imag, H.real]])
    r0 = emb(rho).ravel(order="F")
    r0T = emb(partial_transpose(rho)).ravel(order="F")
    eye = np.eye(8).ravel(order="F")
    t = cp.Variable()
    k = len(comps)
    S1 = cp.Variable((8, 8), PSD=True)
    S2 = cp.Variable((8, 8), PSD=True)
    if k:
        E = np.array([emb(c).ravel(order="F") for c in comps])
        ET = np.array([emb(partial_transpose(c)).ravel(order="F") for c in comps])
        w = cp.Variable(k, nonneg=True)
        e1 = r0 - w @ E - t * eye
        e2 = r0T - w @ ET - t * eye
    else:
        w = None
        e1 = r0 - t * eye
        e2 = r0T - t * eye
    cons = [cp.reshape(e1, (8, 8), order="F") == S1, cp.reshape(e2, (8, 8), order="F") == S2]
    prob = cp.Problem(cp.Maximize(t), cons)
    # large pools are nearly degenerate; retry with more regularization
    attempts = [(cp.CLARABEL, {}),
                (cp.CLARABEL, {"max_iter": 500, "static_regularization_constant": 1e-7}),
                (cp.SCS, {"eps": 1e-9, "max_iters": 200000})]
    for solver, opts in attempts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                prob.solve(solver=solver, **opts)
            except cp.error.SolverError:
                continue
        if prob.status in ("optimal", "optimal_inaccurate") and t.value is not None:
            break
    else:
        return None
    wv = np.clip(np.asarray(w.value), 0, None) if k else np.zeros(0)
    return wv, float(t.value)


def _certify(rho, comps, seed, n, base_p, unitaries, tol=1e-8):
    rho = np.asarray(rho, dtype=complex)
    comps = np.asarray(comps, dtype=complex).reshape(-1, 4, 4)
    sol = _solve(rho, comps)
    if sol is None:
        return SteeringCertificate(INDETERMINATE, np.zeros(len(comps)), comps,
                                   np.zeros((4, 4)), np.inf, -np.inf, -np.inf, -np.inf,
                                   seed, n, base_p, unitaries, "SDP solver failure")
    w, t = sol
    mix = np.einsum("i,ijk->jk", w, comps) if len(comps) else np.zeros((4, 4))
    X = rho - mix
    X = (X + X.conj().T) / 2
    resid = float(np.linalg.norm(mix + X - rho))
    e1 = float(np.linalg.eigvalsh(X).min())
    e2 = float(np.linalg.eigvalsh(partial_transpose(X)).min())
    ok = e1 >= -tol and e2 >= -tol and resid <= tol and np.all(w >= 0)
    status = CERTIFIED if ok else NOT_CERTIFIED
    return SteeringCertificate(status, w, comps, X, resid, e1, e2, t, seed, n, base_p,
                               unitaries, "verified decomposition" if ok else "margin negative")


def certify_unsteerable(rho, n_unitaries=500, base_p=0.5, seed=0):
    """Certify unsteerability with ``n`` Haar-rotated isotropic components."""
    if base_p > 0.5:
        raise ValueError("base_p must be <= 1/2")
    if n_unitaries < 0:
        raise ValueError("n_unitaries must be >= 0")
    Us = haar_unitaries(n_unitaries, seed)
    base = isotropic(base_p)
    comps = [_on_bob(base, unitary_map(U)) for U in Us]
    return _certify(rho, comps, seed, n_unitaries, base_p, Us)


def certify_unsteerable_positive_map(rho, n=500, maps=None, seed=0, base_p=0.5):
    """Variant with arbitrary positive trace-preserving maps on Bob.

    With ``maps=None`` the pool holds the identity, the same ``n`` Haar
    unitaries as :func:`certify_unsteerable` and each of them followed by a
    depolarized transpose (``eta = 2/3``, the largest value keeping the
    component PSD at ``base_p = 1/2``).  Components that fail to be PSD
    are dropped with a warning.
    """
    if base_p > 0.5:
        raise ValueError("base_p must be <= 1/2")
    Us = haar_unitaries(n, seed)
    if maps is None:
        dt = depolarized_transpose(2 / 3)
        maps = [lambda X: X] + [unitary_map(U) for U in Us]
        maps += [(lambda U: (lambda X: dt(U @ X @ U.conj().T)))(U) for U in Us]
    base = isotropic(base_p)
    comps = []
    dropped = 0
    for L in maps:
        c = _on_bob(base, L)
        c = (c + c.conj().T) / 2
        if np.linalg.eigvalsh(c).min() < -1e-12 or abs(np.trace(c).real - 1) > 1e-9:
            dropped += 1
            continue
        comps.append(c)
    if dropped:
        warnings.warn(f"dropped {dropped} map(s) giving non-PSD components")
    return _certify(rho, comps, seed, n, base_p, Us)


def certification_curve(rho, ns, seed=0, base_p=0.5):
    """Certification status for each pool size in ``ns`` (same seed prefix)."""
    return [(int(n), certify_unsteerable(rho, n, base_p, seed).status) for n in ns]


def certificate_to_json(cert):
    return json.dumps({
        "status": cert.status,
        "seed": cert.seed,
        "n": cert.n,
        "base_p": cert.base_p,
        "margin": round(cert.margin, 12),
        "residual": round(cert.residual, 15),
        "min_eig_X": round(cert.min_eig_X, 12),
        "min_eig_XTB": round(cert.min_eig_XTB, 12),
        "n_active": int(np.sum(cert.weights > 1e-9)),
        "weight_total": round(float(np.sum(cert.weights)), 12),
    }, indent=2)
