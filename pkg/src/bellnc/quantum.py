"""Two-qubit states, Bloch-vector effects, Born correlations and steering.

Correlation tensors are arrays ``p[a, b, x, y]`` of shape
``(2, 2, Delta_N, Delta_M)``.  Effect sets are arrays ``E[a, x]`` of
2x2 Hermitian matrices, shape ``(2, Delta, 2, 2)``.
"""
import json

import numpy as np

__all__ = [
    "I2", "SX", "SY", "SZ", "PAULI",
    "DomainError", "ValidationError",
    "effects", "effects_from_vectors", "isotropic", "bell_state", "phi_plus",
    "product_state", "born_correlations", "steer", "partial_transpose",
    "partial_trace", "validate_state", "validate_effects",
    "validate_correlations", "validate_assemblage", "chsh_shapes",
    "chsh_value", "isotropic_family", "isotropic_correlations_closed_form",
    "random_separable_state", "bloch_state", "operator_to_json", "operator_from_json",
]

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.array([SX, SY, SZ])


class DomainError(ValueError):
    pass


class ValidationError(ValueError):
    pass


def bloch_state(n, weight=1.0):
    """``weight * (1 + n.sigma) / 2``."""
    return weight * (I2 + np.einsum("i,ijk->jk", np.asarray(n, dtype=float), PAULI)) / 2


def effects_from_vectors(vectors):
    """Effects ``(1 + (-1)^a m_x.sigma)/2`` for outcome-0 vectors ``m_x``."""
    V = np.asarray(vectors, dtype=float)
    E0 = (I2 + np.einsum("xi,ijk->xjk", V, PAULI)) / 2
    return np.stack([E0, I2 - E0])


def effects(shape):
    """Projective effects of a :class:`~bellnc.geometry.MeasurementShape`."""
    return effects_from_vectors(shape.vectors)


def bell_state(name="phi+"):
    """Projector onto a Bell state (``phi+``, ``phi-``, ``psi+``, ``psi-``)."""
    s = 1 / np.sqrt(2)
    vecs = {
        "phi+": [s, 0, 0, s], "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0], "psi-": [0, s, -s, 0],
    }
    v = np.array(vecs[name], dtype=complex)
    return np.outer(v, v.conj())


def phi_plus():
    return bell_state("phi+")


def isotropic(p):
    """``p |Phi+><Phi+| + (1 - p) 1/4``, valid for ``-1/3 <= p <= 1``."""
    if p < -1 / 3 - 1e-12 or p > 1 + 1e-12:
        raise DomainError(f"isotropic parameter {p} outside [-1/3, 1]")
    return p * phi_plus() + (1 - p) * np.eye(4, dtype=complex) / 4


def product_state(sigma, tau):
    return np.kron(sigma, tau)


def partial_transpose(rho, side="B"):
    R = np.asarray(rho).reshape(2, 2, 2, 2)
    if side == "B":
        return R.transpose(0, 3, 2, 1).reshape(4, 4)
    return R.transpose(2, 1, 0, 3).reshape(4, 4)


def partial_trace(rho, keep="B"):
    R = np.asarray(rho).reshape(2, 2, 2, 2)
    if keep == "B":
        return np.einsum("ijik->jk", R)
    return np.einsum("ijkj->ik", R)


def born_correlations(rho, N, M):
    """``p(ab|xy) = Tr[rho N_{a|x} (x) M_{b|y}]``."""
    R = np.asarray(rho).reshape(2, 2, 2, 2)
    # R[i, k, j, l] = <ik|rho|jl>; Tr[rho (N (x) M)] = sum R[i,k,j,l] N[j,i] M[l,k]
    p = np.einsum("ikjl,axji,bylk->abxy", R, N, M)
    return p.real


def steer(rho, N, side="A"):
    """Assemblage created on the other wing by measuring ``N`` on ``side``.

    ``side="A"``: ``Tr_A[(N_{a|x} (x) 1) rho]``; ``side="B"``:
    ``Tr_B[(1 (x) N_{a|x}) rho]``.  Returns shape ``(2, Delta, 2, 2)``.
    """
    R = np.asarray(rho).reshape(2, 2, 2, 2)
    if side == "A":
        return np.einsum("axji,ikjl->axkl", N, R)
    return np.einsum("axlk,ikjl->axij", N, R)


# ------------------------------------------------------------ validation

def validate_state(rho, tol=1e-10):
    rho = np.asarray(rho)
    if np.abs(rho - rho.conj().T).max() > 1e-12:
        raise ValidationError("state is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol:
        raise ValidationError("state trace is not 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValidationError("state is not positive semidefinite")
    return True


def validate_effects(E, tol=1e-10):
    E = np.asarray(E)
    for a in range(E.shape[0]):
        for x in range(E.shape[1]):
            ev = np.linalg.eigvalsh(E[a, x])
            if ev.min() < -tol or ev.max() > 1 + tol:
                raise ValidationError(f"effect ({a},{x}) not between 0 and 1")
    if np.abs(E.sum(axis=0) - I2).max() > tol:
        raise ValidationError("effects of a setting do not sum to identity")
    return True


def validate_correlations(p, tol=1e-10):
    p = np.asarray(p, dtype=float)
    if p.ndim != 4 or p.shape[:2] != (2, 2):
        raise ValidationError("correlation tensor must have shape (2, 2, nx, ny)")
    if p.min() < -tol:
        raise ValidationError("negative probability")
    if np.abs(p.sum(axis=(0, 1)) - 1).max() > tol:
        raise ValidationError("not normalized per (x, y)")
    pa = p.sum(axis=1)  # (a, x, y)
    pb = p.sum(axis=0)  # (b, x, y)
    if np.abs(pa - pa[:, :, :1]).max() > tol or np.abs(pb - pb[:, :1, :]).max() > tol:
        raise ValidationError("signaling correlations")
    return True


def validate_assemblage(sigma, tol=1e-10):
    sigma = np.asarray(sigma)
    for a in range(sigma.shape[0]):
        for x in range(sigma.shape[1]):
            if np.linalg.eigvalsh(sigma[a, x]).min() < -tol:
                raise ValidationError("assemblage member is not PSD")
    tot = sigma.sum(axis=0)
    if np.abs(tot - tot[:1]).max() > tol:
        raise ValidationError("assemblage is signaling")
    if abs(np.trace(tot[0]).real - 1) > tol:
        raise ValidationError("assemblage trace is not 1")
    return True


# ------------------------------------------------------------ families

def chsh_shapes():
    """Settings reaching Tsirelson's bound on ``Phi+``.

    Alice measures along z and x; Bob along (z + x)/sqrt2 and (z - x)/sqrt2.
    """
    from .geometry import make_shape

    s = 1 / np.sqrt(2)
    alice = make_shape([[0, 0, 1.0], [1.0, 0, 0]], name="chsh-alice")
    bob = make_shape([[s, 0, s], [-s, 0, s]], name="chsh-bob")
    return alice, bob


def chsh_value(p):
    E = np.einsum("abxy,a,b->xy", p, [1, -1], [1, -1])
    return E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1]


def isotropic_family(shape_N, shape_M):
    """``p -> born_correlations(isotropic(p), effects(N), effects(M))``."""
    N, M = effects(shape_N), effects(shape_M)
    return lambda t: born_correlations(isotropic(t), N, M)


def isotropic_correlations_closed_form(p, vectors_N, vectors_M):
    """``[1 + (-1)^(a+b) p (m_x n_x - m_y n_y + m_z n_z)] / 4``."""
    m = np.asarray(vectors_N, dtype=float) * np.array([1, -1, 1])
    n = np.asarray(vectors_M, dtype=float)
    c = m @ n.T
    sign = np.array([[1, -1], [-1, 1]])
    return (1 + sign[:, :, None, None] * p * c[None, None]) / 4


def _random_bloch(rng, pure=False):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if not pure:
        v *= rng.uniform() ** (1 / 3)
    return v


def random_separable_state(rng, n_terms=4):
    """Random convex mixture of product qubit states."""
    w = rng.dirichlet(np.ones(n_terms))
    rho = np.zeros((4, 4), dtype=complex)
    for wi in w:
        rho += wi * np.kron(bloch_state(_random_bloch(rng)), bloch_state(_random_bloch(rng)))
    return rho


# ------------------------------------------------------------ JSON

def operator_to_json(op):
    op = np.asarray(op)
    return json.dumps({"real": op.real.tolist(), "imag": op.imag.tolist()})


def operator_from_json(text):
    d = json.loads(text)
    return np.array(d["real"]) + 1j * np.array(d["imag"])
