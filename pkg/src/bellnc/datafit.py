"""From raw counts to model-realizable probabilities.

Local operators are expanded in an orthonormal Hermitian basis
``B_0 = 1/sqrt(D), B_1, ..., B_{D^2-1}``.  A two-party model is then a
real matrix ``R`` (the state, ``rho = sum R_ij B_i (x) B_j``) and real
vectors ``n[a, x]``, ``m[b, y]`` (the effects), with

    p(ab|xy) = n[a, x] . R . m[b, y].

The see-saw alternates weighted least-squares updates of ``R``, ``m``
and ``n``.  Each block problem is a convex quadratic program; it is first
solved without the positivity constraints and only re-solved as a conic
program when that solution leaves the feasible set.
"""
from dataclasses import dataclass, field
import csv
import io
import json
import warnings

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize_scalar

from .quantum import isotropic

__all__ = [
    "MissingDataError",
    "FrequencyTensor",
    "QuantumModelFit",
    "read_counts_csv",
    "write_counts_csv",
    "counts_to_frequencies",
    "hermitian_basis",
    "operator_to_vector",
    "vector_to_operator",
    "model_probabilities",
    "chi_squared",
    "regularize",
    "apply_gauge",
    "tomography_fit",
    "fidelity",
    "nearest_isotropic",
    "fit_to_json",
]


class MissingDataError(ValueError):
    pass


# ------------------------------------------------------------ counts

def read_counts_csv(source, shape=None):
    """Read ``a,b,x,y,count[,config]`` rows into a ``(2, 2, nx, ny)`` array.

    Rows sharing ``(a, b, x, y)`` (e.g. several port configurations) are
    summed.  ``source`` is a path or a file-like object.
    """
    fh = open(source, newline="") if isinstance(source, str) else source
    try:
        rows = list(csv.DictReader(fh))
    finally:
        if isinstance(source, str):
            fh.close()
    idx = [(int(r["a"]), int(r["b"]), int(r["x"]), int(r["y"])) for r in rows]
    if shape is None:
        shape = (2, 2, max(i[2] for i in idx) + 1, max(i[3] for i in idx) + 1)
    counts = np.zeros(shape)
    for i, r in zip(idx, rows):
        counts[i] += float(r["count"])
    if np.all(counts == np.round(counts)):
        counts = counts.astype(np.int64)
    return counts


def write_counts_csv(counts, configs=None):
    """CSV text for a count tensor.

    ``configs``, if given, has shape ``(n_config, 2, 2, nx, ny)`` and is
    written with a ``config`` column instead of ``counts``.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fmt = lambda v: str(int(v)) if float(v).is_integer() else repr(float(v))
    if configs is None:
        w.writerow(["a", "b", "x", "y", "count"])
        for idx in np.ndindex(counts.shape):
            w.writerow(list(idx) + [fmt(counts[idx])])
    else:
        w.writerow(["a", "b", "x", "y", "count", "config"])
        for c in range(len(configs)):
            for idx in np.ndindex(configs[c].shape):
                w.writerow(list(idx) + [fmt(configs[c][idx]), c])
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class FrequencyTensor:
    """Relative frequencies ``f[a,b,x,y]`` with standard errors ``df``."""

    f: np.ndarray
    df: np.ndarray
    totals: np.ndarray

    @property
    def weights(self):
        return 1.0 / self.df ** 2


def counts_to_frequencies(counts):
    """Normalize counts per setting pair and attach Poisson standard errors.

    ``df = sqrt(f (1 - f) / N)``, floored at ``1 / (2 N)`` so that empty
    and saturated cells keep a finite weight.
    """
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=(0, 1))
    if np.any(totals <= 0):
        missing = [tuple(map(int, i)) for i in np.argwhere(totals <= 0)]
        raise MissingDataError(f"no counts for setting pairs {missing}")
    f = counts / totals
    df = np.sqrt(f * (1 - f) / totals)
    df = np.maximum(df, 1 / (2 * totals))
    return FrequencyTensor(f, df, totals)


# ------------------------------------------------------------ operator basis

def hermitian_basis(D):
    """Orthonormal Hermitian basis of D x D matrices, first element 1/sqrt(D)."""
    basis = [np.eye(D, dtype=complex) / np.sqrt(D)]
    for j in range(D):
        for k in range(j + 1, D):
            S = np.zeros((D, D), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            A = np.zeros((D, D), dtype=complex)
            A[j, k], A[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis += [S, A]
    for l in range(1, D):
        d = np.zeros(D)
        d[:l] = 1
        d[l] = -l
        basis.append(np.diag(d / np.sqrt(l * (l + 1))).astype(complex))
    B = np.array(basis)
    if D == 2:
        # the Pauli ordering x, y, z
        from .quantum import PAULI
        B = np.array([np.eye(2) / np.sqrt(2)] + [s / np.sqrt(2) for s in PAULI])
    return B


def operator_to_vector(X, basis):
    return np.einsum("kij,...ji->...k", basis, X).real


def vector_to_operator(v, basis):
    return np.einsum("...k,kij->...ij", v, basis)


def _real_embedding(H):
    """``[[Re H, -Im H], [Im H, Re H]]`` (PSD iff ``H`` is)."""
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


# ------------------------------------------------------------ model

def model_probabilities(R, n, m):
    """``p[a,b,x,y] = n[a,x] . R . m[b,y]``."""
    return np.einsum("axi,ij,byj->abxy", n, R, m)


def chi_squared(p, freq):
    return float(np.sum(((freq.f - p) / freq.df) ** 2))


@dataclass(frozen=True, eq=False)
class QuantumModelFit:
    """Result of :func:`regularize`.

    ``R``, ``n``, ``m`` are the basis coordinates of ``rho``, ``N``, ``M``.
    ``history`` lists chi^2 after every accepted sweep of the best run.
    """

    rho: np.ndarray
    N: np.ndarray
    M: np.ndarray
    p: np.ndarray
    chi2: float
    converged: bool
    iterations: int
    history: tuple
    mode: str
    R: np.ndarray = field(repr=False)
    n: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)
    restart: int = 0
    all_histories: tuple = field(default=(), repr=False)


class _BlockSolver:
    """Weighted least squares for one block, with a conic fallback.

    Minimizes ``|W (X z - y)|^2`` where ``z`` parametrizes an operator
    ``Z = Z0 + sum z_k G_k``.  Quantum constraints: ``Z >= 0`` and, for
    effects, ``1 - Z >= 0``.  GPT constraints: ``lo <= X z - y + f <= hi``
    in probability space.  Problems are cached per shape so repeated
    solves reuse the compiled DPP program.
    """

    def __init__(self):
        self._cache = {}

    def _quantum_problem(self, n_rows, gens, base, upper):
        key = ("q", n_rows, gens.shape, upper, base.tobytes())
        if key in self._cache:
            return self._cache[key]
        k = gens.shape[0]
        dim = gens.shape[1]
        z = cp.Variable(k)
        X = cp.Parameter((n_rows, k))
        y = cp.Parameter(n_rows)
        emb = np.array([_real_embedding(g).ravel(order="F") for g in gens])
        e0 = _real_embedding(base).ravel(order="F")
        expr = cp.reshape(e0 + z @ emb, (2 * dim, 2 * dim), order="F")
        S = cp.Variable((2 * dim, 2 * dim), PSD=True)
        cons = [S == expr]
        if upper:
            U = cp.Variable((2 * dim, 2 * dim), PSD=True)
            cons.append(U == np.eye(2 * dim) - expr)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(X @ z - y)), cons)
        self._cache[key] = (prob, z, X, y)
        return self._cache[key]

    def _gpt_problem(self, n_rows, k, n_pos):
        key = ("g", n_rows, k, n_pos)
        if key in self._cache:
            return self._cache[key]
        z = cp.Variable(k)
        X = cp.Parameter((n_rows, k))
        y = cp.Parameter(n_rows)
        P = cp.Parameter((n_pos, k))
        c = cp.Parameter(n_pos)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(X @ z - y)), [P @ z + c >= 0])
        self._cache[key] = (prob, z, X, y, P, c)
        return self._cache[key]

    def solve_quantum(self, X, y, gens, base, upper):
        z, *_ = np.linalg.lstsq(X, y, rcond=None)
        Z = base + np.einsum("k,kij->ij", z, gens)
        ev = np.linalg.eigvalsh(Z)
        if ev.min() >= 0 and (not upper or ev.max() <= 1):
            return z
        prob, zv, Xp, yp = self._quantum_problem(X.shape[0], gens, base, upper)
        Xp.value, yp.value = X, y
        if not _quiet_solve(prob):
            return None
        if zv.value is None:
            return None
        return np.asarray(zv.value)

    def solve_gpt(self, X, y, P, c):
        z, *_ = np.linalg.lstsq(X, y, rcond=None)
        if np.all(P @ z + c >= 0):
            return z
        prob, zv, Xp, yp, Pp, cp_ = self._gpt_problem(X.shape[0], X.shape[1], P.shape[0])
        Xp.value, yp.value, Pp.value, cp_.value = X, y, P, c
        if not _quiet_solve(prob):
            return None
        if zv.value is None:
            return None
        return np.asarray(zv.value)


def _quiet_solve(prob):
    """Solve with Clarabel; inaccurate solutions are screened by the caller's chi^2 check."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            return False
    return True


def _clip_state(rho):
    w, V = np.linalg.eigh((rho + rho.conj().T) / 2)
    w = np.clip(w, 0, None)
    rho = (V * w) @ V.conj().T
    return rho / np.trace(rho).real


def _clip_effect(E):
    w, V = np.linalg.eigh((E + E.conj().T) / 2)
    return (V * np.clip(w, 0, 1)) @ V.conj().T


class _SeeSaw:
    def __init__(self, freq, D, mode):
        self.freq = freq
        self.D = D
        self.mode = mode
        self.B = hermitian_basis(D)
        self.BB = np.array([np.kron(bi, bj) for bi in self.B for bj in self.B])
        self.sw = 1 / freq.df
        self.idvec = np.zeros(D * D)
        self.idvec[0] = np.sqrt(D)
        self.solver = _BlockSolver()

    # -- helpers
    def chi2(self, R, n, m):
        return chi_squared(model_probabilities(R, n, m), self.freq)

    def full_effects(self, v0):
        return np.stack([v0, self.idvec - v0])

    # -- blocks
    def update_state(self, R, n, m):
        D2 = self.D ** 2
        A = np.einsum("axi,byj->abxyij", n, m).reshape(-1, D2 * D2)
        f = self.freq.f.ravel()
        sw = self.sw.ravel()
        r00 = 1 / self.D
        y = sw * (f - A[:, 0] * r00)
        X = sw[:, None] * A[:, 1:]
        if self.mode == "gpt":
            P = A[:, 1:]
            c = A[:, 0] * r00
            z = self.solver.solve_gpt(X, y, P, c)
        else:
            base = self.BB[0] * r00
            z = self.solver.solve_quantum(X, y, self.BB[1:], base, upper=False)
        if z is None:
            return None
        Rn = np.concatenate([[r00], z]).reshape(D2, D2)
        if self.mode != "gpt":
            rho = _clip_state(vector_to_operator(Rn.ravel(), self.BB))
            Rn = operator_to_vector(rho, self.BB).reshape(D2, D2)
        return Rn

    def update_effects(self, R, n, m, side):
        """New outcome-0 vectors for one side (``side="M"`` updates ``m``)."""
        f, sw = self.freq.f, self.sw
        if side == "N":
            # p[a,b,x,y] = m[b,y] R^T n[a,x]; transpose into the M layout
            f, sw = f.transpose(1, 0, 3, 2), sw.transpose(1, 0, 3, 2)
            R, n, m = R.T, m, n
        g = np.einsum("axi,ij->axj", n, R)            # (2, nx, D2)
        new = m[0].copy()
        for yy in range(m.shape[1]):
            # b = 0: g.v ; b = 1: g.id - g.v
            G = g.reshape(-1, g.shape[-1])
            f0 = f[:, 0, :, yy].ravel()
            f1 = f[:, 1, :, yy].ravel()
            w0 = sw[:, 0, :, yy].ravel()
            w1 = sw[:, 1, :, yy].ravel()
            gid = G @ self.idvec
            X = np.vstack([w0[:, None] * G, -w1[:, None] * G])
            y = np.concatenate([w0 * f0, w1 * (f1 - gid)])
            if self.mode == "gpt":
                P = np.vstack([G, -G])
                c = np.concatenate([np.zeros(len(G)), gid])
                z = self.solver.solve_gpt(X, y, P, c)
            else:
                z = self.solver.solve_quantum(X, y, self.B, np.zeros_like(self.B[0]), upper=True)
                if z is not None:
                    E = _clip_effect(vector_to_operator(z, self.B))
                    z = operator_to_vector(E, self.B)
            if z is None:
                return None
            new[yy] = z
        return self.full_effects(new)

    def run(self, R, n, m, max_iters, tol):
        chi = self.chi2(R, n, m)
        history = [chi]
        converged = False
        it = 0
        for it in range(1, max_iters + 1):
            prev = chi
            for block in ("state", "M", "N"):
                if block == "state":
                    cand = self.update_state(R, n, m)
                    trial = (cand, n, m)
                elif block == "M":
                    cand = self.update_effects(R, n, m, "M")
                    trial = (R, n, cand)
                else:
                    cand = self.update_effects(R, n, m, "N")
                    trial = (R, cand, m)
                if cand is None:
                    continue
                c2 = self.chi2(*trial)
                if c2 <= chi:
                    R, n, m = trial
                    chi = c2
            history.append(chi)
            if prev - chi < tol:
                converged = True
                break
        return R, n, m, chi, converged, it, history


def _random_model(rng, D, nx, ny, B, BB):
    G = rng.normal(size=(D * D, D * D)) + 1j * rng.normal(size=(D * D, D * D))
    rho = G @ G.conj().T
    rho /= np.trace(rho).real
    R = operator_to_vector(rho, BB).reshape(D * D, D * D)

    def rand_effects(k):
        out = []
        for _ in range(k):
            v = rng.normal(size=D) + 1j * rng.normal(size=D)
            v /= np.linalg.norm(v)
            out.append(operator_to_vector(np.outer(v, v.conj()), B))
        return np.array(out)

    idvec = np.zeros(D * D)
    idvec[0] = np.sqrt(D)
    n0, m0 = rand_effects(nx), rand_effects(ny)
    return R, np.stack([n0, idvec - n0]), np.stack([m0, idvec - m0])


def _model_from_init(init, D, B, BB):
    if isinstance(init, QuantumModelFit):
        return init.R.copy(), init.n.copy(), init.m.copy()
    if len(init) == 2:
        N, M = init
        rho = np.eye(D * D, dtype=complex) / D ** 2
    else:
        rho, N, M = init
    R = operator_to_vector(np.asarray(rho), BB).reshape(D * D, D * D)
    n = operator_to_vector(np.asarray(N), B)
    m = operator_to_vector(np.asarray(M), B)
    return R, n, m


def regularize(freq, D=2, mode="quantum", init=None, restarts=10, max_iters=500,
               tol=1e-10, seed=0):
    """Weighted chi^2 see-saw fit of a two-party model to frequencies.

    Parameters
    ----------
    freq : FrequencyTensor
    D : int
        Local Hilbert-space dimension.
    mode : {"quantum", "gpt"}
        ``"quantum"`` keeps a density operator and POVMs; ``"gpt"`` only
        asks the predicted probabilities to be nonnegative.
    init : QuantumModelFit or tuple, optional
        ``(N, M)`` or ``(rho, N, M)`` used for the first start.  Further
        starts are random.
    restarts : int
        Total number of starts; the lowest chi^2 wins.
    """
    if mode not in ("quantum", "gpt"):
        raise ValueError(f"unknown mode {mode!r}")
    nx, ny = freq.f.shape[2:]
    ss = _SeeSaw(freq, D, mode)
    rng = np.random.default_rng(seed)
    best = None
    histories = []
    for r in range(max(1, restarts)):
        if r == 0 and init is not None:
            R, n, m = _model_from_init(init, D, ss.B, ss.BB)
        else:
            R, n, m = _random_model(rng, D, nx, ny, ss.B, ss.BB)
        out = ss.run(R, n, m, max_iters, tol)
        histories.append(tuple(out[-1]))
        if best is None or out[3] < best[0][3]:
            best = (out, r)
        if out[3] <= tol:
            break
    (R, n, m, chi, converged, it, history), r = best
    if not converged:
        warnings.warn("see-saw did not converge; returning best iterate")
    p = model_probabilities(R, n, m)
    rho = vector_to_operator(R.ravel(), ss.BB)
    N = vector_to_operator(n, ss.B)
    M = vector_to_operator(m, ss.B)
    return QuantumModelFit(rho, N, M, p, chi, converged, it, tuple(history), mode,
                           R, n, m, r, tuple(histories))


def apply_gauge(fit, A, B):
    """Gauge-transformed coordinates ``(R', n', m')``.

    ``n -> A n``, ``m -> B m``, ``R -> A^{-T} R B^{-1}``; the predicted
    probabilities are unchanged for any invertible ``A``, ``B``.
    """
    R = np.linalg.inv(A).T @ fit.R @ np.linalg.inv(B)
    n = np.einsum("ij,axj->axi", A, fit.n)
    m = np.einsum("ij,byj->byi", B, fit.m)
    return R, n, m


# ------------------------------------------------------------ tomography

def tomography_fit(f, N, M):
    """Least-squares two-qubit state from product-effect frequencies.

    Minimizes ``sum |f(ab|xy) - Tr[rho N_{a|x} (x) M_{b|y}]|^2`` over
    density operators.  Warns and returns the constrained pseudo-solution
    when the effects are not tomographically complete.
    """
    f = np.asarray(f.f if isinstance(f, FrequencyTensor) else f, dtype=float)
    D = N.shape[-1]
    B = hermitian_basis(D)
    BB = np.array([np.kron(bi, bj) for bi in B for bj in B])
    n = operator_to_vector(np.asarray(N), B)
    m = operator_to_vector(np.asarray(M), B)
    A = np.einsum("axi,byj->abxyij", n, m).reshape(-1, D ** 4)
    if np.linalg.matrix_rank(A, tol=1e-10) < D ** 4:
        warnings.warn("effects are not tomographically complete; pseudo-solution returned")
    r00 = 1 / D
    y = f.ravel() - A[:, 0] * r00
    X = A[:, 1:]
    z, *_ = np.linalg.lstsq(X, y, rcond=None)
    rho = vector_to_operator(np.concatenate([[r00], z]), BB)
    if np.linalg.eigvalsh(rho).min() >= 0:
        return rho
    solver = _BlockSolver()
    z = solver.solve_quantum(X, y, BB[1:], BB[0] * r00, upper=False)
    return _clip_state(vector_to_operator(np.concatenate([[r00], z]), BB))


def _psd_sqrt(X):
    w, V = np.linalg.eigh((X + X.conj().T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def fidelity(rho, sigma):
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    s = _psd_sqrt(rho)
    w = np.linalg.eigvalsh(s @ sigma @ s)
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)


def nearest_isotropic(rho):
    """Isotropic parameter ``p`` of maximal fidelity with ``rho``.

    The square-root fidelity is concave along the isotropic line, so a
    bounded scalar search finds the global optimum.
    """
    res = minimize_scalar(lambda p: -fidelity(isotropic(p), rho), bounds=(-1 / 3, 1),
                          method="bounded", options={"xatol": 1e-10})
    p = float(res.x)
    ends = [(-fidelity(isotropic(e), rho), e) for e in (-1 / 3, 1.0)]
    val, p_end = min(ends)
    if val < res.fun:
        p = p_end
    return p, fidelity(isotropic(p), rho)


def fit_to_json(fit):
    return json.dumps({
        "mode": fit.mode,
        "chi2": fit.chi2,
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "restart": int(fit.restart),
        "history": [float(h) for h in fit.history],
        "p": fit.p.tolist(),
        "rho": {"real": fit.rho.real.tolist(), "imag": fit.rho.imag.tolist()},
    }, indent=2)
