"""Measurement shapes on the Bloch sphere and their operational identities.

A shape is an ordered list of binary-outcome settings.  Setting ``x`` is
described by the Bloch vector ``m_x`` of outcome 0; outcome 1 points along
``-m_x``.  The corresponding effects are ``E_{a|x} = (1 + (-1)^a m_x.sigma)/2``.

Columns of every per-party object are indexed by ``(a, x)`` with the
flat index ``a * n_settings + x``.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import json

import numpy as np
from scipy.linalg import null_space, qr

from . import _rational as rat

__all__ = [
    "PHI",
    "SHAPE_NAMES",
    "InvalidShapeError",
    "MeasurementShape",
    "OperationalIdentitySet",
    "make_shape",
    "derive_identities",
    "effect_matrix",
    "shape_to_json",
    "shape_from_json",
    "identities_to_json",
    "identities_from_json",
]

PHI = (1 + np.sqrt(5)) / 2
SHAPE_NAMES = ("square", "octahedron", "cube", "icosahedron", "dodecahedron")

_TOL = 1e-12


class InvalidShapeError(ValueError):
    pass


def _rational_directions(vectors):
    """Common-scale rational directions of ``vectors`` or ``None``.

    Identity coefficients are unchanged when all Bloch vectors are scaled by
    a common factor, so a shape like the cube (entries +-1/sqrt(3)) is
    handled exactly through its integer directions.
    """
    flat = np.abs(vectors[np.abs(vectors) > 1e-9])
    if not flat.size:
        return None
    scale = flat.min()
    fr = rat.rationalize(vectors / scale, max_den=1000, tol=1e-9)
    if fr is None:
        return None
    n = vectors.shape[1]
    return tuple(tuple(fr[i * n:(i + 1) * n]) for i in range(len(vectors)))


@dataclass(frozen=True, eq=False)
class MeasurementShape:
    """Binary-outcome settings given by outcome-0 Bloch vectors.

    Attributes
    ----------
    vectors : ndarray, shape (n_settings, 3)
        Unit Bloch vector of outcome 0 for each setting.
    name : str or None
    rational : tuple or None
        Integer-proportional directions, present when the shape admits the
        exact arithmetic backend.
    """

    vectors: np.ndarray
    name: str = None
    rational: tuple = field(default=None, repr=False)

    @property
    def n_settings(self):
        return len(self.vectors)

    @property
    def n_outcomes(self):
        return 2

    @property
    def is_rational(self):
        return self.rational is not None

    @property
    def settings(self):
        """Antipodal pairs ``[(m_x, -m_x), ...]``."""
        return [(v.copy(), -v) for v in self.vectors]

    def bloch(self, a, x):
        return (-1) ** a * self.vectors[x]

    def column_labels(self):
        return [f"{a},{x}" for a in range(2) for x in range(self.n_settings)]

    def with_vectors(self, vectors, name=None):
        """Same setting layout with perturbed vectors (no rational backend)."""
        v = np.asarray(vectors, dtype=float)
        return MeasurementShape(v, name if name is not None else self.name, None)


def _named_vectors(name):
    if name == "square":
        return np.array([[1.0, 0, 0], [0, 0, 1.0]])
    if name == "octahedron":
        return np.eye(3)
    if name == "cube":
        return np.array([[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1]]) / np.sqrt(3)
    if name == "icosahedron":
        v = np.array([
            [0, 1, PHI], [0, 1, -PHI], [1, PHI, 0],
            [1, -PHI, 0], [PHI, 0, 1], [PHI, 0, -1],
        ])
        return v / np.sqrt(1 + PHI ** 2)
    if name == "dodecahedron":
        ip = 1 / PHI
        v = np.array([
            [-1, -1, -1], [-PHI, ip, 0], [-PHI, -ip, 0], [-1, -1, 1],
            [0, -PHI, ip], [1, -1, -1], [0, -PHI, -ip], [-1, 1, -1],
            [-ip, 0, -PHI], [ip, 0, -PHI],
        ])
        return v / np.sqrt(3)
    raise InvalidShapeError(f"unknown shape {name!r}; expected one of {SHAPE_NAMES}")


def _validate(vectors):
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(np.abs(norms - 1) > _TOL * 10):
        raise InvalidShapeError("Bloch vectors must have unit norm")
    for i in range(len(vectors)):
        for j in range(i):
            if (np.abs(vectors[i] - vectors[j]).max() < 1e-9
                    or np.abs(vectors[i] + vectors[j]).max() < 1e-9):
                raise InvalidShapeError(f"settings {j} and {i} share the same axis")


def make_shape(spec, name=None):
    """Build a measurement shape.

    Parameters
    ----------
    spec : str or sequence
        A named shape (``square``, ``octahedron``, ``cube``,
        ``icosahedron``, ``dodecahedron``), a list of antipodal pairs
        ``[[m, -m], ...]`` or a plain ``(n, 3)`` list of outcome-0 vectors.
    name : str, optional
        Label for custom shapes.
    """
    if isinstance(spec, str):
        vectors = _named_vectors(spec)
        name = spec
    else:
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 3:
            if arr.shape[1:] != (2, 3):
                raise InvalidShapeError("pairs must have shape (n, 2, 3)")
            if np.abs(arr[:, 0] + arr[:, 1]).max() > _TOL * 10:
                raise InvalidShapeError("outcome vectors of a setting must be antipodal")
            vectors = arr[:, 0]
        elif arr.ndim == 2 and arr.shape[1] == 3:
            vectors = arr
        else:
            raise InvalidShapeError("expected a list of 3-vectors or antipodal pairs")
        if len(vectors) == 0:
            raise InvalidShapeError("a shape needs at least one setting")
    vectors = np.array(vectors, dtype=float)
    _validate(vectors)
    return MeasurementShape(vectors, name, _rational_directions(vectors))


def effect_matrix(shape, exact=False):
    """Effects ``E_{a|x}`` as columns in the basis {1, sx, sy, sz}/sqrt(2).

    With ``exact=True`` the Bloch parts are the rational directions (a
    common rescaling which leaves the null space unchanged).
    """
    n = shape.n_settings
    if exact:
        if not shape.is_rational:
            raise ValueError("shape has no rational representation")
        cols = []
        for a in range(2):
            for x in range(n):
                s = 1 - 2 * a
                cols.append([Fraction(1)] + [s * v for v in shape.rational[x]])
        return [list(r) for r in zip(*cols)]
    signs = np.repeat([1.0, -1.0], n)
    bloch = np.vstack([shape.vectors, shape.vectors]) * signs[:, None]
    return np.vstack([np.ones(2 * n), bloch.T]) / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class OperationalIdentitySet:
    """Minimal generating set of operational identities of one shape.

    Attributes
    ----------
    coefficients : ndarray, shape (n_rows, 2 * n_settings)
        Row ``t`` holds ``alpha^{(t)}_{a,x}`` at column ``a * n + x``.
    kinds : tuple of str
        ``"trivial"`` or ``"nontrivial"`` per row.
    exact : tuple or None
        Fraction rows when derived with the rational backend.
    """

    coefficients: np.ndarray
    kinds: tuple
    n_settings: int
    exact: tuple = field(default=None, repr=False)

    def __len__(self):
        return len(self.kinds)

    @property
    def n_nontrivial(self):
        return sum(k == "nontrivial" for k in self.kinds)

    @property
    def n_trivial(self):
        return sum(k == "trivial" for k in self.kinds)

    def nontrivial(self):
        return self.coefficients[[k == "nontrivial" for k in self.kinds]]

    def as_tensors(self):
        """Rows reshaped to ``(n_rows, 2, n_settings)``."""
        return self.coefficients.reshape(len(self), 2, self.n_settings)

    def residual(self, shape):
        """Largest entry of the operators ``sum alpha E`` over all rows."""
        if not len(self):
            return 0.0
        return float(np.abs(self.coefficients @ effect_matrix(shape).T).max())


def _trivial_rows(n):
    rows = []
    for x in range(1, n):
        r = [0] * (2 * n)
        r[0] += 1
        r[n] += 1
        r[x] -= 1
        r[n + x] -= 1
        rows.append(r)
    return rows


def _reduced_columns(n):
    # identities modulo the trivial ones can be chosen to vanish on (1, x>0)
    return list(range(n)) + [n]


def derive_identities(shape, exact=None):
    """Minimal generating set of operational identities of ``shape``.

    The trivial rows ``E_{0|0} + E_{1|0} - E_{0|x} - E_{1|x}`` come first.
    The nontrivial rows span the identities supported on columns
    ``(0, x)`` and ``(1, 0)``, which together with the trivial rows
    generate the whole null space of the effect matrix.  They are given in
    reduced row echelon form (integer-scaled in exact mode).
    """
    if exact is None:
        exact = shape.is_rational
    n = shape.n_settings
    cols = _reduced_columns(n)
    trivial = _trivial_rows(n)
    if exact:
        E = effect_matrix(shape, exact=True)
        sub = [[row[c] for c in cols] for row in E]
        ns = rat.nullspace(sub, len(cols))
        nontrivial = []
        for v in ns:
            full = [Fraction(0)] * (2 * n)
            for c, val in zip(cols, v):
                full[c] = val
            nontrivial.append([Fraction(i) for i in rat.integer_normalize(full)])
        # present RREF-like rows with positive leading coefficient
        exact_rows = [[Fraction(v) for v in r] for r in trivial] + nontrivial
        coeffs = np.array([[float(v) for v in r] for r in exact_rows]).reshape(-1, 2 * n)
        kinds = ("trivial",) * len(trivial) + ("nontrivial",) * len(nontrivial)
        return OperationalIdentitySet(coeffs, kinds, n, tuple(tuple(r) for r in exact_rows))

    E = effect_matrix(shape)
    N = null_space(E[:, cols], rcond=1e-10).T
    if len(N):
        # canonical reduced form: identity block on pivot columns
        _, _, piv = qr(N, pivoting=True)
        piv = np.sort(piv[: len(N)])
        N = np.linalg.solve(N[:, piv], N)
        N[np.abs(N) < 1e-13] = 0.0
    full = np.zeros((len(N), 2 * n))
    full[:, cols] = N
    coeffs = np.vstack([np.array(trivial, dtype=float).reshape(-1, 2 * n), full])
    kinds = ("trivial",) * len(trivial) + ("nontrivial",) * len(N)
    return OperationalIdentitySet(coeffs, kinds, n, None)


# ---------------------------------------------------------------- JSON IO

def shape_to_json(shape):
    return json.dumps({
        "name": shape.name,
        "settings": [[list(map(float, v)), list(map(float, -v))] for v in shape.vectors],
    }, indent=2)


def shape_from_json(text):
    data = json.loads(text)
    name = data.get("name")
    if name in SHAPE_NAMES and "settings" not in data:
        return make_shape(name)
    return make_shape(data["settings"], name=name)


def identities_to_json(ids):
    n = ids.n_settings
    rows = []
    for t, kind in enumerate(ids.kinds):
        src = ids.exact[t] if ids.exact is not None else ids.coefficients[t]
        coeffs = {}
        for a in range(2):
            for x in range(n):
                v = src[a * n + x]
                if v != 0:
                    coeffs[f"{a},{x}"] = str(v) if isinstance(v, Fraction) else float(v)
        rows.append({"coeffs": coeffs, "kind": kind})
    return json.dumps({"n_settings": n, "rows": rows}, indent=2)


def identities_from_json(text, n_settings=None):
    data = json.loads(text)
    n = data.get("n_settings", n_settings)
    if n is None:
        raise ValueError("n_settings missing")
    coeffs = np.zeros((len(data["rows"]), 2 * n))
    exact_rows, all_exact = [], True
    for t, row in enumerate(data["rows"]):
        er = [Fraction(0)] * (2 * n)
        for key, val in row["coeffs"].items():
            a, x = map(int, key.split(","))
            if isinstance(val, str):
                er[a * n + x] = Fraction(val)
            else:
                all_exact = False
            coeffs[t, a * n + x] = float(Fraction(val)) if isinstance(val, str) else val
        exact_rows.append(tuple(er))
    kinds = tuple(r["kind"] for r in data["rows"])
    return OperationalIdentitySet(coeffs, kinds, n, tuple(exact_rows) if all_exact else None)
