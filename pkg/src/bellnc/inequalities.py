"""Noncontextuality inequalities: facets, membership LPs, orbits, thresholds.

Inequalities are stored in the canonical form ``sum s[a,b,x,y] p(ab|xy) >= 0``.
For normalized correlations any constant can be absorbed into the
coefficients through ``sum_ab p(ab|xy) = 1``, so two coefficient tensors
may describe the same inequality.  Comparisons therefore go through the
*signature* of an inequality: its value on every column of the product
vertex matrix, scaled to coprime integers (exact) or unit max-norm (float).
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
import hashlib
import json
import re

import numpy as np
from scipy.optimize import bisect, linprog

from . import _rational as rat
from . import ddm
from .geometry import PHI, effect_matrix

__all__ = [
    "GoldenRational",
    "Inequality",
    "MembershipResult",
    "UnsupportedModeError",
    "ShapeMismatchError",
    "membership",
    "enumerate_facets",
    "signature",
    "relabeling_group",
    "act",
    "classify_orbits",
    "evaluate",
    "threshold",
    "chsh_inequality",
    "ico_dodeca_inequality",
    "oct_cube_inequalities",
    "inequality_to_json",
    "inequality_from_json",
    "inequalities_to_json",
    "inequalities_from_json",
]


class UnsupportedModeError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


# ------------------------------------------------------------ Q[phi] ring

@dataclass(frozen=True)
class GoldenRational:
    """Exact element ``a + b*phi`` of Q[phi], phi = (1 + sqrt 5)/2."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "b", Fraction(self.b))

    @staticmethod
    def _coerce(o):
        if isinstance(o, GoldenRational):
            return o
        if isinstance(o, (int, Fraction)):
            return GoldenRational(o, 0)
        return NotImplemented

    def __add__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return o
        return GoldenRational(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return GoldenRational(-self.a, -self.b)

    def __sub__(self, o):
        return self + (-self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return o
        # phi^2 = phi + 1
        bb = self.b * o.b
        return GoldenRational(self.a * o.a + bb, self.a * o.b + self.b * o.a + bb)

    __rmul__ = __mul__

    def conjugate(self):
        # phi -> 1 - phi
        return GoldenRational(self.a + self.b, -self.b)

    def norm(self):
        return self.a * self.a + self.a * self.b - self.b * self.b

    def inverse(self):
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("zero in Q[phi]")
        c = self.conjugate()
        return GoldenRational(c.a / n, c.b / n)

    def __truediv__(self, o):
        return self * self._coerce(o).inverse()

    def __float__(self):
        return float(self.a) + float(self.b) * float(PHI)

    def __bool__(self):
        return bool(self.a or self.b)

    def __str__(self):
        return f"{self.a}+{self.b}phi"

    @classmethod
    def parse(cls, text):
        m = re.fullmatch(r"\s*([-+0-9/]+)\s*\+\s*([-+0-9/]+)\s*phi\s*", text)
        if not m:
            raise ValueError(f"not a Q[phi] literal: {text!r}")
        return cls(Fraction(m.group(1)), Fraction(m.group(2)))


GR_PHI = GoldenRational(0, 1)


# ------------------------------------------------------------ inequality

@dataclass(frozen=True, eq=False)
class Inequality:
    """``sum s[a,b,x,y] p(ab|xy) - bound >= 0``.

    Attributes
    ----------
    coeffs : ndarray, shape (2, 2, Delta_N, Delta_M)
        Float coefficients.
    exact : ndarray of object or None
        Fraction or :class:`GoldenRational` coefficients when known exactly.
    kind : str
        ``"facet"``, ``"positivity"``, ``"valid"`` or ``"certificate"``.
    """

    coeffs: np.ndarray
    bound: float = 0.0
    label: str = ""
    orbit_id: int = None
    kind: str = "valid"
    exact: np.ndarray = field(default=None, repr=False)

    @property
    def tensor_shape(self):
        return self.coeffs.shape

    @property
    def vector(self):
        return self.coeffs.ravel()

    def terms(self):
        """Nonzero coefficients as ``{(a,b,x,y): value}``."""
        src = self.exact if self.exact is not None else self.coeffs
        return {idx: src[idx] for idx in np.ndindex(self.coeffs.shape) if src[idx] != 0}

    def with_coeffs(self, coeffs, exact=None):
        return replace(self, coeffs=np.asarray(coeffs, dtype=float), exact=exact)


def _from_terms(terms, shape, label, kind="valid"):
    exact = np.full(shape, Fraction(0), dtype=object)
    for idx, c in terms.items():
        exact[idx] = exact[idx] + c
    coeffs = np.vectorize(float, otypes=[float])(exact)
    return Inequality(coeffs, 0.0, label, None, kind, exact)


def evaluate(ineq, p):
    """Value ``sum s.p - bound`` of ``ineq`` on a correlation tensor ``p``."""
    p = np.asarray(p, dtype=float)
    if p.shape != ineq.coeffs.shape:
        if p.size == ineq.coeffs.size and p.ndim == 1:
            p = p.reshape(ineq.coeffs.shape)
        else:
            raise ShapeMismatchError(
                f"inequality indexes {ineq.coeffs.shape}, tensor has {p.shape}")
    return float(np.sum(ineq.coeffs * p) - ineq.bound)


def signature(ineq, T):
    """Normalized values of ``ineq`` on the columns of ``T``."""
    if T.is_exact and ineq.exact is not None and all(
            isinstance(c, (int, Fraction)) for c in ineq.exact.ravel()):
        s = rat.integer_normalize(list(ineq.exact.ravel()) + [-Fraction(ineq.bound)])
        den, M = T.integer_matrix
        vals = M.T @ np.array(s[:-1], dtype=np.int64) + s[-1] * den
        g = np.gcd.reduce(np.abs(vals))
        return tuple((vals // g).tolist()) if g else tuple(vals.tolist())
    vals = T.matrix.T @ ineq.vector - ineq.bound
    scale = np.abs(vals).max()
    if scale == 0:
        return tuple(np.zeros(len(vals)))
    return tuple(np.round(vals / scale, 9) + 0.0)


# ------------------------------------------------------------ facets

def _absorb_constant(b, pivots, c, d, n_y):
    """Coefficient vector equal to ``b + c . p[pivots]`` on normalized ``p``."""
    s = [Fraction(0)] * d
    for j, v in zip(pivots, c):
        s[j] += v
    # b * sum_{a,b} p(ab|00) = b for normalized correlations
    n_x = d // (4 * n_y)
    for a in range(2):
        for bb in range(2):
            s[((a * 2 + bb) * n_x) * n_y] += b
    return rat.integer_normalize(s)


def enumerate_facets(T):
    """All facets of ``conv(columns of T)`` within its affine hull.

    Requires the exact backend.  Positivity facets (equivalent to some
    ``p(ab|xy) >= 0``) are returned with that single coefficient and
    ``kind="positivity"``; all others get ``kind="facet"``.  The list is
    sorted: nontrivial facets first, each group by signature.
    """
    if not T.is_exact:
        raise UnsupportedModeError("facet enumeration requires exact vertices")
    d = T.d
    raw, pivots = ddm.hull_facets(T.exact, exact=True)
    # signatures of the positivity inequalities, one per distinct cell
    cell_sig = {}
    for r in range(d):
        sig = tuple(rat.integer_normalize([col[r] for col in T.exact]))
        if any(sig):
            cell_sig.setdefault(sig, r)

    out = []
    for b, c in raw:
        s = _absorb_constant(Fraction(b), pivots, [Fraction(v) for v in c], d, T.n_y)
        vals = [sum(si * ti for si, ti in zip(s, col) if si) for col in T.exact]
        sig = tuple(rat.integer_normalize(vals))
        if sig in cell_sig:
            s = [0] * d
            s[cell_sig[sig]] = 1
            kind = "positivity"
        else:
            kind = "facet"
        exact = np.array([Fraction(v) for v in s], dtype=object).reshape(T.tensor_shape)
        coeffs = np.array(s, dtype=float).reshape(T.tensor_shape)
        out.append((kind != "facet", sig, Inequality(coeffs, 0.0, "", None, kind, exact)))
    out.sort(key=lambda t: (t[0], t[1]))
    return [replace(ineq, label=f"{ineq.kind}-{i}") for i, (_, _, ineq) in enumerate(out)]


# ------------------------------------------------------------ symmetry

def relabeling_group(shape, tol=1e-9):
    """Relabelings of the ``(a, x)`` columns induced by linear symmetries.

    A permutation ``g`` of the 2*Delta effects belongs to the group when
    some invertible linear map on operator space sends ``E_i`` to
    ``E_{g(i)}`` for all ``i``.  Such maps preserve every operational
    identity, so they act on assignment polytopes and facet lists.  They
    include setting permutations from rotations/reflections of the shape
    and outcome flips paired with the antipodal setting.

    Returns an int array of shape (group_order, 2*Delta) with
    ``g[i]`` the image column of column ``i``; the identity comes first.
    """
    C = effect_matrix(shape)
    n = C.shape[1]
    basis = []
    for j in range(n):
        if np.linalg.matrix_rank(C[:, basis + [j]], tol=tol) == len(basis) + 1:
            basis.append(j)
    lam, *_ = np.linalg.lstsq(C[:, basis], C, rcond=None)
    perms = []
    for img in product(range(n), repeat=len(basis)):
        if len(set(img)) < len(img):
            continue
        images = C[:, list(img)] @ lam
        diff = np.abs(images[:, :, None] - C[:, None, :]).max(axis=0)
        match = diff < 1e-7
        if not np.all(match.sum(axis=1) == 1):
            continue
        g = match.argmax(axis=1)
        if len(set(g.tolist())) == n:
            perms.append(g)
    perms.sort(key=lambda g: (not np.array_equal(g, np.arange(n)), tuple(g)))
    return np.array(perms, dtype=int)


def act(coeffs, gA, gB):
    """Image of a coefficient tensor under column relabelings ``(gA, gB)``."""
    S = np.asarray(coeffs)
    _, _, nx, ny = S.shape
    M = S.transpose(0, 2, 1, 3).reshape(2 * nx, 2 * ny)
    out = np.empty_like(M)
    out[np.ix_(gA, gB)] = M
    return out.reshape(2, nx, 2, ny).transpose(0, 2, 1, 3)


def _apply(ineq, gA, gB):
    exact = act(ineq.exact, gA, gB) if ineq.exact is not None else None
    return replace(ineq, coeffs=act(ineq.coeffs, gA, gB), exact=exact)


def classify_orbits(facets, shape_N, shape_M, T=None):
    """Partition ``facets`` into orbits of the relabeling group.

    The group is the product of :func:`relabeling_group` of each side.
    Returns ``(orbits, labeled)`` where ``orbits`` is a list of index lists
    sorted by size then first index, and ``labeled`` repeats ``facets``
    with ``orbit_id`` set.
    """
    if not facets:
        return [], []
    if T is None:
        from .polytopes import assignment_vertices, product_vertices
        T = product_vertices(assignment_vertices(shape_N), assignment_vertices(shape_M))
    GA = relabeling_group(shape_N)
    GB = relabeling_group(shape_M)
    idA = np.arange(GA.shape[1])
    idB = np.arange(GB.shape[1])
    gens = [(g, idB) for g in GA[1:]] + [(idA, g) for g in GB[1:]]

    key = {}
    sigs = [signature(f, T) for f in facets]
    for i, s in enumerate(sigs):
        key.setdefault(s, i)
    parent = list(range(len(facets)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, f in enumerate(facets):
        for gA, gB in gens:
            j = key.get(signature(_apply(f, gA, gB), T))
            if j is None:
                raise ValueError("facet list is not closed under relabelings")
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(len(facets)):
        groups.setdefault(find(i), []).append(i)
    orbits = sorted(groups.values(), key=lambda o: (len(o), o[0]))
    labeled = list(facets)
    for oid, orb in enumerate(orbits):
        for i in orb:
            labeled[i] = replace(facets[i], orbit_id=oid)
    return orbits, labeled


# ------------------------------------------------------------ membership

@dataclass(frozen=True, eq=False)
class MembershipResult:
    """Outcome of :func:`membership`.

    ``status`` is ``"inside"``, ``"outside"`` or ``"indeterminate"``.
    """

    status: str
    weights: np.ndarray = None
    certificate: Inequality = None
    value: float = None
    message: str = ""
    input_hash: str = ""

    @property
    def inside(self):
        return self.status == "inside"

    @property
    def outside(self):
        return self.status == "outside"


def tensor_hash(p):
    return hashlib.sha256(np.ascontiguousarray(np.asarray(p, dtype=float)).tobytes()).hexdigest()[:16]


def check_certificate(s, T, p, tol=1e-9):
    """Independent re-check of a separating hyperplane."""
    s = np.ravel(s)
    vals = T.matrix.T @ s
    return bool(vals.min() >= -tol and vals.max() <= 1 + tol and s @ np.ravel(p) < -tol)


def membership(p, T, tol=1e-9):
    """Decide whether ``p`` lies in the convex hull of the columns of ``T``.

    The dual LP ``min s.p  s.t.  0 <= s.T_k <= 1`` is solved first; a
    value below ``-tol`` gives a separating inequality, which is re-checked
    directly before being reported.  Otherwise the primal
    ``T x = p, x >= 0, sum x = 1`` is solved for mixture weights.
    """
    p = np.asarray(p, dtype=float)
    if p.size != T.d:
        raise ShapeMismatchError(f"tensor has {p.size} cells, T has {T.d} rows")
    pv = p.ravel()
    M = T.matrix
    h = tensor_hash(p)

    # component of p orthogonal to the affine hull makes the dual unbounded
    c0 = M[:, 0]
    D = M - c0[:, None]
    coef, *_ = np.linalg.lstsq(D, pv - c0, rcond=None)
    resid = (pv - c0) - D @ coef
    if np.linalg.norm(resid) > 1e-7:
        s = -resid / np.abs(resid).max()
        # shift so the hull sits at zero: constant absorbed via normalization
        shift = s @ c0
        S = s.reshape(T.tensor_shape).copy()
        S[:, :, 0, 0] -= shift
        s = S.ravel()
        val = float(s @ pv)
        cert = Inequality(S, 0.0, "affine-hull certificate", None, "certificate")
        if check_certificate(s, T, pv, tol):
            return MembershipResult("outside", None, cert, val, "outside affine hull", h)
        return MembershipResult("indeterminate", None, None, val, "affine-hull check failed", h)

    res = linprog(pv, A_ub=np.vstack([M.T, -M.T]),
                  b_ub=np.concatenate([np.ones(T.k), np.zeros(T.k)]),
                  bounds=[(None, None)] * T.d, method="highs")
    if res.status != 0:
        return MembershipResult("indeterminate", message=f"dual LP: {res.message}", input_hash=h)
    s = res.x
    val = float(s @ pv)
    if val < -tol:
        if check_certificate(s, T, pv, tol):
            cert = Inequality(s.reshape(T.tensor_shape).copy(), 0.0,
                              "separating hyperplane", None, "certificate")
            return MembershipResult("outside", None, cert, val, "dual certificate", h)
        return MembershipResult("indeterminate", None, None, val,
                                "dual certificate failed re-check", h)

    A_eq = np.vstack([M, np.ones((1, T.k))])
    b_eq = np.concatenate([pv, [1.0]])
    res = linprog(np.zeros(T.k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * T.k,
                  method="highs")
    if res.status == 0:
        x = np.clip(res.x, 0, None)
        if np.abs(M @ x - pv).max() <= tol and abs(x.sum() - 1) <= tol:
            return MembershipResult("inside", x, None, val, "primal weights", h)
    return MembershipResult("indeterminate", None, None, val,
                            "primal infeasible but no separating certificate", h)


# ------------------------------------------------------------ thresholds

def threshold(ineq, family, p_range=(0.0, 1.0), tol=1e-10, relabelings=None, samples=11):
    """Root of ``I(p) = evaluate(ineq, family(p))`` by bisection.

    Parameters
    ----------
    family : callable
        Maps the scalar parameter to a correlation tensor.
    relabelings : sequence of (gA, gB), optional
        When given, the smallest threshold among the relabeled copies of
        ``ineq`` is returned.  Useful for a facet class whose members are
        violated by different settings orientations.

    Returns
    -------
    float or None
        ``None`` when ``I`` has no sign change on the range.
    """
    if relabelings is not None:
        roots = [threshold(_apply(ineq, gA, gB), family, p_range, tol, None, samples)
                 for gA, gB in relabelings]
        roots = [r for r in roots if r is not None]
        return min(roots) if roots else None

    lo, hi = p_range
    f = lambda t: evaluate(ineq, family(t))
    grid = np.linspace(lo, hi, samples)
    vals = np.array([f(t) for t in grid])
    steps = np.diff(vals)
    if np.any(steps > 1e-12) and np.any(steps < -1e-12):
        raise ValueError("I(p) is not monotone on the requested range")
    if vals[0] * vals[-1] > 0 or (vals[0] == 0 and vals[-1] == 0):
        return None
    if vals[0] == 0:
        return float(lo)
    if vals[-1] == 0:
        return float(hi)
    return float(bisect(f, lo, hi, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=200))


# ------------------------------------------------------------ named inequalities

def chsh_inequality():
    """CHSH as ``2 - (E00 + E01 + E10 - E11) >= 0``, scaled to integers.

    ``E_xy = sum (-1)^(a+b) p(ab|xy)``; the constant 2 is written as
    ``(1/2) sum_{x,y} sum_{ab} p(ab|xy)``.
    """
    terms = {}
    for a, b, x, y in product(range(2), range(2), range(2), range(2)):
        sgn = -1 if (x, y) == (1, 1) else 1
        terms[(a, b, x, y)] = Fraction(1) - 2 * sgn * (-1) ** (a + b)
    return _from_terms(terms, (2, 2, 2, 2), "CHSH", "facet")


def ico_dodeca_inequality():
    """The icosahedron/dodecahedron noncontextuality inequality.

    Coefficients are exact elements of Q[phi]; indices are ``(a, b, x, y)``
    with Alice on the icosahedron (6 settings) and Bob on the dodecahedron
    (10 settings).
    """
    one = GoldenRational(1, 0)
    inv_phi = GoldenRational(-1, 1)          # 1/phi = phi - 1
    phi_p1 = GoldenRational(1, 1)            # phi + 1
    inv_phi2 = GoldenRational(2, -1)         # 1/phi^2 = 2 - phi
    terms = {
        (0, 0, 0, 0): one, (0, 0, 0, 1): one, (0, 0, 0, 2): -phi_p1,
        (0, 0, 0, 3): inv_phi, (0, 0, 1, 0): inv_phi, (0, 0, 1, 1): inv_phi,
        (0, 0, 1, 2): GoldenRational(-2, 0), (0, 0, 1, 3): one,
        (0, 0, 2, 0): -one, (0, 0, 2, 1): -inv_phi, (0, 0, 2, 2): phi_p1,
        (0, 0, 2, 3): -one, (1, 0, 1, 1): -inv_phi2, (1, 0, 1, 2): inv_phi,
    }
    exact = np.full((2, 2, 6, 10), GoldenRational(0, 0), dtype=object)
    for idx, c in terms.items():
        exact[idx] = c
    coeffs = np.vectorize(float, otypes=[float])(exact)
    return Inequality(coeffs, 0.0, "ico-dodeca", None, "valid", exact)


def oct_cube_inequalities():
    """The three octahedron/cube facet representatives (orbits 144, 144, 48)."""
    base = {(0, 1, 2, 2): 1, (1, 0, 0, 3): 1, (1, 1, 0, 0): -1}
    rows = [
        {**base, (1, 1, 2, 1): 1},
        {**base, (1, 1, 2, 0): 1},
        {**base, (1, 1, 1, 0): 1, (1, 1, 1, 2): -1, (1, 1, 2, 0): -1,
         (1, 1, 2, 1): 1, (1, 1, 2, 2): 1},
    ]
    return [_from_terms({k: Fraction(v) for k, v in r.items()}, (2, 2, 3, 4),
                        f"oct-cube-{i + 1}", "facet") for i, r in enumerate(rows)]


# ------------------------------------------------------------ JSON

def _coef_to_json(c):
    if isinstance(c, GoldenRational):
        return {"a": str(c.a), "b": str(c.b)}
    if isinstance(c, Fraction):
        return str(c)
    return float(c)


def _coef_from_json(v):
    if isinstance(v, dict):
        return GoldenRational(Fraction(v["a"]), Fraction(v["b"]))
    if isinstance(v, str):
        return Fraction(v)
    return float(v)


def _ineq_dict(ineq):
    src = ineq.exact if ineq.exact is not None else ineq.coeffs
    coeffs = {",".join(map(str, idx)): _coef_to_json(src[idx])
              for idx in np.ndindex(src.shape) if src[idx] != 0}
    return {"label": ineq.label, "kind": ineq.kind, "shape": list(ineq.coeffs.shape),
            "coeffs": coeffs, "bound": float(ineq.bound), "orbit": ineq.orbit_id}


def _ineq_from_dict(d):
    shape = tuple(d["shape"])
    vals = {tuple(map(int, k.split(","))): _coef_from_json(v) for k, v in d["coeffs"].items()}
    exact = None
    if vals and all(not isinstance(v, float) for v in vals.values()):
        golden = any(isinstance(v, GoldenRational) for v in vals.values())
        zero = GoldenRational(0, 0) if golden else Fraction(0)
        exact = np.full(shape, zero, dtype=object)
        for k, v in vals.items():
            exact[k] = v
    coeffs = np.zeros(shape)
    for k, v in vals.items():
        coeffs[k] = float(v)
    return Inequality(coeffs, d.get("bound", 0.0), d.get("label", ""), d.get("orbit"),
                      d.get("kind", "valid"), exact)


def inequality_to_json(ineq):
    return json.dumps(_ineq_dict(ineq), indent=2)


def inequality_from_json(text):
    return _ineq_from_dict(json.loads(text))


def inequalities_to_json(ineqs, metadata=None):
    return json.dumps({"metadata": metadata or {},
                       "inequalities": [_ineq_dict(i) for i in ineqs]}, indent=2)


def inequalities_from_json(text):
    data = json.loads(text)
    items = data["inequalities"] if isinstance(data, dict) else data
    return [_ineq_from_dict(d) for d in items]
