from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from bellnc.geometry import make_shape
from bellnc.inequalities import (GoldenRational, Inequality, ShapeMismatchError,
                                 UnsupportedModeError, act, check_certificate,
                                 chsh_inequality, classify_orbits, enumerate_facets,
                                 ico_dodeca_inequality, evaluate, inequalities_from_json,
                                 inequalities_to_json, inequality_from_json,
                                 inequality_to_json, membership, relabeling_group,
                                 signature, oct_cube_inequalities, threshold)
from bellnc.polytopes import assignment_vertices, product_vertices
from bellnc.quantum import chsh_shapes, isotropic_family
from oracles import (ICO_DODECA_THRESHOLD, PHI, born_loop, chsh_family, deterministic_points,
                     isotropic_state, normalized_signature, values_on)


@pytest.fixture(scope="module")
def T_square(shapes):
    A = assignment_vertices(shapes["square"], exact=True)
    return product_vertices(A, A)


@pytest.fixture(scope="module")
def square_facets(T_square):
    return enumerate_facets(T_square)


# ------------------------------------------------------------ golden ring

def test_golden_rational_arithmetic():
    phi = GoldenRational(0, 1)
    assert phi * phi == phi + 1
    inv = phi.inverse()
    assert inv == phi - 1
    assert abs(float(GoldenRational(Fraction(1, 3), -2)) - (1 / 3 - 2 * PHI)) < 1e-15
    assert GoldenRational.parse(str(GoldenRational(Fraction(-3, 2), 5))) == GoldenRational(
        Fraction(-3, 2), 5)


# ------------------------------------------------------------ CHSH

def test_square_facets_are_chsh_plus_positivity(square_facets, T_square):
    nontrivial = [f for f in square_facets if f.kind == "facet"]
    positivity = [f for f in square_facets if f.kind == "positivity"]
    assert len(nontrivial) == 8 and len(positivity) == 16
    # oracle: values on the 16 deterministic local points
    pts = deterministic_points(2, 2)
    expected = {normalized_signature(values_on(pts, c)) for c in chsh_family()}
    got = {normalized_signature(values_on(pts, f.coeffs)) for f in nontrivial}
    assert got == expected


def test_chsh_inequality_is_enumerated(square_facets, T_square):
    sigs = {signature(f, T_square) for f in square_facets}
    assert signature(chsh_inequality(), T_square) in sigs


def test_chsh_single_orbit(shapes, square_facets, T_square):
    nontrivial = [f for f in square_facets if f.kind == "facet"]
    orbits, labeled = classify_orbits(nontrivial, shapes["square"], shapes["square"], T_square)
    assert [len(o) for o in orbits] == [8]
    assert {f.orbit_id for f in labeled} == {0}


def test_chsh_threshold():
    A, B = chsh_shapes()
    fam = isotropic_family(A, B)
    assert abs(threshold(chsh_inequality(), fam) - 1 / np.sqrt(2)) < 1e-9


def test_every_chsh_facet_reaches_tsirelson_threshold(shapes, square_facets):
    A, B = chsh_shapes()
    fam = isotropic_family(A, B)
    G = relabeling_group(shapes["square"])
    pairs = list(product(G, G))
    for f in square_facets:
        if f.kind == "facet":
            assert abs(threshold(f, fam, relabelings=pairs) - 1 / np.sqrt(2)) < 1e-9


# ------------------------------------------------------------ oct/cube

def test_oct_cube_facet_counts(oct_cube_facets, oct_cube_orbits):
    kinds = [f.kind for f in oct_cube_facets]
    assert kinds.count("facet") == 336 and kinds.count("positivity") == 48
    orbits, _ = oct_cube_orbits
    assert sorted(len(o) for o in orbits) == [48, 144, 144]


def test_facets_are_tight_and_valid(oct_cube_facets, T_oct_cube):
    d = T_oct_cube.d
    M = T_oct_cube.matrix
    for f in oct_cube_facets[::7]:
        vals = M.T @ f.vector - f.bound
        assert vals.min() > -1e-12
        tight = M[:, np.abs(vals) < 1e-12]
        # a facet of a 15-dimensional polytope has 15 affinely independent tight vertices
        assert np.linalg.matrix_rank(tight - tight[:, :1], tol=1e-9) == 14
        assert d == 48


def test_oct_cube_representatives_found(oct_cube_facets, T_oct_cube):
    sigs = {signature(f, T_oct_cube) for f in oct_cube_facets}
    for row in oct_cube_inequalities():
        assert signature(row, T_oct_cube) in sigs


def test_oct_cube_representatives_in_distinct_orbits(oct_cube_facets, oct_cube_orbits, T_oct_cube):
    _, labeled = oct_cube_orbits
    by_sig = {signature(f, T_oct_cube): f.orbit_id for f in labeled}
    ids = [by_sig[signature(r, T_oct_cube)] for r in oct_cube_inequalities()]
    assert len(set(ids)) == 3


def test_relabeling_group_orders(shapes):
    assert len(relabeling_group(shapes["square"])) == 8
    assert len(relabeling_group(shapes["octahedron"])) == 48
    assert len(relabeling_group(shapes["cube"])) == 48


def test_act_is_a_group_action(shapes):
    G = relabeling_group(shapes["cube"])
    S = np.random.default_rng(0).normal(size=(2, 2, 3, 4))
    gA = np.arange(6)
    g1, g2 = G[5], G[11]
    composed = g2[g1]
    assert np.allclose(act(act(S, gA, g1), gA, g2), act(S, gA, composed))


def test_row3_threshold(shapes):
    fam = isotropic_family(shapes["octahedron"], shapes["cube"])
    assert abs(threshold(oct_cube_inequalities()[2], fam) - 1 / np.sqrt(3)) < 1e-9


def test_facets_require_exact(T_ico_dodeca):
    with pytest.raises(UnsupportedModeError):
        enumerate_facets(T_ico_dodeca)


# ------------------------------------------------------------ ico/dodeca

def test_ico_dodeca_threshold_and_affinity(ico_dodeca):
    ico, dod, _, _ = ico_dodeca
    ineq = ico_dodeca_inequality()
    fam = lambda p: born_loop(isotropic_state(p), ico.vectors, dod.vectors)
    assert abs(threshold(ineq, fam) - ICO_DODECA_THRESHOLD) < 1e-9
    ps = np.linspace(0, 1, 7)
    vals = np.array([evaluate(ineq, fam(p)) for p in ps])
    fit = np.polyval(np.polyfit(ps, vals, 1), ps)
    assert np.abs(vals - fit).max() < 1e-10
    # maximally mixed value is phi - 3/2
    assert abs(vals[0] - (PHI - 1.5)) < 1e-12


def test_ico_dodeca_valid_on_all_vertices(T_ico_dodeca):
    vals = T_ico_dodeca.matrix.T @ ico_dodeca_inequality().vector
    assert vals.min() > -1e-12
    assert np.sum(np.abs(vals) < 1e-9) >= 16


# ------------------------------------------------------------ membership

def test_membership_ico_dodeca(ico_dodeca, T_ico_dodeca):
    ico, dod, _, _ = ico_dodeca
    p40 = born_loop(isotropic_state(0.40), ico.vectors, dod.vectors)
    p45 = born_loop(isotropic_state(0.45), ico.vectors, dod.vectors)
    r40 = membership(p40, T_ico_dodeca)
    r45 = membership(p45, T_ico_dodeca)
    assert r40.inside and abs(r40.weights.sum() - 1) < 1e-9
    assert np.abs(T_ico_dodeca.matrix @ r40.weights - p40.ravel()).max() < 1e-9
    assert r45.outside
    s = r45.certificate.vector
    vals = T_ico_dodeca.matrix.T @ s
    assert vals.min() >= -1e-9 and vals.max() <= 1 + 1e-9 and s @ p45.ravel() < 0
    assert check_certificate(s, T_ico_dodeca, p45)


def test_membership_outside_affine_hull(T_square):
    p = np.full((2, 2, 2, 2), 0.25)
    p[0, 0, 0, 0] += 0.1       # signaling, unnormalized
    r = membership(p, T_square)
    assert r.outside
    assert evaluate(r.certificate, p) < 0


def test_membership_shape_mismatch(T_square):
    with pytest.raises(ShapeMismatchError):
        membership(np.zeros((2, 2, 3, 3)), T_square)


def test_evaluate_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        evaluate(chsh_inequality(), np.zeros((2, 2, 3, 2)))


def test_threshold_none_without_sign_change():
    ineq = Inequality(np.ones((2, 2, 1, 1)), 0.0)
    fam = lambda p: np.full((2, 2, 1, 1), 0.25)
    assert threshold(ineq, fam) is None


# ------------------------------------------------------------ JSON

def test_json_round_trip_exact_and_golden():
    for ineq in [chsh_inequality(), ico_dodeca_inequality(), *oct_cube_inequalities()]:
        back = inequality_from_json(inequality_to_json(ineq))
        assert np.array_equal(back.coeffs, ineq.coeffs)
        assert back.label == ineq.label
        assert back.exact is not None
    text = inequalities_to_json(oct_cube_inequalities(), {"shapes": ["octahedron", "cube"]})
    assert len(inequalities_from_json(text)) == 3
