import csv
import io

import numpy as np
import pytest

from bellnc.polytopes import (affine_dimension, assignment_vertices, correlation_index,
                              matrix_to_csv, product_vertices, vertices_to_csv)
from oracles import assignment_constraints, basic_feasible_vertices, cdd_facet_count


def _same_rows(A, B, tol=1e-8):
    if len(A) != len(B):
        return False
    return all(np.abs(B - a).max(axis=1).min() < tol for a in A)


@pytest.mark.parametrize("name", ["square", "octahedron", "cube", "icosahedron", "dodecahedron"])
def test_vertices_match_basic_feasible_solutions(shapes, name):
    s = shapes[name]
    P = assignment_vertices(s)
    A, b = assignment_constraints(s.vectors)
    oracle = basic_feasible_vertices(A, b)
    assert _same_rows(np.asarray(P.vertices, dtype=float), oracle)


def test_rational_vertices_are_exact(shapes):
    P = assignment_vertices(shapes["cube"], exact=True)
    assert P.exact_vertices is not None
    Pf = assignment_vertices(shapes["cube"], exact=False)
    assert _same_rows(np.asarray(P.vertices, float), np.asarray(Pf.vertices, float), 1e-12)


def test_deterministic_counts(shapes):
    # only trivial identities: all 2^n deterministic assignments
    assert len(assignment_vertices(shapes["square"]).vertices) == 4
    assert len(assignment_vertices(shapes["octahedron"]).vertices) == 8


def test_product_matrix_layout(shapes):
    A = assignment_vertices(shapes["octahedron"], exact=True)
    B = assignment_vertices(shapes["cube"], exact=True)
    T = product_vertices(A, B)
    assert (T.d, T.k) == (48, len(A.vertices) * len(B.vertices))
    u = np.asarray(A.vertices[1], float).reshape(2, 3)
    w = np.asarray(B.vertices[2], float).reshape(2, 4)
    col = T.matrix[:, 1 * len(B.vertices) + 2].reshape(2, 2, 3, 4)
    assert np.allclose(col, np.einsum("ax,by->abxy", u, w))
    assert correlation_index(1, 0, 2, 3, 3, 4) == ((1 * 2 + 0) * 3 + 2) * 4 + 3
    # every column is a normalized, no-signaling correlation tensor
    cols = T.matrix.T.reshape(-1, 2, 2, 3, 4)
    assert np.allclose(cols.sum(axis=(1, 2)), 1)


def test_affine_dimension_oct_cube(T_oct_cube):
    assert affine_dimension(T_oct_cube) == 15


def test_integer_matrix(T_oct_cube):
    den, M = T_oct_cube.integer_matrix
    assert np.allclose(M / den, T_oct_cube.matrix)


def test_csv_exports(shapes, T_oct_cube):
    text = vertices_to_csv(assignment_vertices(shapes["cube"], exact=True))
    header = next(csv.reader(io.StringIO(text)))
    assert header == ["0,0", "0,1", "0,2", "0,3", "1,0", "1,1", "1,2", "1,3"]
    csv_text, sidecar = matrix_to_csv(T_oct_cube)
    assert len(csv_text.strip().splitlines()) >= T_oct_cube.d
    assert "columns" in sidecar or "provenance" in sidecar


def test_cdd_facet_count_oracle(T_oct_cube, oct_cube_facets):
    pytest.importorskip("cdd")
    den, M = T_oct_cube.integer_matrix
    n, dim = cdd_facet_count(M.T.tolist())
    assert dim == 15
    assert n == len(oct_cube_facets) == 384
