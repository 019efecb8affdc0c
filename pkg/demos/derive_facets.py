"""Enumerate the octahedron/cube noncontextual polytope and its facet orbits.

Prints the facet count, orbit sizes and the threshold of each reference
representative over the isotropic family.
"""
import numpy as np

from bellnc.geometry import make_shape
from bellnc.inequalities import classify_orbits, enumerate_facets, oct_cube_inequalities, threshold
from bellnc.polytopes import affine_dimension, assignment_vertices, product_vertices
from bellnc.quantum import isotropic_family

oct_, cube = make_shape("octahedron"), make_shape("cube")
T = product_vertices(assignment_vertices(oct_, exact=True), assignment_vertices(cube, exact=True))
facets = [f for f in enumerate_facets(T) if f.kind == "facet"]
orbits, _ = classify_orbits(facets, oct_, cube, T)
print(f"{T.k} vertices, affine dimension {affine_dimension(T)} in R^{T.d}")
print(f"{len(facets)} nontrivial facets in orbits of size {sorted(map(len, orbits), reverse=True)}")

family = isotropic_family(oct_, cube)
for ineq in oct_cube_inequalities():
    thr = threshold(ineq, family)
    print(f"{ineq.label}: isotropic threshold {thr if thr is None else round(thr, 6)}")
print(f"1/sqrt(3) = {1 / np.sqrt(3):.6f}")
