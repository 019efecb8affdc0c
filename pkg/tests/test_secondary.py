import json

import numpy as np
import pytest

from bellnc.geometry import derive_identities
from bellnc.montecarlo import jitter_bloch_vectors
from bellnc.quantum import (bloch_state, born_correlations, effects, effects_from_vectors,
                            isotropic, product_state)
from bellnc.secondary import (SpanError, apply_secondary, check_span, fit_secondary,
                              identity_map, identity_residuals, secondary_to_json,
                              steering_matrix)


@pytest.fixture(scope="module")
def ids(shapes):
    return derive_identities(shapes["icosahedron"]), derive_identities(shapes["dodecahedron"])


def _primary(shapes, rho, sigma_deg, seed):
    rng = np.random.default_rng(seed)
    vN = jitter_bloch_vectors(shapes["icosahedron"].vectors, sigma_deg, rng)
    vM = jitter_bloch_vectors(shapes["dodecahedron"].vectors, sigma_deg, rng)
    return born_correlations(rho, effects_from_vectors(vN), effects_from_vectors(vM))


def _cells_ok(ps):
    assert ps.min() >= -1e-12
    assert np.allclose(ps.sum(axis=(0, 1)), 1, atol=1e-12)


def test_ideal_statistics_need_no_mixing(shapes, ids):
    p = _primary(shapes, isotropic(0.5), 0, 0)
    smap = fit_secondary(p, *ids)
    assert smap.C_N == 1.0 and smap.C_M == 1.0
    assert np.abs(apply_secondary(smap, p) - p).max() < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_jittered_statistics(shapes, ids, seed):
    p = _primary(shapes, isotropic(0.5), 1.0, seed)
    assert max(identity_residuals(p, *ids).values()) > 1e-4
    smap = fit_secondary(p, *ids)
    assert min(smap.C_N, smap.C_M) >= 0.95
    ps = apply_secondary(smap, p)
    assert max(identity_residuals(ps, *ids).values()) <= 1e-9
    assert max(smap.residuals.values()) <= 1e-9
    _cells_ok(ps)
    # no-signaling of the secondary statistics
    mA = ps.sum(axis=1)
    assert np.abs(mA - mA[:, :, :1]).max() < 1e-9


def test_maps_are_stochastic(shapes, ids):
    smap = fit_secondary(_primary(shapes, isotropic(0.7), 1.0, 5), *ids)
    for w in (smap.u, smap.v):
        assert w.min() >= 0
        assert np.allclose(w.sum(axis=1), 1)
        assert w.shape[1] == w.shape[0] + 2


def test_literal_mode_keeps_cells_in_range(shapes, ids):
    p = _primary(shapes, isotropic(0.5), 1.0, 3)
    smap = fit_secondary(p, *ids, trivial_effects=False)
    assert smap.u.shape[0] == smap.u.shape[1]
    ps = apply_secondary(smap, p)
    assert max(smap.residuals.values()) <= 1e-9
    assert ps.min() >= p.min() - 1e-12 and ps.max() <= p.max() + 1e-12


def test_outcome_bias_needs_constant_effects(shapes, ids):
    """A small outcome bias costs O(1) mixing without the constant effects."""
    ico, dod = shapes["icosahedron"], shapes["dodecahedron"]
    N, M = effects(ico), effects(dod)
    eps = 1e-5
    N = N.copy()
    N[0, 0] = (1 - eps) * N[0, 0]
    N[1, 0] = np.eye(2) - N[0, 0]
    p = born_correlations(isotropic(0.5), N, M)
    literal = fit_secondary(p, *ids, trivial_effects=False)
    full = fit_secondary(p, *ids)
    assert full.C_N > 0.999
    assert literal.C_N < 0.9
    assert max(full.residuals.values()) <= 1e-9


def test_span_check(shapes, ids):
    rho = product_state(bloch_state([0, 0, 1]), bloch_state([1, 0, 0]))
    p = born_correlations(rho, effects(shapes["icosahedron"]), effects(shapes["dodecahedron"]))
    with pytest.raises(SpanError):
        fit_secondary(p, *ids)
    assert check_span(p, expected_rank=None) == 1     # outer product of marginals


def test_identity_map_and_json(shapes, ids):
    p = _primary(shapes, isotropic(0.3), 0, 0)
    assert np.allclose(apply_secondary(identity_map(6, 10), p), p)
    P = steering_matrix(p)
    assert P.shape == (12, 20) and P[3 * 0 + 1, 0] == p[0, 0, 1, 0]
    smap = fit_secondary(_primary(shapes, isotropic(0.5), 1.0, 0), *ids)
    data = json.loads(secondary_to_json(smap))
    assert set(data) == {"u", "v", "C_N", "C_M", "residuals"}
