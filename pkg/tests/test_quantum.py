import json

import numpy as np
import pytest

from bellnc.quantum import (DomainError, ValidationError, bell_state, bloch_state,
                            born_correlations, chsh_shapes, chsh_value, effects,
                            effects_from_vectors, isotropic,
                            isotropic_correlations_closed_form, operator_from_json,
                            operator_to_json, partial_trace, partial_transpose, phi_plus,
                            product_state, random_separable_state, steer,
                            validate_assemblage, validate_correlations, validate_effects,
                            validate_state)
from oracles import born_loop, isotropic_state


def _random_state(rng):
    G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = G @ G.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("pair", [("octahedron", "cube"), ("icosahedron", "dodecahedron")])
def test_born_matches_loop_oracle(shapes, rng, pair):
    A, B = shapes[pair[0]], shapes[pair[1]]
    rho = _random_state(rng)
    p = born_correlations(rho, effects(A), effects(B))
    assert np.abs(p - born_loop(rho, A.vectors, B.vectors)).max() < 1e-13
    validate_correlations(p)


def test_isotropic_closed_form(shapes):
    A, B = shapes["icosahedron"], shapes["dodecahedron"]
    for p in (0.0, 0.3, 0.4195, 1.0):
        direct = born_correlations(isotropic(p), effects(A), effects(B))
        assert np.abs(direct - isotropic_correlations_closed_form(p, A.vectors, B.vectors)).max() < 1e-14
        assert np.abs(direct - born_loop(isotropic_state(p), A.vectors, B.vectors)).max() < 1e-14


def test_chsh_tsirelson():
    A, B = chsh_shapes()
    p = born_correlations(phi_plus(), effects(A), effects(B))
    assert abs(chsh_value(p) - 2 * np.sqrt(2)) < 1e-12


def test_isotropic_domain():
    isotropic(-1 / 3)
    with pytest.raises(DomainError):
        isotropic(1.01)
    with pytest.raises(DomainError):
        isotropic(-0.4)


def test_bell_states_orthonormal():
    names = ["phi+", "phi-", "psi+", "psi-"]
    total = sum(bell_state(n) for n in names)
    assert np.allclose(total, np.eye(4))
    for n in names:
        assert abs(np.trace(bell_state(n) @ bell_state(n)) - 1) < 1e-14


def test_partial_operations(rng):
    s, t = bloch_state([0.1, 0.2, 0.3]), bloch_state([0, -0.5, 0.5])
    rho = product_state(s, t)
    assert np.allclose(partial_trace(rho, "A"), s)
    assert np.allclose(partial_trace(rho, "B"), t)
    assert np.allclose(partial_transpose(rho, "B"), np.kron(s, t.T))
    assert np.allclose(partial_transpose(rho, "A"), np.kron(s.T, t))
    # partial transposes of Phi+ have eigenvalue -1/2
    assert abs(np.linalg.eigvalsh(partial_transpose(phi_plus())).min() + 0.5) < 1e-14


def test_steering_reproduces_born(shapes, rng):
    A, B = shapes["octahedron"], shapes["cube"]
    rho = _random_state(rng)
    N, M = effects(A), effects(B)
    p = born_correlations(rho, N, M)
    sig = steer(rho, N, side="A")
    validate_assemblage(sig)
    q = np.einsum("axij,byji->abxy", sig, M).real
    assert np.abs(p - q).max() < 1e-14
    sigB = steer(rho, M, side="B")
    q2 = np.einsum("byij,axji->abxy", sigB, N).real
    assert np.abs(p - q2).max() < 1e-14


def test_separable_states_are_ppt(rng):
    for _ in range(20):
        rho = random_separable_state(rng)
        validate_state(rho)
        assert np.linalg.eigvalsh(partial_transpose(rho)).min() > -1e-12


def test_validators_reject():
    with pytest.raises(ValidationError):
        validate_state(np.diag([1.2, -0.2, 0, 0]))
    with pytest.raises(ValidationError):
        validate_state(np.eye(4) / 2)
    E = effects_from_vectors([[0, 0, 1.0]])
    validate_effects(E)
    with pytest.raises(ValidationError):
        validate_effects(E * 1.1)
    p = np.full((2, 2, 2, 2), 0.25)
    validate_correlations(p)
    p[0, 0, 0, 0], p[1, 0, 0, 0] = 0.35, 0.15     # Alice's marginal unchanged, Bob's moves
    with pytest.raises(ValidationError):
        validate_correlations(p)


def test_operator_json_round_trip(rng):
    rho = _random_state(rng)
    back = operator_from_json(operator_to_json(rho))
    assert np.array_equal(back, rho)
    assert set(json.loads(operator_to_json(rho))) == {"real", "imag"}
