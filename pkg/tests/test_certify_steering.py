import json

import numpy as np
import pytest

from bellnc.certify_steering import (certificate_to_json, certification_curve,
                                     certify_unsteerable, certify_unsteerable_positive_map,
                                     depolarized_transpose, haar_unitaries)
from bellnc.quantum import isotropic, phi_plus
from oracles import isotropic_state


def _pt_B(X):
    return X.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def _independent_check(rho, cert):
    """Rebuild the decomposition from scratch and check every claim."""
    Us = haar_unitaries(cert.n, cert.seed)
    base = isotropic_state(cert.base_p)
    comps = [np.kron(np.eye(2), U) @ base @ np.kron(np.eye(2), U).conj().T for U in Us]
    mix = sum(w * c for w, c in zip(cert.weights, comps)) if len(comps) else 0
    X = rho - mix
    assert np.all(cert.weights >= 0)
    assert np.linalg.eigvalsh(X).min() >= -1e-8
    assert np.linalg.eigvalsh(_pt_B(X)).min() >= -1e-8
    assert np.abs(mix + X - rho).max() < 1e-12
    return X


def test_ppt_state_certified_without_components():
    cert = certify_unsteerable(isotropic(0.3), n_unitaries=0)
    assert cert.certified and cert.margin > 0
    _independent_check(isotropic_state(0.3), cert)


@pytest.mark.parametrize("rho", [isotropic(0.7), phi_plus()], ids=["iso0.7", "phi+"])
def test_steerable_states_not_certified(rho):
    cert = certify_unsteerable(rho, n_unitaries=60, seed=0)
    assert not cert.certified and cert.margin < 0


def test_isotropic_045_certified():
    cert = certify_unsteerable(isotropic(0.45), n_unitaries=500, seed=1)
    assert cert.certified
    _independent_check(isotropic_state(0.45), cert)


def test_pool_prefix_property():
    a, b = haar_unitaries(10, 3), haar_unitaries(25, 3)
    assert np.array_equal(a, b[:10])
    for U in b:
        assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-12)


def test_certification_curve_monotone():
    curve = certification_curve(isotropic(0.4), [0, 20, 100], seed=2)
    status = [s for _, s in curve]
    assert status[0] == "not-certified"
    first = status.index("certified-unsteerable")
    assert all(s == "certified-unsteerable" for s in status[first:])


def test_positive_map_pool():
    dt = depolarized_transpose(2 / 3)
    comp = np.zeros((2, 2, 2, 2), complex)
    R = isotropic(0.5).reshape(2, 2, 2, 2)
    for i in range(2):
        for j in range(2):
            comp[i, :, j, :] = dt(R[i, :, j, :])
    assert np.linalg.eigvalsh(comp.reshape(4, 4)).min() >= -1e-12
    cert = certify_unsteerable_positive_map(isotropic(0.49), n=200, seed=0)
    assert cert.certified
    assert cert.min_eig_X >= -1e-8 and cert.min_eig_XTB >= -1e-8


def test_argument_checks():
    with pytest.raises(ValueError):
        certify_unsteerable(isotropic(0.3), base_p=0.6)
    with pytest.raises(ValueError):
        certify_unsteerable(isotropic(0.3), n_unitaries=-1)


def test_json_deterministic():
    a = certificate_to_json(certify_unsteerable(isotropic(0.42), 80, seed=5))
    b = certificate_to_json(certify_unsteerable(isotropic(0.42), 80, seed=5))
    assert a == b
    assert json.loads(a)["n"] == 80
