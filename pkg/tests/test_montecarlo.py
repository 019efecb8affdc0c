import csv
import io
import json

import numpy as np
import pytest

from bellnc.inequalities import chsh_inequality
from bellnc.montecarlo import (McConfig, Pipeline, StageCache, jitter_bloch_vectors,
                               propagate, summary_to_json, trials_to_csv)
from bellnc.quantum import born_correlations, chsh_shapes, effects, isotropic


@pytest.fixture(scope="module")
def chsh_setup():
    A, B = chsh_shapes()
    ineq = chsh_inequality()
    pipe = Pipeline(A, B, (ineq,), stages=("evaluate",))
    p = born_correlations(isotropic(0.9), effects(A), effects(B))
    return pipe, p, f"I[{ineq.label}]"


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(trials=0)
    with pytest.raises(ValueError):
        McConfig(angle_sigma_deg=-1)
    with pytest.raises(ValueError):
        Pipeline(*chsh_shapes(), stages=("evaluate", "fit"))


def test_no_noise_gives_zero_spread(chsh_setup):
    pipe, p, key = chsh_setup
    s = propagate(p * 1e4, pipe, McConfig(trials=5, poisson=False, angle_sigma_deg=0))
    assert s[key]["std"] == 0 and s[key]["mean"] == s[key]["nominal"]
    assert s["_trials_failed"] == 0


def test_deterministic_and_worker_independent(chsh_setup):
    pipe, p, key = chsh_setup
    cfg = McConfig(trials=12, seed=4, angle_sigma_deg=1.0)
    a = propagate(np.round(p * 1e4), pipe, cfg)
    b = propagate(np.round(p * 1e4), pipe, cfg)
    c = propagate(np.round(p * 1e4), pipe, cfg, workers=2)
    assert summary_to_json(a) == summary_to_json(b) == summary_to_json(c)


def test_std_scales_as_inverse_sqrt_counts(chsh_setup):
    pipe, p, key = chsh_setup
    cfg = McConfig(trials=400, seed=1, angle_sigma_deg=0)
    s1 = propagate(p * 1e4, pipe, cfg)[key]["std"]
    s4 = propagate(p * 4e4, pipe, cfg)[key]["std"]
    assert 1.75 < s1 / s4 < 2.3


def test_poisson_resampling_preserves_mean(chsh_setup):
    pipe, p, key = chsh_setup
    s = propagate(p * 1e5, pipe, McConfig(trials=200, seed=2, angle_sigma_deg=0))[key]
    assert abs(s["mean"] - s["nominal"]) < 4 * s["std"] / np.sqrt(200)


def test_jitter_statistics():
    rng = np.random.default_rng(0)
    V = np.tile([[0.0, 0.0, 1.0]], (4000, 1))
    J = jitter_bloch_vectors(V, 1.0, rng)
    assert np.allclose(np.linalg.norm(J, axis=1), 1)
    ang = np.degrees(np.arccos(np.clip(J @ [0, 0, 1], -1, 1)))
    # a rotation by theta about a uniform axis tilts z by theta * sin(axis polar angle)
    assert abs(np.sqrt(np.mean(ang ** 2)) - np.sqrt(2 / 3)) < 0.05
    assert np.array_equal(jitter_bloch_vectors(V[:3], 0, rng), V[:3])


def test_failed_trials_are_recorded(chsh_setup):
    pipe, p, key = chsh_setup
    counts = np.round(p * 1e4)
    counts[:, :, 1, 1] = 0
    counts[0, 0, 1, 1] = 1      # resampled totals are often zero
    s, rows = propagate(counts, pipe, McConfig(trials=30, seed=0), return_trials=True)
    assert 0 < s["_trials_failed"] < 30
    assert s[key]["failed"] == s["_trials_failed"]
    assert any("MissingDataError" in r.get("_error", "") for r in rows)
    table = list(csv.DictReader(io.StringIO(trials_to_csv(rows))))
    assert len(table) == 30 and table[0]["trial"] == "0"


def test_full_pipeline_and_cache(shapes, tmp_path):
    oc, cube = shapes["octahedron"], shapes["cube"]
    p = born_correlations(isotropic(0.6), effects(oc), effects(cube))
    counts = np.random.default_rng(0).poisson(p * 1e5)
    pipe = Pipeline(oc, cube, stages=("regularize", "secondary", "tomography"),
                    regularize_options={"restarts": 2})
    cache = StageCache(tmp_path)
    cfg = McConfig(trials=3, seed=0)
    s1 = propagate(counts, pipe, cfg, cache=cache)
    assert len(list(tmp_path.glob("*.pkl"))) == 1
    s2 = propagate(counts, pipe, cfg, cache=cache)
    assert s1 == s2
    assert {"chi2", "C_N", "C_M", "p_iso", "fidelity"} <= set(s1)
    assert abs(s1["p_iso"]["nominal"] - 0.6) < 0.01
    assert json.loads(summary_to_json(s1))["_trials_failed"] == 0
