"""Monte Carlo error propagation through the analysis pipeline.

Each trial resamples the raw counts from a Poisson distribution and,
optionally, perturbs the nominal measurement Bloch vectors by small random
rotations (random axis, angle ~ N(0, sigma)).  The pipeline is re-run on
every trial and the spread of each output is reported.  Trial ``t`` draws
from ``default_rng([seed, t])`` so results do not depend on execution order.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
import csv
import hashlib
import io
import json
import pickle

import numpy as np
from scipy.spatial.transform import Rotation

from .certify_steering import certify_unsteerable
from .datafit import counts_to_frequencies, nearest_isotropic, regularize, tomography_fit
from .geometry import derive_identities
from .inequalities import evaluate
from .quantum import effects_from_vectors
from .secondary import apply_secondary, fit_secondary

__all__ = ["McConfig", "Pipeline", "StageCache", "jitter_bloch_vectors", "propagate",
           "summary_to_json", "trials_to_csv"]


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings."""

    trials: int = 100
    poisson: bool = True
    angle_sigma_deg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.angle_sigma_deg < 0:
            raise ValueError("angle_sigma_deg must be >= 0")


def jitter_bloch_vectors(vectors, sigma_deg, rng):
    """Rotate each vector about a uniformly random axis by ``N(0, sigma)`` degrees."""
    V = np.asarray(vectors, dtype=float)
    if sigma_deg == 0:
        return V.copy()
    axes = rng.normal(size=V.shape)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.deg2rad(rng.normal(scale=sigma_deg, size=len(V)))
    return Rotation.from_rotvec(axes * angles[:, None]).apply(V)


@dataclass(frozen=True, eq=False)
class Pipeline:
    """Declarative analysis chain.

    ``stages`` is a subset of ``("regularize", "secondary", "evaluate",
    "tomography", "certify")`` run in that order.  ``evaluate`` uses the
    secondary statistics when the ``secondary`` stage is present, the
    regularized ones otherwise, and raw frequencies when neither is.
    """

    shape_N: object
    shape_M: object
    inequalities: tuple = ()
    stages: tuple = ("regularize", "secondary", "evaluate")
    regularize_options: dict = field(default_factory=dict)
    certify_n: int = 500
    certify_seed: int = 0

    def __post_init__(self):
        known = {"regularize", "secondary", "evaluate", "tomography", "certify"}
        bad = set(self.stages) - known
        if bad:
            raise ValueError(f"unknown stages {sorted(bad)}")

    def run(self, counts, vectors_N=None, vectors_M=None, warm=None):
        """Run once; returns ``(outputs, fit)``."""
        out, fit, _ = self.run_full(counts, vectors_N, vectors_M, warm)
        return out, fit

    def run_full(self, counts, vectors_N=None, vectors_M=None, warm=None):
        """Like :meth:`run` but also returns the final analyzed statistics."""
        vN = self.shape_N.vectors if vectors_N is None else vectors_N
        vM = self.shape_M.vectors if vectors_M is None else vectors_M
        N, M = effects_from_vectors(vN), effects_from_vectors(vM)
        freq = counts_to_frequencies(counts)
        out = {}
        fit = None
        p = freq.f
        if "regularize" in self.stages:
            opts = dict(self.regularize_options)
            fit = regularize(freq, init=warm if warm is not None else (N, M), **opts)
            out["chi2"] = fit.chi2
            p = fit.p
        if "secondary" in self.stages:
            smap = fit_secondary(p, derive_identities(self.shape_N), derive_identities(self.shape_M))
            out["C_N"], out["C_M"] = smap.C_N, smap.C_M
            p = apply_secondary(smap, p)
        if "evaluate" in self.stages:
            for ineq in self.inequalities:
                out[f"I[{ineq.label}]"] = evaluate(ineq, p)
        if "tomography" in self.stages or "certify" in self.stages:
            rho = tomography_fit(freq, N, M)
            out["p_iso"], out["fidelity"] = nearest_isotropic(rho)
            if "certify" in self.stages:
                cert = certify_unsteerable(rho, self.certify_n, seed=self.certify_seed)
                out["certified"] = float(cert.certified)
        return out, fit, p

    def fingerprint(self):
        """Hash of everything that determines the pipeline's outputs."""
        h = hashlib.sha256()
        for shape in (self.shape_N, self.shape_M):
            h.update(np.ascontiguousarray(shape.vectors, dtype=float).tobytes())
        for ineq in self.inequalities:
            h.update(ineq.label.encode())
            h.update(np.ascontiguousarray(ineq.coeffs).tobytes())
        h.update(repr((self.stages, sorted(self.regularize_options.items()),
                       self.certify_n, self.certify_seed)).encode())
        return h.hexdigest()


class StageCache:
    """Directory of pickled nominal runs keyed by input hashes."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def get(self, key):
        path = self.dir / f"{key}.pkl"
        if path.exists():
            with open(path, "rb") as fh:
                return pickle.load(fh)
        return None

    def put(self, key, value):
        with open(self.dir / f"{key}.pkl", "wb") as fh:
            pickle.dump(value, fh)


def _trial(args):
    t, counts, pipeline, trial_pipe, cfg, warm = args
    rng = np.random.default_rng([cfg.seed, t])
    c = rng.poisson(counts) if cfg.poisson else counts
    vN = jitter_bloch_vectors(pipeline.shape_N.vectors, cfg.angle_sigma_deg, rng)
    vM = jitter_bloch_vectors(pipeline.shape_M.vectors, cfg.angle_sigma_deg, rng)
    try:
        out, _ = trial_pipe.run(c, vN, vM, warm=warm)
    except Exception as exc:  # recorded, not fatal
        return {"_error": f"{type(exc).__name__}: {exc}"}
    return out


def propagate(counts, pipeline, cfg=McConfig(), return_trials=False, workers=1, cache=None):
    """Monte Carlo summaries of every pipeline output.

    The nominal run (original counts, nominal settings) provides the warm
    start for each trial's regularization, which then runs a single
    see-saw from there.

    Parameters
    ----------
    workers : int
        Processes for the trials; results do not depend on this value.
    cache : StageCache, optional
        Stores the nominal run keyed by the counts and pipeline hashes.

    Returns
    -------
    dict
        ``{name: {"nominal", "mean", "std", "trials", "failed"}}`` plus
        ``"_trials_failed"``; with ``return_trials`` also the raw table.
    """
    counts = np.asarray(counts)
    key = hashlib.sha256(np.ascontiguousarray(counts, dtype=float).tobytes()
                         + pipeline.fingerprint().encode()).hexdigest()
    cached = cache.get(key) if cache is not None else None
    if cached is None:
        cached = pipeline.run(counts)
        if cache is not None:
            cache.put(key, cached)
    nominal, nominal_fit = cached
    trial_pipe = pipeline
    if "regularize" in pipeline.stages:
        opts = dict(pipeline.regularize_options)
        opts["restarts"] = 1
        trial_pipe = Pipeline(pipeline.shape_N, pipeline.shape_M, pipeline.inequalities,
                              pipeline.stages, opts, pipeline.certify_n, pipeline.certify_seed)
    jobs = [(t, counts, pipeline, trial_pipe, cfg, nominal_fit) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_trial, jobs))
    else:
        rows = [_trial(j) for j in jobs]
    failed = sum("_error" in r for r in rows)
    summary = {}
    for name, nom in nominal.items():
        vals = np.array([r[name] for r in rows if name in r], dtype=float)
        summary[name] = {
            "nominal": float(nom),
            "mean": float(vals.mean()) if len(vals) else float("nan"),
            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            "trials": int(len(vals)),
            "failed": int(cfg.trials - len(vals)),
        }
    summary["_trials_failed"] = failed
    if return_trials:
        return summary, rows
    return summary


def summary_to_json(summary):
    return json.dumps(summary, indent=2, sort_keys=True)


def trials_to_csv(rows):
    keys = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["trial"] + keys, lineterminator="\n")
    w.writeheader()
    for t, r in enumerate(rows):
        w.writerow({"trial": t, **r})
    return buf.getvalue()
