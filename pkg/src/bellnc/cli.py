"""Command-line interface: ``bellnc {derive,simulate,analyze,certify,tomo}``.

Exit codes: 0 success, 1 error, 2 verdict indeterminate.
"""
import argparse
import csv
import hashlib
import io
import json
import sys
import warnings

import numpy as np

from . import __version__
from .certify_steering import (certificate_to_json, certify_unsteerable,
                               certify_unsteerable_positive_map)
from .datafit import (counts_to_frequencies, fidelity, nearest_isotropic, read_counts_csv,
                      tomography_fit, write_counts_csv)
from .geometry import SHAPE_NAMES, make_shape, shape_from_json
from .inequalities import (UnsupportedModeError, chsh_inequality, classify_orbits,
                           enumerate_facets, ico_dodeca_inequality,
                           inequalities_from_json, inequalities_to_json, membership,
                           oct_cube_inequalities)
from .montecarlo import McConfig, Pipeline, StageCache, jitter_bloch_vectors, propagate
from .polytopes import affine_dimension, assignment_vertices, product_vertices
from .quantum import (bell_state, born_correlations, chsh_shapes, effects,
                      effects_from_vectors, isotropic, operator_from_json, operator_to_json)

OK, ERROR, INDETERMINATE = 0, 1, 2
# a violation is reported when it exceeds this many standard deviations
VERDICT_SIGMAS = 3.0
JITTER_MODEL = "Bloch-vector rotation about a uniform random axis, angle ~ N(0, sigma)"


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


# ------------------------------------------------------------ helpers

def parse_shapes(text):
    """``"A,B"`` with named shapes or JSON shape files; ``"chsh"`` gives CHSH settings."""
    if text == "chsh":
        return chsh_shapes()
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError("--shapes expects two comma-separated shapes")
    out = []
    for part in parts:
        part = part.strip()
        if part in SHAPE_NAMES:
            out.append(make_shape(part))
        else:
            with open(part) as fh:
                out.append(shape_from_json(fh.read()))
    return tuple(out)


def builtin_inequalities(shape_N, shape_M):
    key = (shape_N.name, shape_M.name)
    if key == ("icosahedron", "dodecahedron"):
        return [ico_dodeca_inequality()]
    if key == ("octahedron", "cube"):
        return oct_cube_inequalities()
    if key in (("square", "square"), ("chsh-alice", "chsh-bob")):
        return [chsh_inequality()]
    raise ValueError(f"no built-in inequalities for {key}; pass --inequalities")


def sha256_file(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _stat(summary, name):
    s = summary[name]
    return {"value": s["nominal"], "mean": s["mean"], "std": s["std"],
            "trials": s["trials"], "failed": s["failed"]}


def verdict(value, std):
    if value >= 0:
        return "not-violated"
    if std == 0 or -value >= VERDICT_SIGMAS * std:
        return "violated"
    return "indeterminate"


def mixture_state(p_set):
    """Bell-state mixture with weights ``p + (1-p)/4`` on Phi+ and ``(1-p)/4`` on the rest."""
    w = (1 - p_set) / 4
    return ((p_set + w) * bell_state("phi+")
            + w * (bell_state("phi-") + bell_state("psi+") + bell_state("psi-")))


def port_configurations(p, efficiency=(1.0, 1.0)):
    """Expected relative weights of the four port-permutation iterations.

    Iteration ``c`` routes Alice's outcome ``a`` and Bob's ``b`` to the
    transmitted (efficiency ``eta_T``) or reflected (``eta_R``) port.
    Returns shape ``(4, 2, 2, nx, ny)``.
    """
    eta = np.asarray(efficiency, dtype=float)
    # port index (0 = transmitted, 1 = reflected) per iteration and outcome
    alice = np.array([[0, 1], [1, 0], [0, 1], [1, 0]])
    bob = np.array([[0, 1], [1, 0], [1, 0], [0, 1]])
    out = np.empty((4,) + p.shape)
    for c in range(4):
        fac = np.outer(eta[alice[c]], eta[bob[c]])
        out[c] = p * fac[:, :, None, None]
    return out


# ------------------------------------------------------------ commands

def cmd_derive(args):
    shape_N, shape_M = _stage("shapes", parse_shapes, args.shapes)
    if args.mode == "facets":
        if not (shape_N.is_rational and shape_M.is_rational):
            raise StageError("derive", UnsupportedModeError(
                "facet enumeration needs rational shapes; use --mode certificate"))
        A = _stage("vertices", assignment_vertices, shape_N, exact=True)
        B = _stage("vertices", assignment_vertices, shape_M, exact=True)
        T = product_vertices(A, B)
        facets = _stage("facets", enumerate_facets, T)
        nontrivial = [f for f in facets if f.kind == "facet"]
        orbits, labeled = _stage("orbits", classify_orbits, nontrivial, shape_N, shape_M, T)
        positivity = [f for f in facets if f.kind == "positivity"]
        meta = {
            "shapes": [shape_N.name, shape_M.name],
            "mode": "facets",
            "n_facets": len(nontrivial),
            "n_positivity": len(positivity),
            "orbit_sizes": sorted((len(o) for o in orbits), reverse=True),
            "affine_dimension": affine_dimension(T),
            "ambient_dimension": T.d,
            "n_vertices": T.k,
            "version": __version__,
        }
        _emit(inequalities_to_json(labeled + positivity, meta) + "\n", args.out)
        return OK
    # certificate mode
    if args.isotropic is None and args.counts is None:
        raise StageError("derive", ValueError("certificate mode needs --isotropic or --counts"))
    if args.counts is not None:
        target = counts_to_frequencies(read_counts_csv(args.counts)).f
        source = {"counts_sha256": sha256_file(args.counts)}
    else:
        target = born_correlations(isotropic(args.isotropic), effects(shape_N), effects(shape_M))
        source = {"isotropic": args.isotropic}
    A = _stage("vertices", assignment_vertices, shape_N)
    B = _stage("vertices", assignment_vertices, shape_M)
    T = product_vertices(A, B)
    res = _stage("membership", membership, target, T)
    meta = {"shapes": [shape_N.name, shape_M.name], "mode": "certificate",
            "verdict": res.status, "value": res.value, "message": res.message,
            "input_hash": res.input_hash, "version": __version__, **source}
    ineqs = [res.certificate] if res.certificate is not None else []
    _emit(inequalities_to_json(ineqs, meta) + "\n", args.out)
    return INDETERMINATE if res.status == "indeterminate" else OK


def cmd_simulate(args):
    shape_N, shape_M = _stage("shapes", parse_shapes, args.shapes)
    if (args.isotropic is None) == (args.mixture is None):
        raise StageError("simulate", ValueError("give exactly one of --isotropic, --mixture"))
    rho = isotropic(args.isotropic) if args.isotropic is not None else mixture_state(args.mixture)
    rng = np.random.default_rng(args.seed)
    vN = jitter_bloch_vectors(shape_N.vectors, args.sigma, rng)
    vM = jitter_bloch_vectors(shape_M.vectors, args.sigma, rng)
    p = born_correlations(rho, effects_from_vectors(vN), effects_from_vectors(vM))
    p = np.clip(p, 0, None)
    if args.port_configs:
        w = port_configurations(p, (1.0, args.reflected_efficiency)) * args.counts / 4
        configs = w if args.mode == "exact" else rng.poisson(w)
        text = write_counts_csv(configs.sum(axis=0), configs=configs)
    else:
        w = p * args.counts
        text = write_counts_csv(w if args.mode == "exact" else rng.poisson(w))
    _emit(text, args.out)
    return OK


def _load_inequalities(args, shape_N, shape_M):
    if args.inequalities:
        with open(args.inequalities) as fh:
            return inequalities_from_json(fh.read()), sha256_file(args.inequalities)
    return builtin_inequalities(shape_N, shape_M), "builtin"


def cmd_analyze(args):
    shape_N, shape_M = _stage("shapes", parse_shapes, args.shapes)
    counts = _stage("ingest", read_counts_csv, args.counts)
    if counts.shape[2:] != (shape_N.n_settings, shape_M.n_settings):
        raise StageError("ingest", ValueError(
            f"counts have {counts.shape[2:]} settings, shapes need "
            f"{(shape_N.n_settings, shape_M.n_settings)}"))
    ineqs, ineq_hash = _stage("inequalities", _load_inequalities, args, shape_N, shape_M)
    stages = ["regularize", "evaluate"]
    if not args.no_secondary:
        stages.insert(1, "secondary")
    want_tomo = args.tomo or args.certify_unsteerable
    if want_tomo:
        stages.append("tomography")
    pipe = Pipeline(shape_N, shape_M, tuple(ineqs), tuple(stages),
                    {"mode": args.mode, "restarts": args.restarts, "seed": args.seed})
    cfg = McConfig(trials=args.trials, poisson=True, angle_sigma_deg=args.sigma, seed=args.seed)
    cache = StageCache(args.cache_dir) if args.cache_dir else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        summary = _stage("montecarlo", propagate, counts, pipe, cfg, workers=args.workers,
                         cache=cache)

    report = {
        "tool": {"name": "bellnc", "version": __version__},
        "scenario": {"shapes": [shape_N.name, shape_M.name],
                     "settings": [shape_N.n_settings, shape_M.n_settings]},
        "inputs": {"counts_sha256": sha256_file(args.counts), "inequalities": ineq_hash,
                   "total_counts": float(np.sum(counts))},
        "seeds": {"montecarlo": args.seed, "regularize": args.seed},
        "montecarlo": {"trials": cfg.trials, "poisson": cfg.poisson,
                       "angle_sigma_deg": cfg.angle_sigma_deg, "jitter_model": JITTER_MODEL,
                       "trials_failed": summary["_trials_failed"]},
        "regularization": {"mode": args.mode, "restarts": args.restarts,
                           "chi2": _stat(summary, "chi2")},
        "verdict_sigmas": VERDICT_SIGMAS,
    }
    if "secondary" in stages:
        report["secondary"] = {"C_N": _stat(summary, "C_N"), "C_M": _stat(summary, "C_M")}
    rows = []
    verdicts = []
    for ineq in ineqs:
        st = _stat(summary, f"I[{ineq.label}]")
        st["label"] = ineq.label
        st["verdict"] = verdict(st["value"], st["std"])
        verdicts.append(st["verdict"])
        rows.append(st)
    report["inequalities"] = rows

    if not args.no_membership:
        report["membership"] = _membership_verdict(counts, pipe)
    if want_tomo:
        report["tomography"] = {"p_iso": _stat(summary, "p_iso"),
                                "fidelity": _stat(summary, "fidelity")}
    status = OK
    if args.certify_unsteerable:
        freq = counts_to_frequencies(counts)
        rho = tomography_fit(freq, effects(shape_N), effects(shape_M))
        cert = _stage("certify", certify_unsteerable, rho, args.n_unitaries, 0.5, args.seed)
        report["steering"] = json.loads(certificate_to_json(cert))
        report["seeds"]["certify"] = args.seed
        if cert.status == "indeterminate":
            status = INDETERMINATE
    if "indeterminate" in verdicts:
        status = INDETERMINATE

    _emit(_dumps(report), args.out)
    if args.plot_csv:
        _emit(_plot_csv(report), args.plot_csv)
    return status


def _membership_verdict(counts, pipe):
    """Membership of the analyzed statistics in the noncontextual polytope."""
    _, _, p = _stage("membership", pipe.run_full, counts)
    T = product_vertices(assignment_vertices(pipe.shape_N), assignment_vertices(pipe.shape_M))
    res = _stage("membership", membership, p, T)
    return {"status": res.status, "value": res.value, "message": res.message}


def _plot_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "p", "p_std", "I", "I_std", "verdict"])
    tomo = report.get("tomography")
    p, dp = (tomo["p_iso"]["value"], tomo["p_iso"]["std"]) if tomo else ("", "")
    for row in report["inequalities"]:
        w.writerow([row["label"], p, dp, row["value"], row["std"], row["verdict"]])
    return buf.getvalue()


def cmd_certify(args):
    if args.isotropic is not None:
        rho = isotropic(args.isotropic)
    elif args.state:
        with open(args.state) as fh:
            rho = operator_from_json(fh.read())
    else:
        raise StageError("certify", ValueError("give --isotropic or --state"))
    if args.mode == "positive-map":
        cert = _stage("certify", certify_unsteerable_positive_map, rho, args.n,
                      seed=args.seed, base_p=args.base_p)
    else:
        cert = _stage("certify", certify_unsteerable, rho, args.n, args.base_p, args.seed)
    _emit(certificate_to_json(cert) + "\n", args.out)
    return INDETERMINATE if cert.status == "indeterminate" else OK


def cmd_tomo(args):
    shape_N, shape_M = _stage("shapes", parse_shapes, args.shapes)
    counts = _stage("ingest", read_counts_csv, args.counts)
    freq = counts_to_frequencies(counts)
    rho = _stage("tomography", tomography_fit, freq, effects(shape_N), effects(shape_M))
    p, F = nearest_isotropic(rho)
    report = {
        "tool": {"name": "bellnc", "version": __version__},
        "inputs": {"counts_sha256": sha256_file(args.counts)},
        "rho": json.loads(operator_to_json(rho)),
        "p_iso": p,
        "fidelity": F,
    }
    if args.target is not None:
        report["fidelity_to_target"] = fidelity(isotropic(args.target), rho)
    if args.trials > 0:
        pipe = Pipeline(shape_N, shape_M, (), ("tomography",))
        cfg = McConfig(trials=args.trials, angle_sigma_deg=args.sigma, seed=args.seed)
        summary = _stage("montecarlo", propagate, counts, pipe, cfg)
        report["p_iso_std"] = summary["p_iso"]["std"]
        report["fidelity_std"] = summary["fidelity"]["std"]
        report["seeds"] = {"montecarlo": args.seed}
    _emit(_dumps(report), args.out)
    return OK


# ------------------------------------------------------------ parser

def build_parser():
    ap = argparse.ArgumentParser(prog="bellnc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, shapes=True):
        if shapes:
            p.add_argument("--shapes", required=True,
                           help="two shapes 'A,B' (names or JSON files) or 'chsh'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p = sub.add_parser("derive", help="facet enumeration or a separating certificate")
    common(p)
    p.add_argument("--mode", choices=["facets", "certificate"], default="facets")
    p.add_argument("--isotropic", type=float)
    p.add_argument("--counts", help="counts CSV used as target in certificate mode")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("simulate", help="synthetic count data")
    common(p)
    p.add_argument("--isotropic", type=float)
    p.add_argument("--mixture", type=float, help="p_set of the Bell-state mixing scheme")
    p.add_argument("--counts", type=float, default=2e6, help="expected counts per setting pair")
    p.add_argument("--mode", choices=["sample", "exact"], default="sample")
    p.add_argument("--sigma", type=float, default=0.0, help="systematic angle jitter (deg)")
    p.add_argument("--port-configs", action="store_true",
                   help="write the four port-permutation iterations separately")
    p.add_argument("--reflected-efficiency", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="full certification pipeline on counts")
    common(p)
    p.add_argument("--counts", required=True)
    p.add_argument("--inequalities")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sigma", type=float, default=1.0, help="Monte Carlo angle jitter (deg)")
    p.add_argument("--mode", choices=["quantum", "gpt"], default="quantum")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--no-secondary", action="store_true")
    p.add_argument("--no-membership", action="store_true")
    p.add_argument("--tomo", action="store_true")
    p.add_argument("--certify-unsteerable", action="store_true")
    p.add_argument("--n-unitaries", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache-dir")
    p.add_argument("--plot-csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("certify", help="unsteerability SDP")
    common(p, shapes=False)
    p.add_argument("--isotropic", type=float)
    p.add_argument("--state", help="operator JSON file")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--base-p", type=float, default=0.5)
    p.add_argument("--mode", choices=["unitary", "positive-map"], default="unitary")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("tomo", help="state tomography and nearest isotropic state")
    common(p)
    p.add_argument("--counts", required=True)
    p.add_argument("--target", type=float)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_tomo)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return ERROR
    except (OSError, ValueError) as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR
