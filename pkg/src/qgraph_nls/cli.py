"""qgraph-nls command line.

Subcommands: verify-matrix, profile, spectrum, stability, evolve,
resolvent-check, elliptic-selftest. Every command prints a JSON report
(and writes it to --out DIR when given). Exit codes: 0 pass, 1 check
failed, 2 usage or parse error.
"""

import argparse
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .boundary_system import (build_delta, build_delta_prime, build_delta_prime_loop,
                              build_matrix, build_subspace, greens_identity_defect,
                              is_krein_unitary, membership_residual, tadpole_delta_matrix)
from .graph_model import GraphFunction, GraphSpec, to_csv
from .standing_waves import (NoRootError, StandingWaveError, admissible_interval,
                             exact_trace, loop_only_wave, mass, mass_slope, solve_shift)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def version_string() -> str:
    """Package version plus the short commit hash when run from a checkout."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def emit(report: dict, args, name: str = "report.json"):
    report = _jsonable(report)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text + "\n")


def write_file(args, name: str, text: str):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text)


def provenance(args, **extra) -> dict:
    inputs = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"version": version_string(), "command": args.command, "inputs": inputs, **extra}


# ------------------------------------------------------------------ checks

def _require(cond, msg):
    if not cond:
        raise UsageError(msg)


def _graph_args(args):
    _require(args.N is not None and args.N >= 1, "--N must be a positive integer")
    _require(args.L is not None and args.L > 0, "--L must be positive")


# ---------------------------------------------------------- verify-matrix

def _load_matrix(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read matrix file {path!r}: {exc}") from exc
    if isinstance(d, dict):
        d = d.get("matrix", d)
    try:
        if isinstance(d, dict):
            M = np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)
        else:
            M = np.array(d, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"matrix file {path!r} is not a numeric matrix: {exc}") from exc
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise UsageError("matrix must be square")
    return M


def _family_extension(args, rng):
    fam = args.family
    N = args.N
    if fam == "delta":
        _require(args.Z is not None, "--Z is required for the delta family")
        return build_delta(args.Z, N, rng)
    if fam == "delta-prime":
        _require(args.Z1 is not None and args.Z2 is not None, "--Z1 and --Z2 are required")
        return build_delta_prime(args.Z1, args.Z2, N, rng)
    if fam == "delta-prime-loop":
        _require(args.Z is not None, "--Z is required for the delta-prime-loop family")
        return build_delta_prime_loop(args.Z, N, rng)
    if fam == "tadpole-delta":
        _require(N == 1, "the tadpole family has N = 1")
        m = rng.normal(size=3)
        return build_matrix(tadpole_delta_matrix(*m), 1)
    if fam == "identity":
        return build_matrix(np.eye(2 * (N + 1)), N)
    if fam == "Y0":
        _require(N == 1, "the Y0 example has N = 1")
        g = args.Z if args.Z is not None else 2.0
        return build_subspace(np.array([[g], [1.0 / g], [0.0]]), 1)
    if fam == "e9":
        _require(N == 1, "the e9 example has N = 1")
        return build_subspace(np.array([[1.0], [0.0], [-1.0]]), 1)
    raise UsageError(f"unknown family {fam!r}")


def cmd_verify_matrix(args):
    _require(args.N is not None and args.N >= 1, "--N must be a positive integer")
    rng = np.random.default_rng(args.seed)
    if args.file:
        M = _load_matrix(args.file)
        if M.shape[0] != 2 * (args.N + 1):
            raise UsageError(f"matrix is {M.shape[0]}x{M.shape[1]}, expected "
                             f"{2 * (args.N + 1)}x{2 * (args.N + 1)} for N={args.N}")
        ext = build_matrix(M, args.N, args.reduction)
    elif args.family:
        ext = _family_extension(args, rng)
    else:
        raise UsageError("give --file or --family")
    report = {"extension": ext.kind, "params": ext.params, "N": ext.N}
    passed = True
    if ext.matrix is not None:
        u = is_krein_unitary(ext.matrix, ext.N)
        report["unitarity"] = {"ok": bool(u), "residual": u.residual,
                               "min_singular_ratio": u.min_singular_ratio}
        passed = passed and bool(u)
    graph = GraphSpec(L=args.L or 1.0, N=ext.N)
    defect = greens_identity_defect(ext, trials=args.trials, rng=rng, graph=graph)
    report["greens_identity_defect"] = defect
    report["constraint_rank"] = ext.constraints.rank
    report["boundary_conditions"] = ext.constraints.describe(graph)
    passed = passed and defect <= 1e-6
    report["pass"] = passed
    report["provenance"] = provenance(args, tolerances={"unitarity": 1e-10, "green": 1e-6})
    emit(report, args)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------- profile

def _wave_from_args(args):
    _graph_args(args)
    _require(args.omega is not None and args.omega > 0, "--omega must be positive")
    if args.no_tails:
        return loop_only_wave(args.omega, args.L, args.N, args.Z), None
    _require(args.Z is not None, "--Z is required unless --no-tails")
    interval = admissible_interval(args.N, args.Z, args.L) if args.Z < 0 else None
    return None, interval


def profile_summary(wave, n0, n1, R):
    graph = wave.default_graph(R)
    xl = graph.loop_grid(n0)
    xr = graph.ray_grid(n1)
    w = wave.omega
    res_loop = np.max(np.abs(-wave.loop(xl, 2) + w * wave.loop(xl) - wave.loop(xl) ** 3))
    res_ray = np.max(np.abs(-wave.ray(xr, 2) + w * wave.ray(xr) - wave.ray(xr) ** 3))
    ext = build_delta_prime_loop(wave.Z if wave.Z else -1.0, wave.N)
    t = exact_trace(wave).full()
    return graph, {
        "wave": wave.to_dict(),
        "stationary_residual": float(max(res_loop, res_ray)),
        "vertex_residual_exact_trace": float(ext.constraints.residual(t)),
        "vertex_residual_sampled": float(membership_residual(wave.sample(graph, n0, n1), ext)),
        "mass": mass(wave),
        "grid": {"n0": n0, "n1": n1, "R": graph.R},
    }


def cmd_profile(args):
    wave, interval = _wave_from_args(args)
    report = {}
    if interval is not None:
        report["admissible_interval"] = interval.to_dict()
    if wave is None:
        N, Z, w = args.N, args.Z, args.omega
        if Z >= 0 or w <= N * N / Z**2:
            report["error"] = (f"no soliton tails: they require Z < 0 and omega > N^2/Z^2 = "
                               f"{N * N / Z**2 if Z else float('inf'):.6g}; this lower bound is "
                               "sharp (the tail shift diverges as omega decreases to it)")
            report["provenance"] = provenance(args)
            emit(report, args)
            return EXIT_FAIL
        if not interval.contains(w) and not args.force:
            report["error"] = ("omega lies outside the admissible interval where a shift is "
                               "guaranteed; rerun with --force to attempt the root search")
            report["provenance"] = provenance(args)
            emit(report, args)
            return EXIT_FAIL
        try:
            wave = solve_shift(w, N, Z, args.L, args.branch)
        except (NoRootError, StandingWaveError) as exc:
            report["error"] = f"shift equation has no bracketed root: {exc}"
            report["provenance"] = provenance(args)
            emit(report, args)
            return EXIT_FAIL
    graph, summ = profile_summary(wave, args.grid_n0, args.grid_n1, args.R)
    report.update(summ)
    ok = summ["stationary_residual"] <= 1e-6 * max(1.0, wave.omega * wave.dn.eta1)
    report["pass"] = bool(ok)
    report["provenance"] = provenance(args)
    write_file(args, "profile.csv", to_csv(wave.sample(graph, args.grid_n0, args.grid_n1)))
    emit(report, args, "summary.json")
    return EXIT_OK if ok else EXIT_FAIL


def _wave_or_fail(args):
    """Build the wave for spectral/stability/evolve commands; None means
    a report with an error was already emitted."""
    wave, interval = _wave_from_args(args)
    if wave is not None:
        return wave
    try:
        return solve_shift(args.omega, args.N, args.Z, args.L, args.branch)
    except (NoRootError, StandingWaveError) as exc:
        emit({"error": str(exc), "provenance": provenance(args)}, args)
        return None


# --------------------------------------------------------------- spectrum

def cmd_spectrum(args):
    from .spectral import (FULL, HALF_SPLIT, L_MINUS, L_PLUS, default_grid,
                           l_minus_nonnegativity, morse_and_nullity)
    wave = _wave_or_fail(args)
    if wave is None:
        return EXIT_FAIL
    ext = build_delta_prime_loop(wave.Z if wave.Z else -1.0, wave.N)
    mode = HALF_SPLIT if args.mode == "half_split" else FULL
    which = L_MINUS if args.which == "L_minus" else L_PLUS
    graph, n0, n1 = default_grid(wave, args.grid_n0, args.grid_n1, args.R)
    rep = morse_and_nullity(wave, ext, mode, n0, n1, args.R, which=which)
    report = {"spectral_report": rep.to_dict()}
    if which == L_MINUS and wave.Z is not None and wave.Z < 0:
        report["l_minus"] = l_minus_nonnegativity(wave, ext, n0, n1, args.R, mode).to_dict()
    if args.out and args.dump_eigenvectors:
        from .spectral import assemble, dump_eigenvector_csv, lowest_eigenpairs
        op = assemble(wave, which, ext, n0, n1, graph=graph, mode=mode)
        _, vecs = lowest_eigenpairs(op, min(5, op.size - 1))
        for i in range(vecs.shape[1]):
            write_file(args, f"eigenvector_{i}.csv", dump_eigenvector_csv(op, vecs[:, i]))
    report["provenance"] = provenance(args, grid={"n0": n0, "n1": n1, "R": graph.R})
    emit(report, args)
    return EXIT_OK if rep.consistent else EXIT_FAIL


# -------------------------------------------------------------- stability

def stability_report(omega, L, N, Z, tails, n0=None, n1=None, R=None, branch="inner"):
    from .spectral import (FULL, GUARD_BAND, HALF_SPLIT, INCONCLUSIVE, gss_verdict,
                           morse_and_nullity)
    if Z:
        for name, thr in (("N^2/Z^2", N * N / Z**2), ("2N^2/Z^2", 2.0 * N * N / Z**2)):
            if abs(omega - thr) <= GUARD_BAND * thr:
                return {"omega": omega, "verdict": INCONCLUSIVE,
                        "reasons": [f"omega within the relative guard band {GUARD_BAND:g} "
                                    f"of the degenerate threshold {name} = {thr:g}"]}
    if tails:
        wave = solve_shift(omega, N, Z, L, branch)
    else:
        wave = loop_only_wave(omega, L, N, Z)
    ext = build_delta_prime_loop(Z if Z else -1.0, N)
    above = tails and Z and omega > 2.0 * N * N / Z**2
    mode = HALF_SPLIT if above and N % 2 == 0 else FULL
    rep = morse_and_nullity(wave, ext, mode, n0, n1, R)
    slope = mass_slope(omega, L, N, Z, tails, branch=branch)
    verdict, reasons = gss_verdict(rep, slope)
    return {"omega": omega, "verdict": verdict, "reasons": reasons, "mass_slope": slope,
            "mode": mode, "spectral_report": rep.to_dict(),
            "expected_morse": rep.expected_morse, "matches_expected": rep.matches_expected,
            "admissible": bool(admissible_interval(N, Z, L).contains(omega)) if tails else None}


def _stability_job(params):
    try:
        return stability_report(**params)
    except (StandingWaveError, ValueError, RuntimeError) as exc:
        return {"omega": params["omega"], "verdict": "INCONCLUSIVE", "reasons": [str(exc)]}


def cmd_stability(args):
    _graph_args(args)
    tails = not args.no_tails
    if tails:
        _require(args.Z is not None, "--Z is required unless --no-tails")
    omegas = args.omega_grid if args.omega_grid else [args.omega]
    _require(all(w is not None and w > 0 for w in omegas), "--omega must be positive")
    jobs = [dict(omega=float(w), L=args.L, N=args.N, Z=args.Z, tails=tails,
                 n0=args.grid_n0, n1=args.grid_n1, R=args.R, branch=args.branch)
            for w in omegas]
    if len(jobs) > 1 and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_stability_job, jobs))
    else:
        results = [_stability_job(j) for j in jobs]
    report = {"results": results,
              "provenance": provenance(args, tolerances={"tol_neg": "1e-3 omega",
                                                         "tol_null": "1e-3 omega",
                                                         "guard_band": 1e-6})}
    emit(report, args)
    decided = all(r["verdict"] in ("STABLE", "UNSTABLE") for r in results)
    return EXIT_OK if decided else EXIT_FAIL


# ----------------------------------------------------------------- evolve

def cmd_evolve(args):
    from .evolution import EvolutionConfig, orbital_experiment
    from .spectral import FULL, HALF_SPLIT, default_grid
    wave = _wave_or_fail(args)
    if wave is None:
        return EXIT_FAIL
    ext = build_delta_prime_loop(wave.Z if wave.Z else -1.0, wave.N)
    graph, n0, n1 = default_grid(wave, args.grid_n0, args.grid_n1, args.R)
    dt = args.dt if args.dt else 0.5e-2 / wave.omega
    t_end = args.t_end if args.t_end else 20.0 / wave.omega
    mode = HALF_SPLIT if args.mode == "half_split" else FULL
    cfg = EvolutionConfig(dt, t_end, ext, n0, n1, graph.R, mode=mode,
                          monitor_every=args.monitor_every)
    res = orbital_experiment(wave, args.perturbation, cfg, args.epsilon, seed=args.seed)
    write_file(args, "timeseries.csv", res.to_csv())
    report = {"summary": res.summary(), "provenance": provenance(args)}
    emit(report, args)
    return EXIT_OK


# -------------------------------------------------------- resolvent-check

def cmd_resolvent_check(args):
    from .spectral import random_smooth_function, resolvent_check
    _graph_args(args)
    _require(args.Z is not None and args.Z != 0, "--Z must be nonzero")
    _require(args.lam < 0, "--lambda must be negative")
    rng = np.random.default_rng(args.seed)
    R = args.R if args.R else 40.0
    graph = GraphSpec(args.L, args.N, R=R)
    ext = build_delta_prime_loop(args.Z, args.N)
    n0 = args.grid_n0 or 2001
    n1 = args.grid_n1 or 4001
    rows = []
    for _ in range(args.trials):
        lf, rf = random_smooth_function(graph, rng)
        f = GraphFunction.from_callables(graph, n0, n1, lf, rf)
        rows.append(resolvent_check(ext, args.lam, f, (lf, rf)).to_dict())
    ok = all(r["relative_residual"] <= 1e-6 and r["leakage"] <= 1e-10
             and r["discrete_leakage"] <= 1e-10 for r in rows)
    emit({"trials": rows, "pass": ok,
          "provenance": provenance(args, tolerances={"residual": 1e-6, "leakage": 1e-10})}, args)
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------ elliptic-selftest

def elliptic_selftest(seed=0, n=10_000) -> dict:
    from .elliptic import complete_E, complete_K, incomplete_F, jacobi_sn_cn_dn
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    u = rng.uniform(-20.0, 20.0, n)
    k = rng.uniform(0.0, 0.999, n)
    sn, cn, dn = jacobi_sn_cn_dn(u, k)
    id1 = float(np.max(np.abs(sn**2 + cn**2 - 1.0)))
    id2 = float(np.max(np.abs(k**2 * sn**2 + dn**2 - 1.0)))
    k0 = max(abs(complete_K(0.0) - np.pi / 2), abs(complete_E(0.0) - np.pi / 2))
    f1 = abs(incomplete_F(np.pi / 4, 1.0) - np.log(1.0 + np.sqrt(2.0)))
    elapsed = time.perf_counter() - t0
    checks = {"K0_E0": (k0, 1e-13), "F_pi4_k1": (f1, 1e-12),
              "sn2_cn2": (id1, 1e-12), "k2sn2_dn2": (id2, 1e-12), "runtime_s": (elapsed, 1.0)}
    return {name: {"value": v, "tol": tol, "pass": bool(v <= tol)} for name, (v, tol) in checks.items()}


def cmd_elliptic_selftest(args):
    rep = elliptic_selftest(args.seed)
    ok = all(c["pass"] for c in rep.values())
    emit({"checks": rep, "pass": ok, "provenance": provenance(args)}, args)
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="qgraph-nls", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--L", type=float, default=None)
        sp.add_argument("--N", type=int, default=None)
        sp.add_argument("--Z", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--json", default=None,
                        help="JSON config file; its keys override flags")

    def waveargs(sp):
        sp.add_argument("--omega", type=float, default=None)
        sp.add_argument("--no-tails", action="store_true")
        sp.add_argument("--branch", choices=["inner", "outer"], default="inner")
        sp.add_argument("--grid-n0", type=int, default=None)
        sp.add_argument("--grid-n1", type=int, default=None)
        sp.add_argument("--R", type=float, default=None)

    sp = sub.add_parser("verify-matrix", help="Krein unitarity and Green's identity")
    common(sp)
    sp.add_argument("--family", choices=["delta", "delta-prime", "delta-prime-loop",
                                         "tadpole-delta", "identity", "Y0", "e9"])
    sp.add_argument("--file", default=None)
    sp.add_argument("--Z1", type=float, default=None)
    sp.add_argument("--Z2", type=float, default=None)
    sp.add_argument("--reduction", choices=["values", "derivatives", "literal"],
                    default="values")
    sp.add_argument("--trials", type=int, default=50)
    sp.set_defaults(func=cmd_verify_matrix)

    sp = sub.add_parser("profile", help="standing-wave profile and parameters")
    common(sp)
    waveargs(sp)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_profile, grid_n0=None, grid_n1=None)

    sp = sub.add_parser("spectrum", help="Morse index and nullity")
    common(sp)
    waveargs(sp)
    sp.add_argument("--which", choices=["L_plus", "L_minus"], default="L_plus")
    sp.add_argument("--mode", choices=["full", "half_split"], default="full")
    sp.add_argument("--dump-eigenvectors", action="store_true")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("stability", help="GSS decision table")
    common(sp)
    waveargs(sp)
    sp.add_argument("--omega-grid", type=float, nargs="+", default=None)
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("evolve", help="orbital-stability experiment")
    common(sp)
    waveargs(sp)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--t-end", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--perturbation", choices=["generic", "symmetric"], default="generic")
    sp.add_argument("--mode", choices=["full", "half_split"], default="full")
    sp.add_argument("--monitor-every", type=int, default=20)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("resolvent-check", help="semi-analytic resolvent residuals")
    common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=-1.0)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--grid-n0", type=int, default=None)
    sp.add_argument("--grid-n1", type=int, default=None)
    sp.add_argument("--R", type=float, default=None)
    sp.set_defaults(func=cmd_resolvent_check)

    sp = sub.add_parser("elliptic-selftest", help="elliptic-function self-test")
    common(sp)
    sp.set_defaults(func=cmd_elliptic_selftest)
    return p


def _apply_config(args, parser):
    if not getattr(args, "json", None):
        return args
    try:
        with open(args.json) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.json!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    for key, val in cfg.items():
        attr = key.replace("-", "_")
        if attr == "lambda":
            attr = "lam"
        if not hasattr(args, attr):
            raise UsageError(f"unknown config key {key!r}")
        setattr(args, attr, val)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        args = _apply_config(args, parser)
        if getattr(args, "grid_n0", None) is None and args.command == "profile":
            args.grid_n0 = 801
        if getattr(args, "grid_n1", None) is None and args.command == "profile":
            args.grid_n1 = 801
        return args.func(args)
    except UsageError as exc:
        print(f"qgraph-nls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
