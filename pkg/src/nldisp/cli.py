"""Command-line entry point: JSON scenario configs in, JSON/CSV artifacts out.

Exit codes: 0 success / verification pass, 1 verification failure,
2 configuration error, 3 numerical failure. Artifacts are written atomically
(temp file + rename). Timestamps live in a separate metadata field so the
report body is byte-identical across reruns of the same config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import _accel
from .evolve import NumericalFailure, propagate, trajectory
from .kernels import verify_h1
from .spectral import (SpectralReport, lyapunov_top, monodromy_spectrum,
                       principal_eigen_autonomous)
from .verify import (Scenario, build_scenario, run_theorem, sweep,
                     write_sweep_csv, verify_continuity_L3_1,
                     verify_monotone_L4_2, verify_T1_3, verify_T1_4, SWEEP_HEADER)

THREADS_ENV = "NLDISP_THREADS"


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path: Path, body: dict, threads):
    payload = {
        "report": body,
        "metadata": {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "backend": _accel.backend(),
            "threads": threads,
        },
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _scenario(cfg) -> Scenario:
    try:
        return build_scenario(cfg)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_kernel_check(cfg, out, args):
    scn = _scenario(cfg)
    rep = verify_h1(scn.kernel)
    body = {
        "scenario": scn.hash,
        "norm_error": rep.norm_error,
        "kappa0": rep.kappa0,
        "tail_violations": int(len(rep.tail_violations)),
        "verdict": "pass" if rep.ok else "fail",
    }
    write_report(out / "kernel_check.json", body, args.threads)
    return 0 if rep.ok else 1


def cmd_simulate(cfg, out, args):
    scn = _scenario(cfg)
    sim = cfg.get("simulate", {})
    horizon = float(sim.get("horizon", 10.0))
    if "checkpoint_every" in sim:
        n_chk = max(1, round(horizon / float(sim["checkpoint_every"])))
    else:
        n_chk = int(sim.get("checkpoints", 50))
    rng = np.random.default_rng(scn.seed)
    u0 = np.ones(scn.K.n) if sim.get("u0", "ones") == "ones" else 0.5 + rng.random(scn.K.n)
    ts, states = trajectory(scn.K, scn.a, 0.0, horizon, u0, dt=sim.get("dt"),
                            n_checkpoints=n_chk)
    rows = [(t, float(s.min()), float(s.max()), float(np.log(np.max(np.abs(s)))))
            for t, s in zip(ts, states)]
    path = out / "trajectory.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".traj.")
    with os.fdopen(fd, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "min_u", "max_u", "log_norm"])
        for r in rows:
            wr.writerow([f"{v:.12g}" for v in r])
    os.replace(tmp, path)
    final = propagate(scn.K, scn.a, 0.0, horizon, u0, dt=sim.get("dt"), meta=scn.hash)
    body = {"scenario": scn.hash, "horizon": horizon,
            "final_min": float(final.u.min()), "final_max": float(final.u.max()),
            "log_scale": final.log_scale}
    write_report(out / "simulate.json", body, args.threads)
    return 0


def cmd_lyapunov(cfg, out, args):
    scn = _scenario(cfg)
    ly = cfg.get("lyapunov", {})
    res = lyapunov_top(scn.K, scn.a, horizon=float(ly.get("horizon", 200.0)),
                       dt=ly.get("dt"))
    rep = SpectralReport(
        lambda_PL=res.lambda_PL, lambda_PL_lower=res.lambda_PL_lower,
        windows=res.windows,
        method={"lambda_PL": "log-norm slope over the second half of the horizon"},
        diagnostics={"window_spread": res.window_spread, "converged": res.converged})
    body = {"scenario": scn.hash, **rep.to_dict()}
    write_report(out / "lyapunov.json", body, args.threads)
    atomic_write_text(out / "windows.csv",
                      "t0,t1,slope\n" + "".join(f"{a:.12g},{b:.12g},{c:.12g}\n"
                                                for a, b, c in res.windows))
    return 0


def cmd_eigen(cfg, out, args):
    scn = _scenario(cfg)
    pr = principal_eigen_autonomous(scn.K, scn.a.time_average(scn.nodes))
    body = {"scenario": scn.hash, "lambda": pr.value, "lambda_lo": pr.lam_lo,
            "lambda_hi": pr.lam_hi, "cw_gap": pr.gap, "iterations": pr.iterations,
            "method": "shifted power iteration with Collatz-Wielandt bounds"}
    if not scn.flags["time_independent"]:
        body["note"] = "coefficient is time-dependent; eigen ran on its time average"
    if cfg.get("eigen", {}).get("dump_vector"):
        atomic_write_text(out / "eigenvector.csv",
                          "".join(f"{v:.17g}\n" for v in pr.vector))
    if cfg.get("eigen", {}).get("monodromy"):
        mono = monodromy_spectrum(scn.K, scn.a)
        body["lambda_s"] = mono.lambda_s
        body["period"] = mono.period
    write_report(out / "eigen.json", body, args.threads)
    return 0


def cmd_bounds(cfg, out, args):
    scn = _scenario(cfg)
    clauses3 = tuple(cfg.get("bounds", {}).get("t1_3_clauses", (1,)))
    clauses4 = tuple(cfg.get("bounds", {}).get("t1_4_clauses", (1,)))
    reports = [verify_T1_3(scn, clauses=clauses3), verify_T1_4(scn, clauses=clauses4)]
    body = {"scenario": scn.hash, "reports": [r.to_dict() for r in reports]}
    write_report(out / "bounds.json", body, args.threads)
    return 0 if all(r.verdict for r in reports) else 1


def _perturbed_field(scn, spec):
    from .coefficients import Mode, constant_profile
    a2 = scn.a
    if "shift" in spec:
        a2 = a2.shifted(float(spec["shift"]))
    if "mode_amp" in spec:
        extra = Mode(profile=constant_profile(float(spec["mode_amp"])),
                     omega=float(spec.get("omega", 1.0)),
                     theta=float(spec.get("theta", 0.0)))
        a2 = type(a2)(c0=a2.c0, modes=a2.modes + (extra,))
    return a2


def cmd_verify(cfg, out, args):
    theorem = args.theorem or cfg.get("theorem")
    if not theorem:
        raise ConfigError("verify needs a theorem id (argument or config key)")
    try:
        if theorem == "L4_2":
            rep = verify_monotone_L4_2(cfg["kernel"], cfg["coefficient"],
                                       cfg["grid"], cfg["grid2"],
                                       seed=int(cfg.get("seed", 0)))
        else:
            scn = _scenario(cfg)
            if theorem == "L3_1":
                a2 = _perturbed_field(scn, cfg.get("perturbation", {"shift": 0.1}))
                rep = verify_continuity_L3_1(scn, a2,
                                             with_pe_prime=bool(cfg.get("with_pe_prime",
                                                                        False)))
            else:
                kw = {}
                if theorem in ("T1_3", "T1_4"):
                    kw["clauses"] = tuple(cfg.get("clauses", (1,)))
                rep = run_theorem(theorem, scn, **kw)
        scn_hash = rep.scenario
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.format == "csv":
        rows = [[scn_hash, theorem, c.name,
                 "" if math.isnan(c.value) else f"{c.value:.12g}",
                 "" if math.isnan(c.bound) else f"{c.bound:.12g}",
                 f"{c.slack:.12g}", "pass" if c.ok else "fail"]
                for c in rep.checks]
        text = ",".join(SWEEP_HEADER) + "\n" + "".join(",".join(r) + "\n" for r in rows)
        atomic_write_text(out / f"verify_{theorem}.csv", text)
    write_report(out / f"verify_{theorem}.json", rep.to_dict(), args.threads)
    if not rep.verdict:
        print(f"verify {theorem}: FAIL {rep.failing()}", file=sys.stderr)
    return 0 if rep.verdict else 1


def cmd_sweep(cfg, out, args):
    rows = sweep(cfg)
    path = out / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".sweep.")
    os.close(fd)
    write_sweep_csv(tmp, rows)
    os.replace(tmp, path)
    bad = [r for r in rows if str(r[-1]).startswith("error")]
    if bad:
        print(f"sweep: {len(bad)} scenario(s) errored", file=sys.stderr)
    return 0 if not bad else 1


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "eigen": cmd_eigen,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nldisp",
        description="Spectral analysis of the discrete nonlocal dispersal evolution")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get(THREADS_ENV, "0") or 0),
                       help="worker threads (0 = library default)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        if name == "verify":
            p.add_argument("theorem", nargs="?", default=None,
                           help="check id, e.g. T1_1 .. T1_5, P2_2")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads and _accel.HAVE_NUMBA:
        import numba
        numba.set_num_threads(max(1, args.threads))
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, out, args)
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
