"""Command line entry point.

Subcommands: ``verify-lemmas``, ``verify-dio``, ``kam-run``,
``bracket-test`` and ``simulate``.  Every subcommand writes
``manifest.json`` to its output directory before any other output.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
error, 3 numeric failure (resonance, overflow, blow-up).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np
import scipy
import sympy

from . import __version__
from .config import ConfigError, RunConfig, parse_config

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

__all__ = ["main", "build_parser", "write_manifest", "EXIT_OK", "EXIT_CHECK", "EXIT_USAGE", "EXIT_NUMERIC"]


class _NumericFailure(Exception):
    pass


def _defaults_text() -> str:
    cfg = RunConfig()
    rows = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "gamma_budget":
            v = f"{v[0]},{v[1]}"
        rows.append(f"  {f.name} = {v}")
    return "config defaults (key = value, # comments):\n" + "\n".join(rows)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default, allow_nan=True) + "\n", encoding="utf-8")


def write_manifest(out: Path, command: str, cfg: RunConfig | None, extra: dict | None = None) -> Path:
    """Write ``manifest.json`` with the resolved config, seeds and versions."""
    out.mkdir(parents=True, exist_ok=True)
    man = {
        "command": command,
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else None,
        "args": extra or {},
        "versions": {
            "kamnls": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "sympy": sympy.__version__,
            "mpmath": mpmath.__version__,
        },
    }
    p = out / "manifest.json"
    _dump(p, man)
    return p


def _load_cfg(args) -> RunConfig:
    cfg = parse_config(getattr(args, "config", None))
    if getattr(args, "out", None):
        cfg = RunConfig.from_dict({**cfg.to_dict(), "out_dir": args.out})
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify_lemmas(args) -> int:
    from .lemmas import DEFAULT_DELTAS, run_all

    sigmas = [float(s) for s in args.sigma.split(",")] if args.sigma else [2.5, 3.0, 4.0]
    out = Path(args.out)
    write_manifest(out, "verify-lemmas", None, {"sigma": sigmas, "deltas": list(DEFAULT_DELTAS), "seed": args.seed})
    reports = run_all(sigmas, DEFAULT_DELTAS, seed=args.seed)
    ok = all(r.passed for r in reports)
    _dump(out / "report.json", {"ok": ok, "reports": [r.to_json() for r in reports]})
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.lemma:26s} sigma={r.grid.get('sigma')} cases={r.cases} worst_margin={r.worst_margin:.6g}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify_dio(args) -> int:
    from .small_divisors import DioParams, sample_omega, verify_diophantine

    out = Path(args.out)
    write_manifest(out, "verify-dio", None, {"support": args.support, "size": args.size, "gamma": args.gamma, "seed": args.seed})
    omega = sample_omega(args.seed, max(args.support, 2))
    rep = verify_diophantine(omega, DioParams(args.gamma, args.support, args.size), threads=args.threads)
    payload = {**rep.to_json(), "gamma": args.gamma, "omega": {str(n): v for n, v in sorted(omega.V.items())}}
    _dump(out / "dio.json", payload)
    print(json.dumps(payload, default=_json_default))
    return EXIT_OK if rep.ok else EXIT_CHECK


def _write_steps_csv(path: Path, steps: list[dict]) -> None:
    cols = ["s", "eps_s", "R0", "R1", "R2", "F0", "F1", "R0_out", "R1_out", "R2_out",
            "shift_max", "residual", "dropped_norm", "n_kept", "n_eliminated", "seconds"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for st in steps:
            n, no = st.get("norms", {}), st.get("norms_out", {})
            w.writerow([st.get("s"), st.get("eps_s"), n.get("R0"), n.get("R1"), n.get("R2"), n.get("F0"), n.get("F1"),
                        no.get("R0"), no.get("R1"), no.get("R2"), st.get("shift_max"), st.get("residual"),
                        st.get("dropped_norm"), st.get("n_kept"), st.get("n_eliminated"), st.get("seconds")])


def cmd_kam_run(args) -> int:
    from .kam import run

    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    write_manifest(out, "kam-run", cfg, {"threads": args.threads, "simulate": not args.no_simulate})

    def progress(rep):
        print(f"step s={rep['s']} R0={rep['norms_out']['R0']:.3e} R1={rep['norms_out']['R1']:.3e} "
              f"R2={rep['norms_out']['R2']:.3e} residual={rep['residual']:.2e}", flush=True)

    res = run(cfg, threads=args.threads, simulate=not args.no_simulate, on_step=progress)
    _write_steps_csv(out / "steps.csv", res.steps)
    _dump(out / "torus.json", res.to_json())
    for c in res.checks:
        if not c.ok:
            print(f"{'ADVISORY' if c.advisory else 'FAIL'} {c.name}: {c.lhs:.3e} > {c.rhs:.3e}")
    print("ok" if res.ok else "check failure")
    return EXIT_OK if res.ok else EXIT_CHECK


def cmd_bracket_test(args) -> int:
    from .oracles import compare_brackets

    out = Path(args.out)
    write_manifest(out, "bracket-test", None, {"pairs": args.pairs, "seed": args.seed})
    summ = compare_brackets(args.pairs, args.seed)
    summ["ok"] = summ["max_rel_error"] <= 1e-12 and summ["antisymmetry"] <= 1e-10 and summ["jacobi"] <= 1e-10
    _dump(out / "bracket.json", summ)
    print(json.dumps(summ))
    return EXIT_OK if summ["ok"] else EXIT_CHECK


def cmd_simulate(args) -> int:
    from .index_core import Truncation
    from .kam import _torus_points, normalized_perturbation, torus_profile
    from .kam import KamSchedule
    from .nls import integrate, torus_diagnostics
    from .small_divisors import sample_omega

    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    write_manifest(out, "simulate", cfg, {"torus": args.torus})
    modes = list(range(-cfg.n_trunc, cfg.n_trunc + 1))
    omega = dict(sample_omega(cfg.seed, cfg.n_trunc).V)
    sched = KamSchedule(cfg.r, cfg.mu0, cfg.eps0, 1.0, cfg.sigma, 1.0)
    w0 = sched.weights(0)
    g, _ = normalized_perturbation(cfg, Truncation(cfg.n_trunc, cfg.d_trunc, 1e-30, w0), w0)
    V = omega
    if args.torus:
        tor = json.loads(Path(args.torus).read_text(encoding="utf-8"))
        V = {int(n): float(v) for n, v in tor["Vstar"].items()}
    q0 = _torus_points(cfg.r, cfg.sigma, modes, 1, cfg.seed)[0]
    traj = integrate(g, V, cfg.eps0, q0, cfg.dt, cfg.T, cfg.n_trunc)
    traj.to_csv(out / "trajectory.csv")
    d = torus_diagnostics(traj, torus_profile(cfg.r, cfg.sigma, modes), cfg.r, cfg.sigma, omega)
    payload = d.to_json()
    payload["energy_drift"] = float(np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]))
    _dump(out / "diagnostics.json", payload)
    print(f"in_band={d.in_band} max_action_deviation={d.max_action_deviation:.3e} energy_drift={payload['energy_drift']:.3e}")
    return EXIT_OK if d.in_band else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kamnls",
        description="KAM tori for Gevrey-perturbed NLS: lemma checks, normal form iteration and simulation.",
        epilog=_defaults_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("verify-lemmas", help="run the lemma verification suite")
    s.add_argument("--sigma", default=None, help="comma-separated sigma values (default 2.5,3,4)")
    s.add_argument("--seed", type=int, default=0, help="seed for sampled frequencies (default 0)")
    s.add_argument("--out", default="out/lemmas", help="output directory")
    s.set_defaults(func=cmd_verify_lemmas)

    s = sub.add_parser("verify-dio", help="check the Diophantine condition for sampled omega")
    s.add_argument("--support", type=int, default=3, help="support bound (default 3)")
    s.add_argument("--size", type=int, default=2, help="size bound sum |l_n| (default 2)")
    s.add_argument("--gamma", type=float, default=0.05, help="Diophantine constant (default 0.05)")
    s.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    s.add_argument("--out", default="out/dio", help="output directory")
    s.set_defaults(func=cmd_verify_dio)

    s = sub.add_parser("kam-run", help="run the KAM iteration", epilog=_defaults_text(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--config", default=None, help="config file or manifest.json")
    s.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    s.add_argument("--no-simulate", action="store_true", help="skip the torus simulation")
    s.set_defaults(func=cmd_kam_run)

    s = sub.add_parser("bracket-test", help="compare the Poisson bracket with the symbolic oracle")
    s.add_argument("--pairs", type=int, default=1000, help="random pairs (default 1000)")
    s.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    s.add_argument("--out", default="out/bracket", help="output directory")
    s.set_defaults(func=cmd_bracket_test)

    s = sub.add_parser("simulate", help="integrate the truncated NLS from the torus", epilog=_defaults_text(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--config", default=None, help="config file or manifest.json")
    s.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    s.add_argument("--torus", default=None, help="torus.json from kam-run; uses its V* as multiplier")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    from .homological import ResonanceError
    from .nls import BlowupError

    try:
        with np.errstate(over="raise", invalid="raise"):
            return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ResonanceError, BlowupError, ArithmeticError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
