"""Command-line front end.

Exit status: 0 on success, 2 on numerical failure (including non-converged
orbits and failed checks), 3 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bov, invariants
from .errors import ConfigError, NumericalError, StarkZeemanError, UnsupportedError
from .flow import integrate_hamiltonian, integrate_newton
from .ksgeom import PhasePoint
from .ksham import KSRegConfig, integrate_ks, ks_initial_state
from .loops import Loop, read_loop_csv, write_loop_csv
from .moser import integrate_moser, moser_encode
from .systems import builtin_system, critical_energy, hamiltonian, load_system

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False)


def _write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_system(tokens):
    """`name|path [key=value ...]`; overrides apply on top of the file's params."""
    if not tokens:
        raise ConfigError("--system is required")
    spec, *rest = tokens
    overrides = {}
    for item in rest:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"system overrides must be key=value, got {item!r}")
        overrides[key] = _parse_value(val)
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ConfigError(f"system file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid system JSON: {exc}") from None
        params = dict(data.get("params", {}))
        params.update(overrides)
        return builtin_system(data.get("name", ""), params)
    if overrides:
        return builtin_system(spec, overrides)
    return load_system(spec)


def _positive(name, value):
    if value is not None and not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _state(args, sys_):
    q0 = np.array(args.q0, dtype=float)
    v0 = np.array(args.v0, dtype=float)
    if not sys_.domain(q0[None])[0]:
        raise ConfigError(f"q0 = {q0.tolist()} lies outside the system's domain")
    return q0, v0


def _eval_grid(span, samples):
    return np.linspace(span[0], span[1], samples) if samples else None


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    s = resolve_system(args.system)
    _positive("tol", args.tol)
    q0, v0 = _state(args, s)
    t_eval = _eval_grid(args.tspan, args.samples)
    if args.gauge == "newton":
        traj = integrate_newton(s, q0, v0, args.tspan, tol=args.tol, t_eval=t_eval)
    else:
        p0 = v0 + s.vector_potential(q0) if args.gauge == "coupled" else v0
        traj = integrate_hamiltonian(s, PhasePoint(q0, p0), args.gauge, args.tspan, tol=args.tol,
                                     t_eval=t_eval)
    if args.out:
        traj.write_csv(args.out)
    return EXIT_OK, {"system": s.name, "gauge": args.gauge, **traj.summary()}


def _canonical_start(args, s):
    q0, v0 = _state(args, s)
    p0 = v0 + s.vector_potential(q0)
    c = float(hamiltonian(s, 0.0, PhasePoint(q0, p0), "coupled"))
    return q0, p0, c


def cmd_ks(args):
    s = resolve_system(args.system)
    _positive("tol", args.tol)
    q0, p0, c = _canonical_start(args, s)
    z0, w0 = ks_initial_state(q0, p0)
    traj = integrate_ks(s, KSRegConfig(c), z0, w0, args.span, tol=args.tol,
                        t_eval=_eval_grid(args.span, args.samples))
    if args.out:
        traj.write_csv(args.out)
    return EXIT_OK, {"system": s.name, "energy": c, **traj.summary()}


def cmd_moser(args):
    s = resolve_system(args.system)
    _positive("tol", args.tol)
    q0, p0, c = _canonical_start(args, s)
    traj = integrate_moser(s, c, moser_encode(PhasePoint(q0, p0)), args.span, tol=args.tol,
                           t_eval=_eval_grid(args.span, args.samples))
    if args.out:
        traj.write_csv(args.out)
    out = {"system": s.name, "energy": c, **traj.summary()}
    if not s.time_dependent:
        out["critical_energy"] = critical_energy(s)
    return EXIT_OK, out


def _orbit_options(args):
    for name in ("gtol", "rtol"):
        _positive(name, getattr(args, name))
    if args.max_iter < 1:
        raise ConfigError("max-iter must be at least 1")
    if args.penalty < 0:
        raise ConfigError("penalty must be non-negative")
    return bov.SolverOptions(gtol=args.gtol, rtol=args.rtol, max_iter=args.max_iter,
                             penalty=args.penalty)


def cmd_find_orbit(args):
    s = resolve_system(args.system)
    if args.samples < 8 or args.samples % 2:
        raise ConfigError("samples must be even and at least 8")
    opts = _orbit_options(args)
    rng = np.random.default_rng(args.rng_seed)
    seed = bov.parse_seed(args.seed, args.samples, rng)
    cp = bov.find_critical_point(s, seed, opts)
    report = bov.verify_generalized_solution(s, cp) if cp.converged else None
    out = {
        "system": s.name,
        "seed": args.seed,
        "samples": args.samples,
        "twist": cp.loop.twist,
        "summary": cp.summary(),
        "verification": report.as_dict() if report else None,
    }
    if args.out:
        _write_json(args.out, {**out, "loop": cp.loop.samples})
        write_loop_csv(Path(args.out).with_suffix(".q.csv"), cp.q_loop, kind="q")
    return (EXIT_OK if cp.converged else EXIT_NUMERICAL), out


def _read_orbit(path, twist):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"loop file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        return Loop(np.array(data["loop"], dtype=float), data.get("twist", 0.0) if twist is None else twist)
    return read_loop_csv(path, 0.0 if twist is None else twist)


def cmd_verify(args):
    s = resolve_system(args.system)
    _positive("tol", args.tol)
    z = _read_orbit(args.loop, args.twist)
    report = bov.verify_generalized_solution(s, z, tol=args.tol)
    leg = bov.legendre_transform(s, z)
    out = {"system": s.name, **report.as_dict(),
           "legendre": {"residual": leg.residual, "identity_gap": leg.identity_gap,
                        "hamiltonian": leg.hamiltonian_value}}
    if args.out:
        _write_json(args.out, out)
    return (EXIT_OK if report.passed else EXIT_NUMERICAL), out


def cmd_check_invariants(args):
    names = sorted(invariants.SUITES) if args.module == "all" else [args.module]
    rng = np.random.default_rng(args.rng_seed)
    results = {}
    passed = total = 0
    for name in names:
        res = invariants.run_suite(name, rng)
        results[name] = [{"name": r.name, "passed": r.passed, "value": r.value, "threshold": r.threshold}
                         for r in res]
        passed += sum(r.passed for r in res)
        total += len(res)
    out = {"passed": passed, "total": total, "suites": results}
    return (EXIT_OK if passed == total else EXIT_NUMERICAL), out


def _workers() -> int:
    env = os.environ.get("STARKZEEMAN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"STARKZEEMAN_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("STARKZEEMAN_THREADS must be at least 1")
        return n
    return min(8, os.cpu_count() or 1)


def _isolated(argv):
    try:
        return run(argv)
    except Exception as exc:  # one bad job must not take down the others
        return EXIT_NUMERICAL, {"error": str(exc), "kind": type(exc).__name__}


def cmd_sweep(args):
    path = Path(args.jobs)
    if not path.exists():
        raise ConfigError(f"jobs file not found: {path}")
    try:
        jobs = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid jobs JSON: {exc}") from None
    if not isinstance(jobs, list) or not jobs:
        raise ConfigError("the jobs file must hold a non-empty list of argument lists")
    for job in jobs:
        if not isinstance(job, list) or not job or job[0] == "sweep":
            raise ConfigError(f"each job is a non-empty argument list without nested sweeps: {job!r}")
    with ThreadPoolExecutor(max_workers=min(_workers(), len(jobs))) as pool:
        results = list(pool.map(_isolated, [[str(a) for a in job] for job in jobs]))
    code = max(c for c, _ in results)
    out = {"jobs": [{"argv": job, "exit": c, "result": r} for job, (c, r) in zip(jobs, results)],
           "exit": code}
    if args.out:
        _write_json(args.out, out)
    return code, out


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so that bad flags map to the config exit code."""

    def error(self, message):
        raise ConfigError(message)


def _add_system(p):
    p.add_argument("--system", nargs="+", metavar="SPEC",
                   help="builtin name or JSON file, followed by key=value parameter overrides")


def _add_initial(p):
    p.add_argument("--q0", nargs=3, type=float, default=[0.5, 0.0, 0.0])
    p.add_argument("--v0", nargs=3, type=float, default=[0.0, 1.0, 0.0])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--samples", type=int, default=201, help="output samples (0: solver steps)")
    p.add_argument("--out", help="CSV output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="starkzeeman", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the Newtonian or Hamiltonian equations")
    _add_system(p)
    _add_initial(p)
    p.add_argument("--tspan", nargs=2, type=float, default=[0.0, 1.0])
    p.add_argument("--gauge", choices=["newton", "coupled", "twisted"], default="newton")
    p.set_defaults(func=cmd_simulate)

    for name, func in (("ks", cmd_ks), ("moser", cmd_moser)):
        p = sub.add_parser(name, help=f"integrate the {name.upper() if name == 'ks' else 'Moser'}-regularized flow")
        _add_system(p)
        _add_initial(p)
        p.add_argument("--span", nargs=2, type=float, default=[0.0, 10.0], help="fictitious time span")
        p.set_defaults(func=func)

    p = sub.add_parser("find-orbit", help="search for a critical loop of the regularized functional")
    _add_system(p)
    p.add_argument("--seed", default="circle:R=0.5,plane=1j",
                   help="circle:R=..,plane=1j|1k[,noise=..], segment:R=..[,f=..] or file:path")
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--gtol", type=float, default=1e-8)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--penalty", type=float, default=1.0, help="weight of the <z', iz>^2 penalty (0: off)")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", help="JSON output path; the q-loop goes next to it as .q.csv")
    p.set_defaults(func=cmd_find_orbit)

    p = sub.add_parser("verify", help="check a loop against the generalized-solution conditions")
    _add_system(p)
    p.add_argument("--loop", required=True, help="find-orbit JSON or a tau,z0..z3 CSV")
    p.add_argument("--twist", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check-invariants", help="run numerical identity suites")
    p.add_argument("--module", choices=sorted(invariants.SUITES) + ["all"], default="all")
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_check_invariants)

    p = sub.add_parser("sweep", help="run a JSON list of argument lists on a worker pool")
    p.add_argument("--jobs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def _parse(argv):
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        path = Path(ns.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            conf = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from None
        sp = parser._subparsers._group_actions[0].choices[ns.command]
        known = {a.dest for a in sp._actions}
        unknown = set(conf) - known
        if unknown:
            raise ConfigError(f"unknown config keys for {ns.command}: {sorted(unknown)}")
        sp.set_defaults(**conf)
        ns = parser.parse_args(argv)
    return ns


def run(argv) -> tuple[int, dict]:
    """Run one command; returns (exit status, JSON-ready result)."""
    try:
        ns = _parse(argv)
        if getattr(ns, "system", "absent") is None:
            raise ConfigError("--system is required")
        return ns.func(ns)
    except (ConfigError, UnsupportedError) as exc:
        return EXIT_CONFIG, {"error": str(exc), "kind": type(exc).__name__}
    except (NumericalError, StarkZeemanError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return EXIT_NUMERICAL, {"error": str(exc), "kind": type(exc).__name__}
    except ValueError as exc:
        return EXIT_CONFIG, {"error": str(exc), "kind": type(exc).__name__}


def main(argv=None) -> int:
    code, out = run(sys.argv[1:] if argv is None else list(argv))
    if "error" in out and len(out) == 2:
        print(f"starkzeeman: {out['kind']}: {out['error']}", file=sys.stderr)
    else:
        print(dumps(out))
    return code


if __name__ == "__main__":
    sys.exit(main())
