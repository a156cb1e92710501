"""Command-line front end: ``simulate``, ``sweep``, ``compare`` and ``check``.

Trajectories are written as CSV (``t,x0,...,x{n-1},mode``) with an events
sidecar, or as a single JSON document. Floats are printed with ``repr`` so a
file read back reproduces the samples exactly.

Exit codes: 0 success, 1 bad input, 2 integration failure (whatever was
integrated before the failure is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .integrator import (
    EventKind,
    IntegrationError,
    Mode,
    SolverConfig,
    Trajectory,
    UnsupportedModelError,
    Event,
    integrate_ap,
    integrate_filippov,
    trajectory_distance,
)
from .models import MODELS, LoadChangeScenario, build_model, read_param_file

log = logging.getLogger("nonsmooth")

EXIT_OK, EXIT_BAD_SPEC, EXIT_INTEGRATION = 0, 1, 2
SOLVERS = ("filippov", "gly", "ap")
_MODE_BY_TAG = {m.value: m for m in Mode}


class SpecError(ValueError):
    pass


@dataclass
class RunSpec:
    model: str
    params: dict
    x0: tuple
    t0: float
    t1: float
    solver: str = "filippov"
    eps: tuple = ()
    cfg: SolverConfig = field(default_factory=SolverConfig)
    out: Optional[Path] = None
    fmt: str = "csv"

    def validate(self):
        if self.model not in MODELS:
            raise SpecError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.solver not in SOLVERS:
            raise SpecError(f"unknown solver {self.solver!r}")
        if self.t1 < self.t0:
            raise SpecError(f"t1={self.t1} precedes t0={self.t0}")
        if self.solver == "ap" and not self.eps:
            raise SpecError("solver ap needs --eps")
        if self.fmt not in ("csv", "json"):
            raise SpecError(f"unknown format {self.fmt!r}")


# --------------------------------------------------------------------------
# trajectory files
# --------------------------------------------------------------------------

def _f(v) -> str:
    return repr(float(v))


def events_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".events" + path.suffix)


def write_trajectory_csv(tr: Trajectory, path) -> None:
    n = tr.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + ["mode"])
        for t, x, m in zip(tr.t, tr.x, tr.modes):
            w.writerow([_f(t)] + [_f(v) for v in x] + [m.value])
    with open(events_path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "kind"] + [f"x{i}" for i in range(n)])
        for e in tr.events:
            w.writerow([_f(e.t), e.kind.value] + [_f(v) for v in e.state])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t" or header[-1] != "mode":
        raise ValueError(f"{path}: unexpected header {header}")
    t = [float(r[0]) for r in body]
    x = [[float(v) for v in r[1:-1]] for r in body]
    modes = [_MODE_BY_TAG[r[-1]] for r in body]
    events = []
    ev = events_path(path)
    if ev.exists():
        with open(ev, newline="") as fh:
            for r in list(csv.reader(fh))[1:]:
                events.append(Event(float(r[0]), EventKind(r[1]), np.array([float(v) for v in r[2:]])))
    return Trajectory(np.array(t), np.array(x).reshape(len(t), len(header) - 2), modes, events)


def trajectory_to_dict(tr: Trajectory) -> dict:
    return {
        "t": [float(v) for v in tr.t],
        "x": tr.x.tolist(),
        "mode": [m.value for m in tr.modes],
        "events": [{"t": float(e.t), "kind": e.kind.value, "x": np.asarray(e.state).tolist()}
                   for e in tr.events],
    }


def write_trajectory(tr: Trajectory, path, fmt: str) -> None:
    if fmt == "csv":
        write_trajectory_csv(tr, path)
    else:
        # json floats are shortest round-trip reprs already
        Path(path).write_text(json.dumps(trajectory_to_dict(tr), indent=1) + "\n")


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _floats(text: str, what: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise SpecError(f"bad {what}: {text!r}") from None


def _params(args) -> dict:
    record = {}
    if getattr(args, "params", None):
        record.update(read_param_file(args.params))
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise SpecError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        record[k.strip()] = v.strip()
    return record


def _config(args) -> SolverConfig:
    kw = {}
    for name in ("rel_tol", "abs_tol", "max_step", "sample_dt"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def _x0(args, model: str, dim: int) -> tuple:
    if args.x0 is not None:
        x0 = _floats(args.x0, "--x0")
    elif MODELS[model].default_x0 is not None:
        x0 = tuple(MODELS[model].default_x0)
    else:
        raise SpecError(f"model {model!r} has no default initial state; pass --x0")
    if len(x0) != dim:
        raise SpecError(f"--x0 has {len(x0)} entries, model {model!r} has dimension {dim}")
    return x0


def spec_from_args(args) -> tuple[RunSpec, object]:
    if args.model not in MODELS:
        raise SpecError(f"unknown model {args.model!r}; choose from {', '.join(MODELS)}")
    params = _params(args)
    system = build_model(args.model, params)
    spec = RunSpec(
        model=args.model,
        params=params,
        x0=_x0(args, args.model, system.dimension),
        t0=args.t0,
        t1=args.t1,
        solver=args.solver,
        eps=_floats(args.eps, "--eps") if args.eps else (),
        cfg=_config(args),
        out=Path(args.out) if getattr(args, "out", None) else None,
        fmt=getattr(args, "format", "csv"),
    )
    spec.validate()
    return spec, system


def _eps_path(out: Path, eps: float) -> Path:
    return out.with_name(f"{out.stem}_eps{eps!r}{out.suffix}")


def _emit(obj, out: Optional[Path]):
    text = json.dumps(obj, indent=1) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec, system = spec_from_args(args)
    if spec.out is None:
        raise SpecError("simulate needs --out")
    if spec.solver == "ap":
        try:
            res = integrate_ap(system, spec.x0, spec.t0, spec.t1, spec.eps, spec.cfg,
                               continuation=args.continuation)
        except IntegrationError as err:
            if err.partial is not None:
                write_trajectory(err.partial, _eps_path(spec.out, err.eps), spec.fmt)
            log.error("integration failed at eps=%s, t=%s: %s", err.eps, err.t, err)
            return EXIT_INTEGRATION
        for e, tr in zip(res.eps, res.trajectories):
            write_trajectory(tr, _eps_path(spec.out, e), spec.fmt)
        report = res.report()
        report["files"] = [str(_eps_path(spec.out, e)) for e in res.eps]
        _emit(report, spec.out.with_name(spec.out.stem + "_report.json"))
        return EXIT_OK
    try:
        tr = integrate_filippov(system, spec.x0, spec.t0, spec.t1, spec.cfg, definition=spec.solver)
    except IntegrationError as err:
        if err.partial is not None:
            write_trajectory(err.partial, spec.out, spec.fmt)
        log.error("integration failed at t=%s: %s", err.t, err)
        return EXIT_INTEGRATION
    write_trajectory(tr, spec.out, spec.fmt)
    return EXIT_OK


def cmd_compare(args) -> int:
    spec, system = spec_from_args(args)
    if not spec.eps:
        raise SpecError("compare needs --eps")
    if spec.solver == "ap":
        raise SpecError("compare takes the event-driven solver as reference; use filippov or gly")
    grid = args.grid or max((spec.t1 - spec.t0) / 1000.0, 1e-12)
    try:
        ref = integrate_filippov(system, spec.x0, spec.t0, spec.t1, spec.cfg, definition=spec.solver)
        res = integrate_ap(system, spec.x0, spec.t0, spec.t1, spec.eps, spec.cfg, grid=grid)
    except IntegrationError as err:
        log.error("integration failed at t=%s: %s", err.t, err)
        return EXIT_INTEGRATION
    to_ref = [trajectory_distance(ref, tr, grid) for tr in res.trajectories]
    report = {
        "model": spec.model,
        "reference": spec.solver,
        "eps": list(res.eps),
        "distance_to_reference": to_ref,
        "distance_consecutive": list(res.distances),
        "decreasing": all(b < a for a, b in zip(to_ref, to_ref[1:])),
        "grid": grid,
    }
    _emit(report, spec.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = _floats(args.gamma1, "--gamma1")
    if not grid:
        raise SpecError("--gamma1 needs at least one value")
    try:
        rmap = analysis.safe_load_sweep(args.a, args.c, args.M, args.gamma0, grid, args.horizon,
                                        _config(args), simulate_certified=args.simulate_certified,
                                        workers=args.workers)
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    text = rmap.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    params = _params(args)
    if args.model == "watt":
        p = build_model("watt", params).params
        out = {"model": "watt", "A": p.A, "B": p.B, "andronov_mayer": analysis.andronov_mayer(p.A, p.B)}
    elif args.model == "drilling":
        if args.gamma1 is None:
            raise SpecError("check --model drilling needs --gamma1 (and optionally --gamma0)")
        p = build_model("drilling", params).params
        try:
            scenario = LoadChangeScenario(args.gamma0, args.gamma1)
        except ValueError as exc:
            raise SpecError(str(exc)) from None
        rep = analysis.theorem_conditions(p.a, p.c, p.M_lock, scenario)
        out = {"model": "drilling", "a": p.a, "c": p.c, "M_lock": p.M_lock,
               "gamma0": scenario.gamma0, "gamma1": scenario.gamma1}
        out.update(rep.as_dict())
    else:
        raise SpecError(f"check supports the drilling and watt models, not {args.model!r}")
    _emit(out, Path(args.out) if args.out else None)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_run_args(p: argparse.ArgumentParser, solvers=SOLVERS):
    p.add_argument("--model", required=True, help=", ".join(MODELS))
    p.add_argument("--param", action="append", metavar="K=V", help="model parameter (repeatable)")
    p.add_argument("--params", metavar="FILE", help="key = value parameter file")
    p.add_argument("--x0", help="initial state v,v,...")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--solver", choices=solvers, default="filippov")
    p.add_argument("--eps", help="regularization widths v,v,... (decreasing)")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_tol_args(p)


def _add_tol_args(p: argparse.ArgumentParser):
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--max-step", dest="max_step", type=float)
    p.add_argument("--sample-dt", dest="sample_dt", type=float, help="fixed output grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonsmooth", description="Simulate discontinuous dynamical systems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one model and write the trajectory")
    _add_run_args(p)
    p.add_argument("--continuation", action="store_true",
                   help="ap only: start each eps run from the previous final state")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="distance between event-driven and regularized runs")
    _add_run_args(p, solvers=("filippov", "gly"))
    p.add_argument("--grid", type=float, help="time step of the comparison grid")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="label load levels of the drilling model")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--M", type=float, required=True, help="locking ratio")
    p.add_argument("--gamma0", type=float, default=0.0)
    p.add_argument("--gamma1", required=True, help="load levels v,v,...")
    p.add_argument("--horizon", type=float, help="default 200/c")
    p.add_argument("--workers", type=int)
    p.add_argument("--simulate-certified", action="store_true")
    p.add_argument("--out")
    _add_tol_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="stability conditions for drilling or watt parameters")
    p.add_argument("--model", required=True, choices=("drilling", "watt"))
    p.add_argument("--param", action="append", metavar="K=V")
    p.add_argument("--params", metavar="FILE")
    p.add_argument("--gamma0", type=float, default=0.0)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)
    return parser


def _glue_negative_values(argv: Sequence[str]) -> list:
    """``--x0 -0.5,1`` would read as an option; rewrite it as ``--x0=-0.5,1``."""
    out = []
    it = iter(argv)
    for a in it:
        if a in _VECTOR_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and nxt[1:2] not in ("", "-") \
                    and not nxt[1:2].isalpha():
                out.append(f"{a}={nxt}")
                continue
            out.append(a)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(a)
    return out


_VECTOR_FLAGS = ("--x0", "--eps", "--gamma1", "--t0", "--t1")


def main(argv: Optional[Sequence[str]] = None) -> int:
    # NONSMOOTH_SEED is reserved; every solver here is deterministic
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_glue_negative_values(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_SPEC
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, UnsupportedModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_SPEC


if __name__ == "__main__":
    sys.exit(main())
