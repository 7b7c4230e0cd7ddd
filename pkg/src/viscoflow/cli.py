"""Command-line entry point: `run` a benchmark or custom case, `verify` the
oracle suites."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from viscoflow import io, problems
from viscoflow.assembly import Discretization, ProblemData
from viscoflow.errors import InvalidArgumentError, StepFailure
from viscoflow.linalg import dump_matrix_market
from viscoflow.mesh import build_crossed_rect
from viscoflow.rheology import ModelParams
from viscoflow.solver import SSNConfig, ssn_solve

PRESETS = {
    "reservoir": dict(model="hb", p=1.75, mu=1.0, tau_s=10.0, gamma=1e3, nx=32),
    "cavity": dict(model="hb", p=1.75, mu=1.0, tau_s=2.5, gamma=1e3, nx=32),
    "channel": dict(model="casson", p=2.0, mu=1.0, tau_s=2.5, gamma=1e3, nx=8),
    "custom": dict(model="hb", p=2.0, mu=1.0, tau_s=1.0, gamma=1e3, nx=16),
}
RUN_KEYS = ("case", "nx", "p", "mu", "tau_s", "gamma", "tol", "max_iters", "no_projection",
            "init", "out", "model", "no_vtk", "no_csv", "no_json", "no_svg", "dump_matrix")


class UsageError(Exception):
    pass


def _vector(text):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 2:
        raise InvalidArgumentError(f"expected two components, got {text!r}")
    return np.array(vals)


def _constant(vec):
    return lambda x: np.broadcast_to(vec, x.shape).copy()


def custom_problem(cfg, nx):
    """Crossed rectangle with constant force and per-side constant velocities.

    Keys: bounds = x0 x1 y0 y1 (required), force = fx fy, velocity_<side> = ux uy
    for side in left/right/bottom/top, stress_free = side[,side].
    """
    if "bounds" not in cfg:
        raise UsageError("--case custom needs a --config file with a 'bounds' entry")
    b = [float(v) for v in cfg["bounds"].replace(",", " ").split()]
    if len(b) != 4 or b[1] <= b[0] or b[3] <= b[2]:
        raise InvalidArgumentError("bounds must be x0 x1 y0 y1 with x0 < x1, y0 < y1")
    aspect = (b[3] - b[2]) / (b[1] - b[0])
    mesh = build_crossed_rect(nx, max(1, round(nx * aspect)), bounds=tuple(b))
    velocity = {side: _constant(_vector(cfg[f"velocity_{side}"]))
                for side in ("left", "right", "bottom", "top") if f"velocity_{side}" in cfg}
    force = _constant(_vector(cfg["force"])) if "force" in cfg else None
    free = frozenset(s.strip() for s in cfg.get("stress_free", "").split(",") if s.strip())
    return mesh, ProblemData(f=force, velocity=velocity, stress_free=free, name="custom")


def _build_parser():
    ap = argparse.ArgumentParser(prog="viscoflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a benchmark or custom case")
    run.add_argument("--config", help="flat key = value file; flags override it")
    run.add_argument("--case", choices=sorted(PRESETS))
    run.add_argument("--nx", type=int)
    run.add_argument("--model", choices=["hb", "carreau", "casson"])
    run.add_argument("--p", type=float)
    run.add_argument("--mu", type=float)
    run.add_argument("--tau-s", dest="tau_s", type=float)
    run.add_argument("--gamma", type=float)
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iters", dest="max_iters", type=int)
    run.add_argument("--no-projection", dest="no_projection", action="store_const", const=True)
    run.add_argument("--init", choices=["stokes", "zero"])
    run.add_argument("--out", help="output directory")
    run.add_argument("--no-vtk", dest="no_vtk", action="store_const", const=True)
    run.add_argument("--no-csv", dest="no_csv", action="store_const", const=True)
    run.add_argument("--no-json", dest="no_json", action="store_const", const=True)
    run.add_argument("--no-svg", dest="no_svg", action="store_const", const=True)
    run.add_argument("--dump-matrix", dest="dump_matrix", action="store_const", const=True,
                     help="write the final Jacobian in MatrixMarket format")
    run.add_argument("-q", "--quiet", action="store_true")

    ver = sub.add_parser("verify", help="run the oracle and property suites")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--quick", action="store_true", help="smaller samples")
    return ap


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def resolve_run_config(args):
    """Merge preset, config file and flags; returns (settings, raw config)."""
    cfg = io.read_config(args.config) if args.config else {}
    case = args.case or cfg.get("case")
    if case is None:
        raise UsageError("run needs --case (or 'case' in --config)")
    if case not in PRESETS:
        raise UsageError(f"unknown case {case!r}")
    s = dict(PRESETS[case], tol=1e-5, max_iters=50, no_projection=False, init="stokes",
             out=f"out_{case}", no_vtk=False, no_csv=False, no_json=False, no_svg=False,
             dump_matrix=False, case=case)
    casts = {"nx": int, "max_iters": int, "p": float, "mu": float, "tau_s": float,
             "gamma": float, "tol": float}
    for key, val in cfg.items():
        if key in s and key != "case":
            if isinstance(s[key], bool):
                if val.lower() not in _BOOL:
                    raise InvalidArgumentError(f"config {key}: not a boolean: {val!r}")
                s[key] = _BOOL[val.lower()]
            else:
                s[key] = casts.get(key, str)(val)
    for key in RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    return s, cfg


def run(args, stdout=None):
    stdout = stdout or sys.stdout
    s, cfg = resolve_run_config(args)
    params = ModelParams(s["model"], s["p"], s["mu"], s["tau_s"], s["gamma"])
    config = SSNConfig(tol=s["tol"], max_iters=s["max_iters"],
                       use_projection=not s["no_projection"], init=s["init"])
    if s["case"] == "custom":
        mesh, data = custom_problem(cfg, s["nx"])
    else:
        mesh, data = problems.PRESETS[s["case"]](s["nx"])
    out = Path(s["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InvalidArgumentError(f"output directory {out} not writable: {exc}") from exc

    print(f"# case={s['case']} cells={mesh.num_cells} model={params.law.value} p={params.p:g} "
          f"mu={params.mu:g} tau_s={params.tau_s:g} gamma={params.gamma:g} tol={config.tol:g}",
          file=stdout)
    disc = Discretization(mesh, data)

    def echo(n, absolute, relative):
        if getattr(args, "quiet", False):
            return
        print(f"{n:3d} {relative:.6e}", file=stdout, flush=True)

    state, report = ssn_solve(mesh, params, data, config, disc=disc, callback=echo)
    report.parameters.update(case=s["case"], nx=s["nx"])
    stem = s["case"]
    io.write_report(report, out, stem=stem, svg=not s["no_svg"], csv_out=not s["no_csv"],
                    json_out=not s["no_json"])
    if not s["no_vtk"]:
        io.write_vtk(mesh, io.cell_fields(disc, state, params), out / f"{stem}.vtk",
                     title=f"viscoflow {stem}")
    if s["dump_matrix"]:
        dump_matrix_market(disc.jacobian(params, state, config.use_projection),
                           out / f"{stem}_jacobian.mtx")
    status = "converged" if report.converged else "NOT converged"
    print(f"# {status} after {report.iterations} iterations; active cells "
          f"{report.active_cells}/{mesh.num_cells} ({report.active_fraction:.4f})", file=stdout)
    return 0 if report.converged else 2


def verify(args, stdout=None):
    stdout = stdout or sys.stdout
    from viscoflow import verify as suites
    results = suites.run_all(seed=args.seed, quick=args.quick)
    return suites.print_tap(results, stdout)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    try:
        if args.command == "run":
            return run(args)
        return verify(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InvalidArgumentError, StepFailure, OSError) as exc:
        print(f"viscoflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
