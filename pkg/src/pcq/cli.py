"""Command line runner: ``pcq <subcommand> --config <path> --out <dir>``.

Exit codes: 0 success, 2 the run finished but a verification verdict is
false, 1 the run could not complete (bad config, solver failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .config import ExperimentConfig
from .exceptions import NotStationaryError, PCQError, SolverError
from .mesh import inner_l2, norms
from .problem import (
    adjoint_state,
    foc_residual,
    objective,
    pontryagin_gap,
    projected_gradient,
)
from .second_order import (
    StationaryTriple,
    sample_directions,
    sigma_functional,
    soc_report,
    taylor_table,
)
from .solvers import solve_state

log = logging.getLogger("pcq")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class Run:
    """Shared state of one CLI invocation."""

    def __init__(self, args):
        self.args = args
        self.cfg = ExperimentConfig.load(args.config)
        self.spec, self.u0 = self.cfg.build(args.resolution)
        self.opt_cfg = self.cfg.optimize_config()
        self.soc_cfg = self.cfg.soc_config(args.seed)
        self.checks = self.cfg.check_options()
        self.seed = self.soc_cfg.seed
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def dump_field(self, name, g):
        self.spec.mesh.to_csv(self.path(f"{name}.csv"), g, name)

    def stationary_point(self):
        """Optimize from the configured control, or take it as given."""
        if self.cfg.stationary_point == "control":
            return self.u0, None
        u, report = projected_gradient(self.spec, self.u0, self.opt_cfg)
        write_json(self.path("optimize.json"), report.to_dict())
        if not report.converged:
            raise SolverError(f"optimizer stopped without convergence: {report.status}", report)
        return u, report

    def directions(self, count):
        """Seeded smooth random fields (not cone projected), unit L2 norm."""
        mesh = self.spec.mesh
        rng = np.random.default_rng(self.seed)
        K = mesh.neumann_stiffness
        dinv = 1.0 / K.diagonal()
        out = []
        for _ in range(int(count)):
            g = rng.standard_normal(mesh.n_nodes)
            g = g - (2.0 / 3.0) * dinv * (K @ g)
            out.append(g / norms(mesh, g)[0])
        return out


def cmd_solve(run):
    spec = run.spec
    y, rep = solve_state(spec, run.u0, spec.state_cfg)
    run.dump_field("state", y)
    run.dump_field("control", run.u0)
    l2, h1, linf = norms(spec.mesh, y)
    write_json(run.path("report.json"), {
        "subcommand": "solve",
        "solve": rep.to_dict(),
        "state_norms": {"L2": l2, "H1_semi": h1, "Linf": linf},
        "objective": objective(spec, run.u0, y),
    })
    if not rep.converged:
        log.error("state solver did not converge: %s", rep.to_dict())
        return EXIT_ERROR
    return EXIT_OK


def cmd_optimize(run):
    spec = run.spec
    u, rep = projected_gradient(spec, run.u0, run.opt_cfg)
    y, phi = adjoint_state(spec, u)
    for name, g in (("control", u), ("state", y), ("adjoint", phi)):
        run.dump_field(name, g)
    payload = {"subcommand": "optimize", "objective": objective(spec, u, y), **rep.to_dict()}
    write_json(run.path("report.json"), payload)
    if not rep.converged:
        log.error("optimizer stopped: %s", rep.status)
        return EXIT_ERROR
    return EXIT_OK


def cmd_check_foc(run):
    spec = run.spec
    u, _ = run.stationary_point()
    y, phi = adjoint_state(spec, u)
    d = phi + spec.nu * u
    res = foc_residual(spec, u, d)
    gap = pontryagin_gap(spec, u, phi)
    scale = max(1.0, spec.nu * float(np.max(u**2)), float(np.max(np.abs(phi * u))))
    foc_ok = res <= max(run.opt_cfg.tol, 1e-12)
    gap_ok = gap <= run.checks["pontryagin_tol"] * scale
    run.dump_field("control", u)
    run.dump_field("gradient", d)
    write_json(run.path("report.json"), {
        "subcommand": "check-foc",
        "foc_residual": res,
        "pontryagin_gap": gap,
        "pontryagin_scale": scale,
        "verdicts": {"foc_ok": foc_ok, "pontryagin_ok": gap_ok},
    })
    return EXIT_OK if foc_ok and gap_ok else EXIT_VERDICT


def cmd_check_soc(run):
    spec = run.spec
    u, _ = run.stationary_point()
    triple = StationaryTriple.from_control(spec, u)
    try:
        rep = soc_report(spec, triple, run.soc_cfg)
    except NotStationaryError as exc:
        write_json(run.path("report.json"), {
            "subcommand": "check-soc", "error": str(exc), "foc_residual": exc.foc_residual,
        })
        print(f"pcq: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rep.write_tables(run.out)
    payload = {"subcommand": "check-soc", **rep.to_dict()}
    write_json(run.path("report.json"), payload)
    return EXIT_OK if rep.snc_ok else EXIT_VERDICT


def cmd_sigma(run):
    spec = run.spec
    u, _ = run.stationary_point()
    y, rep = solve_state(spec, u, spec.state_cfg)
    if not rep.converged:
        raise SolverError("state solver did not converge", rep)
    value, table = sigma_functional(spec, y, run.soc_cfg)
    write_table(run.path("sigma_sweep.csv"), ["r", "value", "admissible"],
                [(r, v, int(a)) for r, v, a in table])
    write_json(run.path("report.json"), {"subcommand": "sigma", "sigma": value, "table": table})
    return EXIT_OK


def cmd_taylor_check(run):
    spec = run.spec
    u, _ = run.stationary_point()
    triple = StationaryTriple.from_control(spec, u)
    scale = max(1.0, abs(objective(spec, u, triple.y_bar)))
    rows = []
    dirs, _ = sample_directions(spec, triple, run.soc_cfg)
    dirs = dirs or run.directions(1)
    for i, h in enumerate(dirs[: int(run.checks["directions"])]):
        for s, lhs, rhs, r in taylor_table(spec, triple, h, run.checks["taylor_sizes"]):
            rows.append((i, s, lhs, rhs, r))
    write_table(run.path("taylor.csv"), ["direction", "size", "lhs", "rhs", "residual"], rows)
    worst = max(r[-1] for r in rows)
    ok = worst <= run.checks["taylor_tol"] * scale
    write_json(run.path("report.json"), {
        "subcommand": "taylor-check", "foc_residual": triple.foc_residual,
        "max_residual": worst, "scale": scale, "verdicts": {"taylor_ok": ok},
        "table": rows,
    })
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_gradient_check(run):
    spec = run.spec
    mesh = spec.mesh
    u = run.u0
    y, phi = adjoint_state(spec, u)
    d = phi + spec.nu * u
    rows, best = [], []
    for i, h in enumerate(run.directions(run.checks["directions"])):
        exact = inner_l2(mesh, d, h)
        errs = []
        for s in run.checks["fd_steps"]:
            fd = (objective(spec, u + s * h) - objective(spec, u - s * h)) / (2 * s)
            err = abs(fd - exact) / max(abs(exact), 1e-14)
            errs.append(err)
            rows.append((i, s, fd, exact, err))
        best.append(min(errs))
    write_table(run.path("gradient_check.csv"), ["direction", "step", "fd", "adjoint", "rel_error"], rows)
    ok = max(best) <= run.checks["gradient_tol"]
    write_json(run.path("report.json"), {
        "subcommand": "gradient-check", "worst_best_error": max(best),
        "verdicts": {"gradient_ok": ok}, "table": rows,
    })
    return EXIT_OK if ok else EXIT_VERDICT


COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "check-foc": cmd_check_foc,
    "check-soc": cmd_check_soc,
    "sigma": cmd_sigma,
    "taylor-check": cmd_taylor_check,
    "gradient-check": cmd_gradient_check,
}


def build_parser():
    p = argparse.ArgumentParser(prog="pcq", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p.add_argument("--resolution", type=int, default=None, help="override cells per axis")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(name)s %(levelname)s %(message)s")
    try:
        run = Run(args)
        return COMMANDS[args.subcommand](run)
    except SolverError as exc:
        print(f"pcq: {exc}", file=sys.stderr)
        if exc.report is not None and hasattr(exc.report, "to_dict"):
            summary = {k: v for k, v in exc.report.to_dict().items() if not isinstance(v, list)}
            print(json.dumps(_jsonable(summary), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except PCQError as exc:
        print(f"pcq: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
