"""Command line front end: ``run``, ``smooth`` and ``check-grad``.

Configuration is a flat JSON object. Mesh paths are resolved relative to the
config file; ``bundled:NAME`` refers to a mesh shipped with the package.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_path, gradcheck, preshape
from .mesh import MeshError, load_msh
from .shapeopt.config import OptConfig, Rhs
from .shapeopt.descent import IterationRecord, ModelProblem, descend, snapshot_fields
from .vtk import write_vtk

log = logging.getLogger("preshape_opt")

PATH_KEYS = ("mesh", "target_mesh", "out")
RUN_KEYS = ("snapshot_every",)
CONFIG_KEYS = tuple(OptConfig.field_names()) + PATH_KEYS + RUN_KEYS

EXIT_OK, EXIT_ERROR, EXIT_LINE_SEARCH, EXIT_MAX_ITERS = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    opt: OptConfig
    mesh: Path
    target_mesh: Path | None
    out: Path
    snapshot_every: int = 0


def resolve_path(value, base):
    if value is None:
        return None
    if isinstance(value, str) and value.startswith("bundled:"):
        return data_path(value[len("bundled:"):])
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_config(path, out_override=None, require_target=True):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base = path.parent
    if "mesh" not in raw:
        raise ConfigError("config key 'mesh' is required")
    opt_args = {k: v for k, v in raw.items() if k in OptConfig.field_names()}
    try:
        opt = OptConfig(**opt_args)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid setting: {err}") from err
    mesh = resolve_path(raw["mesh"], base)
    target = resolve_path(raw.get("target_mesh"), base)
    for p in (mesh, target):
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"mesh file not found: {p}")
    if target is None and require_target:
        raise ConfigError("config key 'target_mesh' is required")
    out = Path(out_override) if out_override else resolve_path(raw.get("out", "out"), base)
    snap = int(raw.get("snapshot_every", 0))
    if snap < 0:
        raise ConfigError("snapshot_every must be non-negative")
    return RunConfig(opt, Path(mesh), Path(target) if target else None, Path(out), snap)


def write_history(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IterationRecord.columns())
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_row()])


def read_history(path):
    with open(path, newline="") as fh:
        return [IterationRecord.from_row(row) for row in csv.DictReader(fh)]


def _execute(rc: RunConfig, opt: OptConfig):
    mesh = load_msh(rc.mesh)
    target = load_msh(rc.target_mesh) if rc.target_mesh else None
    rc.out.mkdir(parents=True, exist_ok=True)
    state_holder = {}

    def callback(k, m, info):
        final = info.get("final", False)
        periodic = rc.snapshot_every > 0 and k % rc.snapshot_every == 0
        if not (final or periodic):
            return
        problem = state_holder.get("problem")
        state = problem.state if problem else preshape.PreShapeState.from_mesh(m)
        fields = snapshot_fields(m, state, info.get("y"), info.get("p"), info.get("mu"))
        write_vtk(rc.out / f"mesh_{k:04d}.vtk", m, fields)

    problem = ModelProblem(mesh, target, opt)
    state_holder["problem"] = problem
    result = descend(mesh, target, opt, callback=callback, problem=problem)
    write_history(rc.out / "history.csv", result.records)
    return mesh, result


def _exit_code(result):
    if result.status == "converged":
        return EXIT_OK
    if result.status == "line_search_failure":
        print(f"line search failed: {result.message}", file=sys.stderr)
        return EXIT_LINE_SEARCH
    if result.status == "max_iters":
        print("iteration limit reached before the stopping rule was met", file=sys.stderr)
        return EXIT_MAX_ITERS
    print(f"run failed: {result.message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_run(args):
    rc = load_config(args.config, args.out)
    _, result = _execute(rc, rc.opt)
    last = result.records[-1]
    print(f"{result.status} after {last.iter} iterations: J_rel={last.J_rel:.3e} "
          f"Jtau_rel={last.Jtau_rel:.3e} Jvol_rel={last.Jvol_rel:.3e} mesh_dist={last.mesh_dist:.4e}")
    return _exit_code(result)


def cmd_smooth(args):
    rc = load_config(args.config, args.out, require_target=False)
    opt = rc.opt.with_(rhs=Rhs.SMOOTH_ONLY)
    initial = load_msh(rc.mesh)
    state0 = preshape.PreShapeState.from_mesh(initial)
    targets = preshape.TargetSpec(opt.q_shape, opt.q_vol)
    r0 = float(np.max(np.abs(preshape.volume_residual(initial, state0, targets))))
    mesh, result = _execute(rc, opt)
    r1 = float(np.max(np.abs(preshape.volume_residual(mesh, result.problem.state, targets))))
    last = result.records[-1]
    print(f"{result.status} after {last.iter} iterations: Jvol_rel={last.Jvol_rel:.3e}")
    print(f"initial max residual: {r0:.6e}")
    print(f"final max residual: {r1:.6e}")
    return _exit_code(result)


def cmd_check_grad(args):
    rc = load_config(args.config, None, require_target=False)
    mesh = load_msh(rc.mesh)
    target = load_msh(rc.target_mesh) if rc.target_mesh else None
    suites = gradcheck.run_all(mesh, target)
    failed = []
    for s in suites:
        if args.tol is not None:
            s.tolerance = args.tol
        status = "ok" if s.passed else "FAIL"
        print(f"{s.name:18s} max rel error {s.max_rel_error:.3e} (tol {s.tolerance:.1e}, "
              f"{s.directions} directions) {status}")
        if not s.passed:
            failed.append(s.name)
    if failed:
        print(f"failing suites: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="preshape-opt",
                                     description="Shape optimization with pre-shape mesh regularization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (("run", cmd_run, "run the shape optimization"),
                              ("smooth", cmd_smooth, "volume mesh smoothing only"),
                              ("check-grad", cmd_check_grad, "finite-difference derivative checks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="flat JSON configuration file")
        if name == "check-grad":
            p.add_argument("--tol", type=float, default=None, help="override every suite tolerance")
        else:
            p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
