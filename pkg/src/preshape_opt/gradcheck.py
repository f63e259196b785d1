"""Central-difference checks of every assembled derivative against its objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, preshape
from .fixtures import unrelated_target
from .mesh import morph, shape_frames
from .shapeopt.derivative import TargetField, assemble_perimeter, assemble_shape_derivative, objective, perimeter


@dataclass
class SuiteResult:
    name: str
    max_rel_error: float
    tolerance: float
    directions: int

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance


def _central(fun, mesh, V, t):
    plus, minus = mesh.copy(), mesh.copy()
    morph(plus, t * V)
    morph(minus, -t * V)
    return (fun(plus) - fun(minus)) / (2 * t)


def _rel_errors(mesh, load_fn, fun, directions, t, floor=1e-12):
    L = load_fn(mesh)
    scale = np.abs(L).sum() or 1.0
    errs = []
    for V in directions:
        exact = float(np.sum(L * V))
        fd = _central(fun, mesh, V, t)
        if abs(exact) < floor * scale:
            continue
        errs.append(abs(exact - fd) / abs(exact))
    return errs


def _random_field(rng, mesh, support, size=1.0):
    V = np.zeros((mesh.n_vertices, 2))
    V[support] = rng.uniform(-size, size, size=(len(support), 2))
    return V


def _min_edge(mesh):
    p = mesh.vertices[mesh.triangles]
    return float(np.min(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)))


def _perturbed(rng, mesh, support):
    """Copy of ``mesh`` with ``support`` vertices jittered by a tenth of the smallest edge."""
    work = mesh.copy()
    morph(work, _random_field(rng, work, support, 0.1 * _min_edge(mesh)))
    return work


def _interior(mesh):
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[mesh.outer_vertices] = False
    return np.flatnonzero(mask)


def _free_interior(mesh):
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[mesh.outer_vertices] = False
    mask[mesh.shape_vertices] = False
    return np.flatnonzero(mask)


def check_shape_tracking(mesh, n_dirs=10, t=1e-5, tol=0.05, seed=0, alpha=1.0):
    """Tangential fields on the shape curve against ``alpha * J_tau``."""
    rng = np.random.default_rng(seed)
    state = preshape.PreShapeState.from_mesh(mesh)
    targets = preshape.TargetSpec()
    # move away from the reference so that the tracking residual is nonzero
    work = _perturbed(rng, mesh, _interior(mesh))
    frames = shape_frames(work)
    dirs = []
    for _ in range(n_dirs):
        V = np.zeros((work.n_vertices, 2))
        c = rng.uniform(-1.0, 1.0, size=len(work.shape_loop))
        V[work.shape_loop] = c[:, None] * frames.tangent
        dirs.append(V)
    errs = _rel_errors(work, lambda m: preshape.assemble_shape_tracking_rhs(m, state, targets, alpha, frames),
                       lambda m: alpha * preshape.j_tau(m, state, targets), dirs, t)
    return SuiteResult("shape_tracking", max(errs, default=0.0), tol, len(errs))


def check_volume_tracking(mesh, n_dirs=20, t=1e-6, tol=0.01, seed=1, alpha=1.0):
    """Fields vanishing on the curve and the outer boundary against ``alpha * J_vol``."""
    rng = np.random.default_rng(seed)
    state = preshape.PreShapeState.from_mesh(mesh)
    targets = preshape.TargetSpec()
    free = _free_interior(mesh)
    if len(free) == 0:
        raise ValueError("mesh has no vertices off the curve and the outer boundary")
    work = _perturbed(rng, mesh, free)
    dirs = [_random_field(rng, work, free) for _ in range(n_dirs)]
    errs = _rel_errors(work, lambda m: preshape.assemble_volume_tracking_rhs(m, state, targets, alpha),
                       lambda m: alpha * preshape.j_vol(m, state, targets), dirs, t)
    return SuiteResult("volume_tracking", max(errs, default=0.0), tol, len(errs))


def check_shape_derivative(mesh, target_mesh=None, n_dirs=10, t=1e-5, tol=0.02, seed=2, r1=-1000.0, r2=1000.0):
    """Derivative of the tracking objective (with state re-solve) along interior fields.

    Without ``target_mesh`` the target state lives on an unrelated structured
    mesh of the same rectangle, so that quadrature points do not sit on the
    kinks of the interpolated target.
    """
    rng = np.random.default_rng(seed)
    if target_mesh is None:
        target_mesh = unrelated_target(mesh)
    target = TargetField(target_mesh, r1, r2)

    def J(m):
        y = fem.solve_poisson(m, r1, r2, tol=1e-13)
        yb, _ = target.at_quad(m)
        return objective(m, y, yb, 0.0)

    def load(m):
        y = fem.solve_poisson(m, r1, r2, tol=1e-13)
        yb, gyb = target.at_quad(m)
        p = fem.solve_adjoint(m, y, yb, tol=1e-13)
        return assemble_shape_derivative(m, y, yb, gyb, p, r1, r2)

    dirs = [_random_field(rng, mesh, _interior(mesh), 0.1) for _ in range(n_dirs)]
    errs = _rel_errors(mesh, load, J, dirs, t)
    return SuiteResult("shape_derivative", max(errs, default=0.0), tol, len(errs))


def check_perimeter(mesh, n_dirs=10, t=1e-6, tol=0.01, seed=3, nu=1.0):
    rng = np.random.default_rng(seed)
    dirs = [_random_field(rng, mesh, _interior(mesh)) for _ in range(n_dirs)]
    errs = _rel_errors(mesh, lambda m: assemble_perimeter(m, nu), lambda m: nu * perimeter(m), dirs, t)
    return SuiteResult("perimeter", max(errs, default=0.0), tol, len(errs))


def run_all(mesh, target_mesh=None, tol_scale=1.0):
    """All suites on one mesh; tolerances multiplied by ``tol_scale``."""
    suites = [
        check_shape_tracking(mesh),
        check_volume_tracking(mesh),
        check_shape_derivative(mesh, target_mesh),
        check_perimeter(mesh),
    ]
    for s in suites:
        s.tolerance *= tol_scale
    return suites
