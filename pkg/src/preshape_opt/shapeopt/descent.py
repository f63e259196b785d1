"""Gradient descent with pre-shape regularization and a decrease-guarded line search."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .. import fem, preshape
from ..mesh import InvertedElementsError, MeshError, geometry, morph, shape_frames
from .config import Metric, OptConfig
from .derivative import TargetField, objective, tracking_value
from .metric import h1_norm, solve_linear_elasticity, solve_p_laplacian
from .rhs import assemble_rhs

log = logging.getLogger(__name__)


class LineSearchFailure(Exception):
    pass


@dataclass
class IterationRecord:
    iter: int
    J: float
    J_rel: float
    Jtau: float
    Jtau_rel: float
    Jvol: float
    Jvol_rel: float
    grad_norm: float
    step: float
    mesh_dist: float
    halvings: int
    wall_ms: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_row(self):
        return [getattr(self, c) for c in self.columns()]

    @classmethod
    def from_row(cls, row):
        """Parse a CSV row (mapping of column name to string)."""
        ints = {"iter", "halvings"}
        return cls(**{c: int(row[c]) if c in ints else float(row[c]) for c in cls.columns()})


def mesh_distance(mesh, target_mesh):
    """Sum over shape edges of length times distance of the midpoint to the nearest target shape vertex."""
    tree = cKDTree(target_mesh.vertices[target_mesh.shape_loop])
    e = mesh.shape_edges
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    dist, _ = tree.query(0.5 * (a + b))
    return float(np.sum(np.linalg.norm(b - a, axis=1) * dist))


OBJECTIVE_FLOOR = 1e-12


def _rel(value, ref):
    if ref == 0.0:
        return 0.0 if value == 0.0 else math.inf
    return value / ref


@dataclass
class Evaluation:
    """Objective values on one mesh configuration plus the fields they needed."""

    J: float
    Jtau: float
    Jvol: float
    merit: float
    y: np.ndarray | None = None
    ybar_q: np.ndarray | None = None
    grad_ybar_q: np.ndarray | None = None


class ModelProblem:
    """Bundles the fixed ingredients of a run: reference state, targets and ``ybar``."""

    def __init__(self, mesh, target_mesh, config: OptConfig, target_field=None):
        self.config = config
        self.target_mesh = target_mesh
        self.state = preshape.PreShapeState.from_mesh(mesh)
        self.targets = preshape.TargetSpec(config.q_shape, config.q_vol)
        self.need_state = config.rhs.uses_objective or target_mesh is not None
        if target_field is not None:
            self.target = target_field
        elif target_mesh is not None:
            self.target = TargetField(target_mesh, config.r1, config.r2, tol=config.cg_tol)
        else:
            self.target = None
        if config.rhs.uses_objective and self.target is None:
            raise ValueError("a target mesh is required unless rhs is SmoothOnly")

    def evaluate(self, mesh, geo=None):
        cfg = self.config
        geo = geo or geometry(mesh)
        Jtau = preshape.j_tau(mesh, self.state, self.targets)
        Jvol = preshape.j_vol(mesh, self.state, self.targets)
        if self.target is not None:
            y = fem.solve_poisson(mesh, cfg.r1, cfg.r2, tol=cfg.cg_tol, geo=geo)
            yb, gyb = self.target.at_quad(mesh, geo)
            J = objective(mesh, y, yb, cfg.nu, geo)
        else:
            y = yb = gyb = None
            J = math.nan
        merit = cfg.weight_tau * Jtau + cfg.weight_vol * Jvol
        if cfg.rhs.uses_objective:
            merit += J
        return Evaluation(J, Jtau, Jvol, merit, y, yb, gyb)


@dataclass
class LineSearchResult:
    scale: float
    halvings: int
    evaluation: Evaluation | None


def line_search(mesh, U, merit_fn, current, max_halvings=40, geo=None, refine=True):
    """Halve the normalized step until the merit strictly decreases.

    ``U`` is scaled to unit H^1 norm; trial steps that invert a triangle or
    collapse a shape edge are rejected like non-decreasing ones. With
    ``refine`` the halving continues past the first decrease for as long as
    the merit keeps improving, and the best trial is taken. This avoids the
    zig-zag of always landing near twice the optimal step. The accepted step
    is committed to ``mesh`` in place.
    """
    norm = h1_norm(mesh, U, geo)
    if norm == 0.0:
        return LineSearchResult(0.0, 0, None)
    direction = np.asarray(U, dtype=float) / norm
    scale = 1.0
    best = None
    for halvings in range(max_halvings + 1):
        trial = mesh.copy()
        try:
            morph(trial, scale * direction)
            if np.min(trial.shape_edge_lengths()) < 1e-14:
                raise MeshError("degenerate shape edge")
            ev = merit_fn(trial)
        except (InvertedElementsError, MeshError, fem.PointOutside):
            ev = None
        improved = ev is not None and ev.merit < (current if best is None else best[2].merit)
        if improved:
            best = (trial, scale, ev, halvings)
            if not refine:
                break
        elif best is not None:
            break
        scale *= 0.5
    if best is None:
        raise LineSearchFailure(f"no decrease after {max_halvings} halvings")
    trial, scale, ev, halvings = best
    mesh.vertices = trial.vertices
    return LineSearchResult(scale, halvings, ev)


@dataclass
class DescentResult:
    records: list
    status: str              # converged, max_iters, line_search_failure, error
    message: str = ""
    error: Exception | None = None
    problem: ModelProblem | None = None

    @property
    def converged(self):
        return self.status == "converged"


def _nodal_volume_density(mesh, state):
    tri = mesh.triangles.ravel()
    n = mesh.n_vertices
    a0 = np.bincount(tri, weights=np.repeat(state.initial_areas, 3), minlength=n)
    a = np.bincount(tri, weights=np.repeat(mesh.areas(), 3), minlength=n)
    return state.g_vol * a0 / a


def snapshot_fields(mesh, state, y=None, p=None, mu=None):
    """Point data for visualization: state, adjoint, weight and both transported densities."""
    n = mesh.n_vertices
    shape_density = np.zeros(n)
    shape_density[mesh.shape_loop] = state.g_shape * preshape.surface_det(mesh, state)
    zeros = np.zeros(n)
    return {
        "y": zeros if y is None else y,
        "p": zeros if p is None else p,
        "mu": zeros if mu is None else mu,
        "gvol_density": _nodal_volume_density(mesh, state),
        "gshape_density": shape_density,
    }


def descend(mesh, target_mesh, config: OptConfig, callback=None, problem=None):
    """Run the regularized descent on ``mesh`` in place.

    Each iteration: state and adjoint solve, tangent frames, weight ``mu``,
    variant right-hand side, metric solve, line search and morph. The loop
    continues while ``(|U| > tol_abs and |U|/|U_0| > tol_rel) or J/J_0 > tol_obj``;
    the objective condition is dropped when ``J`` is not part of the run, and
    counts as met once ``J`` is at round-off level against ``1/2 int ybar^2``
    (otherwise a start that is already optimal would chase noise).

    ``callback(k, mesh, info)`` is called after every iteration with the
    fields of that iteration (``info["final"]`` marks the last call).
    """
    cfg = config
    problem = problem or ModelProblem(mesh, target_mesh, cfg)
    records = []
    ev = problem.evaluate(mesh)
    ref = ev
    j_floor = 0.0
    if ev.ybar_q is not None:
        j_floor = OBJECTIVE_FLOOR * tracking_value(mesh, np.zeros(mesh.n_vertices), ev.ybar_q)
    U0 = None
    warm = None
    consistency_scale = None
    k = 0
    status, message, error = "max_iters", "", None
    while True:
        t0 = time.perf_counter()
        info = {}
        try:
            geo = geometry(mesh)
            fields_ = {"y": ev.y, "ybar_q": ev.ybar_q, "grad_ybar_q": ev.grad_ybar_q}
            p_adj = None
            if cfg.rhs.uses_objective:
                p_adj = fem.solve_adjoint(mesh, ev.y, ev.ybar_q, tol=cfg.cg_tol, geo=geo)
                fields_["p"] = p_adj
            frames = shape_frames(mesh)
            mu = fem.solve_mu(mesh, cfg.mu_max, cfg.mu_min, tol=cfg.cg_tol, geo=geo)
            load, dirichlet, parts = assemble_rhs(mesh, problem.state, problem.targets, fields_, cfg,
                                                  frames=frames, geo=geo)
            if cfg.metric is Metric.LINEAR_ELASTICITY:
                U = solve_linear_elasticity(mesh, mu, load, dirichlet, tol=cfg.cg_tol, geo=geo)
            else:
                U, _ = solve_p_laplacian(mesh, mu, load, dirichlet, p=cfg.p, eps=cfg.epsilon,
                                         warm_start=warm, newton_tol=cfg.newton_tol,
                                         newton_max=cfg.newton_max, tol=cfg.cg_tol, geo=geo)
            info = {"y": ev.y, "p": p_adj, "mu": mu, "parts": parts, "U": U, "final": False}
        except Exception as exc:  # any failure ends the run with partial history
            log.error("iteration %d failed: %s", k, exc)
            status, message, error = "error", f"{type(exc).__name__}: {exc}", exc
            break

        gnorm = h1_norm(mesh, U, geo)
        if U0 is None:
            U0 = gnorm
            consistency_scale = float(np.linalg.norm(parts.total)) or 1.0
        _check_consistency(parts, consistency_scale)

        keep_going = gnorm > cfg.tol_abs and _rel(gnorm, U0) > cfg.tol_rel
        if cfg.rhs.uses_objective:
            keep_going = keep_going or (_rel(ev.J, ref.J) > cfg.tol_obj and ev.J > j_floor)
        rec = IterationRecord(
            iter=k, J=ev.J, J_rel=_rel(ev.J, ref.J) if not math.isnan(ev.J) else math.nan,
            Jtau=ev.Jtau, Jtau_rel=_rel(ev.Jtau, ref.Jtau), Jvol=ev.Jvol, Jvol_rel=_rel(ev.Jvol, ref.Jvol),
            grad_norm=gnorm, step=0.0,
            mesh_dist=mesh_distance(mesh, target_mesh) if target_mesh is not None else math.nan,
            halvings=0, wall_ms=0.0)
        if not keep_going or k >= cfg.max_iters:
            status = "converged" if not keep_going else "max_iters"
            rec.wall_ms = 1e3 * (time.perf_counter() - t0)
            records.append(rec)
            info["final"] = True
            if callback:
                callback(k, mesh, info)
            break

        try:
            ls = line_search(mesh, U, problem.evaluate, ev.merit, cfg.max_halvings, geo)
        except LineSearchFailure as exc:
            status, message, error = "line_search_failure", str(exc), exc
            rec.halvings = cfg.max_halvings
            rec.wall_ms = 1e3 * (time.perf_counter() - t0)
            records.append(rec)
            info["final"] = True
            if callback:
                callback(k, mesh, info)
            break
        if ls.evaluation is None:
            status = "converged"
            rec.wall_ms = 1e3 * (time.perf_counter() - t0)
            records.append(rec)
            info["final"] = True
            if callback:
                callback(k, mesh, info)
            break
        rec.step = ls.scale
        rec.halvings = ls.halvings
        warm = None if ls.halvings > 5 else U
        ev = ls.evaluation
        rec.wall_ms = 1e3 * (time.perf_counter() - t0)
        records.append(rec)
        log.info("iter %d J_rel=%.3e Jtau_rel=%.3e Jvol_rel=%.3e |U|=%.3e step=%.3g",
                 k, rec.J_rel, rec.Jtau_rel, rec.Jvol_rel, gnorm, ls.scale)
        if callback:
            callback(k, mesh, info)
        k += 1
    return DescentResult(records, status, message, error, problem)


def _check_consistency(parts, scale):
    total = np.linalg.norm(parts.total)
    if total <= 1e-10 * scale:
        for name in ("objective", "shape_tracking", "volume_tracking"):
            if np.linalg.norm(getattr(parts, name)) > 1e-8 * scale:
                log.warning("total load vanishes but the %s part does not", name)
