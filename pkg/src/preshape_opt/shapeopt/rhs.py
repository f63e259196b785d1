"""Right-hand sides and Dirichlet data of the gradient systems for each variant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import preshape
from ..mesh import geometry
from .config import Rhs
from .derivative import assemble_perimeter, assemble_shape_derivative
from .metric import vector_dofs


@dataclass
class RhsParts:
    """Constituent derivative loads, each an ``(n, 2)`` array (not negated)."""

    objective: np.ndarray
    shape_tracking: np.ndarray
    volume_tracking: np.ndarray

    @property
    def total(self):
        return self.objective + self.shape_tracking + self.volume_tracking


def outer_tangents(mesh):
    """Unit tangent per outer vertex and a corner mask (incident edges not parallel)."""
    v = mesh.vertices
    n = mesh.n_vertices
    edges = mesh.outer_edges
    d = v[edges[:, 1]] - v[edges[:, 0]]
    length = np.linalg.norm(d, axis=1)
    t = d / length[:, None]
    # sign-free tangent: leading eigenvector of the summed edge direction dyads
    T = np.zeros((n, 2, 2))
    np.add.at(T, edges[:, 0], t[:, :, None] * t[:, None, :])
    np.add.at(T, edges[:, 1], t[:, :, None] * t[:, None, :])
    lumped = np.zeros(n)
    np.add.at(lumped, edges[:, 0], 0.5 * length)
    np.add.at(lumped, edges[:, 1], 0.5 * length)
    verts = mesh.outer_vertices
    w, vec = np.linalg.eigh(T[verts])
    tangent = vec[:, :, 1]
    corner = w[:, 0] > 1e-10 * w[:, 1]
    return verts, tangent, corner, lumped[verts]


def free_boundary_bc(mesh, state, targets, alpha_bnd, geo=None):
    """Tangential displacement of the outer boundary vertices.

    The unweighted volume tracking derivative at outer vertices is turned into
    an L^2 representative by the lumped boundary length, projected onto the
    boundary tangent, negated and scaled by ``alpha_bnd``. Corners stay fixed.
    Returns ``(outer_vertices, values (b, 2))``.
    """
    L = preshape.assemble_volume_tracking_rhs(mesh, state, targets, 1.0, project=False, geo=geo)
    verts, tangent, corner, lumped = outer_tangents(mesh)
    dens = L[verts] / lumped[:, None]
    tang = np.sum(dens * tangent, axis=1)[:, None] * tangent
    bc = -alpha_bnd * tang
    bc[corner] = 0.0
    return verts, bc


def assemble_parts(mesh, state, targets, fields, config, frames=None, geo=None):
    geo = geo or geometry(mesh)
    n = mesh.n_vertices
    zero = np.zeros((n, 2))
    if config.rhs.uses_objective:
        obj = assemble_shape_derivative(mesh, fields["y"], fields["ybar_q"], fields["grad_ybar_q"],
                                        fields["p"], config.r1, config.r2, geo=geo)
        obj = obj + assemble_perimeter(mesh, config.nu)
    else:
        obj = zero
    if config.rhs.uses_shape_tracking:
        shp = preshape.assemble_shape_tracking_rhs(mesh, state, targets, config.alpha_tau, frames=frames)
    else:
        shp = zero
    if config.rhs.uses_volume_tracking:
        vol = preshape.assemble_volume_tracking_rhs(mesh, state, targets, config.alpha_vol, geo=geo)
    else:
        vol = zero
    return RhsParts(obj, shp, vol)


def assemble_rhs(mesh, state, targets, fields, config, frames=None, geo=None):
    """Negated total load and Dirichlet data ``(dofs, values)`` for the variant.

    The load is the negative derivative so that the metric solve yields a
    descent direction. ``SmoothOnly`` also pins the shape vertices.
    """
    parts = assemble_parts(mesh, state, targets, fields, config, frames, geo)
    load = -parts.total
    outer = mesh.outer_vertices
    values = np.zeros((len(outer), 2))
    if config.rhs is Rhs.SHAPE_VOLUME_FREE:
        outer, values = free_boundary_bc(mesh, state, targets, config.alpha_bnd, geo)
    fixed = [outer]
    vals = [values]
    if config.rhs is Rhs.SMOOTH_ONLY:
        fixed.append(mesh.shape_vertices)
        vals.append(np.zeros((len(mesh.shape_vertices), 2)))
    verts = np.concatenate(fixed)
    dirichlet = (vector_dofs(verts), np.concatenate(vals).ravel())
    return load, dirichlet, parts
