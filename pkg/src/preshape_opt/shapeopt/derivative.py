"""Tracking-type Poisson objective and its shape derivative.

``J = 1/2 int (y - ybar)^2 dx + nu * perimeter`` where ``y`` solves the state
equation on the current mesh and ``ybar`` is a fixed P1 field on a separate
target mesh, evaluated at the quadrature points of the current mesh. The
assembled derivative is exact for this discrete objective.
"""
from __future__ import annotations

import numpy as np

from .. import fem
from ..mesh import geometry


class TargetField:
    """Target state ``ybar`` solved once on the target mesh."""

    def __init__(self, target_mesh, r1, r2, tol=1e-10):
        self.mesh = target_mesh
        self.values = fem.solve_poisson(target_mesh, r1, r2, tol=tol)
        self.interp = fem.P1Interpolant(target_mesh, self.values)

    def at_quad(self, mesh, geo=None):
        """``(values, gradients)`` at the quadrature points of ``mesh``, shapes (m,3) and (m,3,2)."""
        geo = geo or geometry(mesh)
        return self.interp(geo.midpoints)


def tracking_value(mesh, y, ybar_q, geo=None):
    geo = geo or geometry(mesh)
    d = fem.at_quad(mesh, y) - ybar_q
    return 0.5 * float(np.sum(geo.areas * fem.QUAD_WEIGHT * np.sum(d ** 2, axis=1)))


def perimeter(mesh):
    return mesh.loop_length()


def objective(mesh, y, ybar_q, nu, geo=None):
    """``1/2 int (y - ybar)^2 + nu * perimeter`` with the quadrature of :mod:`fem`."""
    return tracking_value(mesh, y, ybar_q, geo) + nu * perimeter(mesh)


def assemble_shape_derivative(mesh, y, ybar_q, grad_ybar_q, p_adj, r1, r2, geo=None):
    """Shape derivative of the tracking term as an ``(n, 2)`` load vector.

    Volume form
    ``int -(y-ybar) grad(ybar).V - grad(y)^T (DV + DV^T) grad(p)
    + div(V) (1/2 (y-ybar)^2 + grad(y).grad(p) - r p) dx``;
    entries on the outer boundary are zero.
    """
    geo = geo or geometry(mesh)
    tri = mesh.triangles
    G = geo.grads                                   # (m, 3, 2)
    A = geo.areas
    gy = np.einsum("ta,tai->ti", y[tri], G)          # (m, 2)
    gp = np.einsum("ta,tai->ti", p_adj[tri], G)
    r = fem.region_source(mesh, r1, r2)
    pbar = p_adj[tri].mean(axis=1)
    d = fem.at_quad(mesh, y) - ybar_q               # (m, 3)

    Ggp = np.einsum("tai,ti->ta", G, gp)             # G_a . grad p
    Ggy = np.einsum("tai,ti->ta", G, gy)
    grad_dot = np.sum(gy * gp, axis=1)
    local = -(gy[:, None, :] * Ggp[..., None] + gp[:, None, :] * Ggy[..., None])
    local += G * (grad_dot - r * pbar)[:, None, None]
    local *= A[:, None, None]
    # quadrature terms: divergence part and the motion of ybar's sample points
    local += G * (A * fem.QUAD_WEIGHT * 0.5 * np.sum(d ** 2, axis=1))[:, None, None]
    wd = (A * fem.QUAD_WEIGHT)[:, None] * d          # (m, 3) over quad points
    local -= np.einsum("tq,qa,tqi->tai", wd, fem.QUAD_BASIS, grad_ybar_q)

    n = mesh.n_vertices
    idx = tri.ravel()
    L = np.column_stack([np.bincount(idx, weights=local[..., k].ravel(), minlength=n) for k in range(2)])
    L[mesh.outer_vertices] = 0.0
    return L


def assemble_perimeter(mesh, nu):
    """Derivative of ``nu * perimeter``: ``nu * sum_e tau_e . (V_head - V_tail)``."""
    e = mesh.shape_edges
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    t = nu * d / np.linalg.norm(d, axis=1)[:, None]
    L = np.zeros((mesh.n_vertices, 2))
    np.add.at(L, e[:, 1], t)
    np.add.at(L, e[:, 0], -t)
    return L
