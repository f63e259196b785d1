"""Parameterization tracking on the shape curve and in the hold-all volume.

The initial mesh is the reference: vertex correspondence realizes the inverse
deformation, so ``g o phi^-1`` is just the stored per-vertex density and the
Jacobian determinants are ratios of initial to current edge lengths (curve)
or triangle areas (volume).

All ``assemble_*`` functions return the derivative of the weighted objective
as an ``(n, 2)`` load vector, i.e. ``L[i] . V[i]`` summed over vertices equals
``alpha * dJ[V]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, geometry, shape_frames


@dataclass(frozen=True)
class TargetSpec:
    """Constant target densities on the curve (``q_shape``) and in the volume (``q_vol``)."""

    q_shape: float = 1.0
    q_vol: float = 1.0

    def __post_init__(self):
        if not (self.q_shape > 0 and self.q_vol > 0):
            raise ValueError("target densities must be positive")


@dataclass(frozen=True)
class PreShapeState:
    initial_coords: np.ndarray
    initial_frames: object
    g_shape: np.ndarray          # per shape vertex, loop order
    g_vol: np.ndarray            # per mesh vertex
    initial_edge_lengths: np.ndarray
    initial_areas: np.ndarray

    @classmethod
    def from_mesh(cls, mesh):
        g_shape, g_vol = estimate_g(mesh)
        arrays = dict(
            initial_coords=mesh.vertices.copy(),
            g_shape=g_shape,
            g_vol=g_vol,
            initial_edge_lengths=mesh.shape_edge_lengths(),
            initial_areas=mesh.areas(),
        )
        for a in arrays.values():
            a.setflags(write=False)
        return cls(initial_frames=shape_frames(mesh), **arrays)

    def g_edge(self):
        """Density at shape edge midpoints (mean of the endpoint values)."""
        return 0.5 * (self.g_shape + np.roll(self.g_shape, -1))

    def g_tri(self, mesh):
        """Mean density over each triangle (exact P1 average)."""
        return self.g_vol[mesh.triangles].mean(axis=1)


def estimate_g(mesh):
    """Vertex densities as the average of inverse volumes of the incident cells.

    Returns ``(g_shape, g_vol)``: the curve density per shape vertex (cells are
    the two incident shape edges) and the volume density per mesh vertex
    (cells are the incident triangles).
    """
    lengths = mesh.shape_edge_lengths()
    areas = mesh.areas()
    if np.any(lengths <= 0) or np.any(areas <= 0):
        raise MeshError("zero-volume cell in density estimate")
    inv = 1.0 / lengths
    g_shape = 0.5 * (inv + np.roll(inv, 1))
    tri = mesh.triangles.ravel()
    n = mesh.n_vertices
    total = np.bincount(tri, weights=np.repeat(1.0 / areas, 3), minlength=n)
    count = np.bincount(tri, minlength=n)
    return g_shape, total / count


# ------------------------------------------------------------------- curve part

def edge_det(mesh, state):
    lengths = mesh.shape_edge_lengths()
    if np.any(lengths < 1e-14):
        raise MeshError("degenerate shape edge")
    return state.initial_edge_lengths / lengths


def surface_det(mesh, state):
    """Covariant Jacobian determinant of the inverse curve map per shape vertex.

    Edge-wise ratios of initial to current length, averaged at vertices with
    current-length weights.
    """
    edge_det(mesh, state)
    L0 = state.initial_edge_lengths
    L = mesh.shape_edge_lengths()
    return (L0 + np.roll(L0, 1)) / (L + np.roll(L, 1))


def surface_density(mesh, state):
    """Transported curve density ``G`` per shape edge."""
    return state.g_edge() * edge_det(mesh, state)


def surface_target(mesh, state, targets):
    """Normalized constant target ``f`` on the current curve (scalar)."""
    total = float(np.sum(state.g_edge() * state.initial_edge_lengths))
    length = mesh.loop_length()
    if length <= 0:
        raise MeshError("zero loop length")
    return total / (targets.q_shape * length) * targets.q_shape


def j_tau(mesh, state, targets):
    """Curve tracking objective ``1/2 int (G - f)^2 ds``, edge-midpoint rule."""
    G = surface_density(mesh, state)
    f = surface_target(mesh, state, targets)
    return 0.5 * float(np.sum(mesh.shape_edge_lengths() * (G - f) ** 2))


def assemble_shape_tracking_rhs(mesh, state, targets, alpha_tau, frames=None):
    """Derivative of ``alpha_tau * J_tau`` restricted to tangential directions.

    ``L(V) = -alpha_tau int 1/2 (G^2 - f^2) div_G(V_tan) ds`` with
    ``V_tan = (V . tau) tau`` at each shape vertex and the curve divergence
    taken edge-wise. For constant ``q`` the target-gradient term is zero.
    """
    frames = frames or shape_frames(mesh)
    G = surface_density(mesh, state)
    f = surface_target(mesh, state, targets)
    coef = -alpha_tau * 0.5 * (G ** 2 - f ** 2)
    geo_t = mesh.vertices[np.roll(mesh.shape_loop, -1)] - mesh.vertices[mesh.shape_loop]
    t_edge = geo_t / np.linalg.norm(geo_t, axis=1)[:, None]
    tau = frames.tangent
    tau_next = np.roll(tau, -1, axis=0)
    # edge e runs from loop vertex e (tail) to e+1 (head)
    head = (coef * np.sum(t_edge * tau_next, axis=1))[:, None] * tau_next
    tail = (coef * np.sum(t_edge * tau, axis=1))[:, None] * tau
    per_vertex = np.roll(head, 1, axis=0) - tail
    L = np.zeros((mesh.n_vertices, 2))
    L[mesh.shape_loop] = per_vertex
    return L


# ------------------------------------------------------------------ volume part

def volume_det(mesh, state):
    """Jacobian determinant of the inverse volume map per triangle."""
    areas = mesh.areas()
    if np.any(areas <= 0):
        raise MeshError("non-positive triangle area")
    return state.initial_areas / areas


def volume_density(mesh, state):
    """Transported volume density ``G`` per triangle."""
    return state.g_tri(mesh) * volume_det(mesh, state)


def volume_target(mesh, state, targets):
    """Per-triangle target, normalized separately on the inner and outer region."""
    areas = mesh.areas()
    mass0 = state.g_tri(mesh) * state.initial_areas
    f = np.empty(mesh.n_triangles)
    for lab in np.unique(mesh.labels):
        sel = mesh.labels == lab
        region = areas[sel].sum()
        if region <= 0:
            raise MeshError(f"empty region {lab}")
        f[sel] = mass0[sel].sum() / (targets.q_vol * region) * targets.q_vol
    return f


def j_vol(mesh, state, targets):
    """Volume tracking objective ``1/2 int (G - f)^2 dx`` (exact, G and f per triangle)."""
    G = volume_density(mesh, state)
    f = volume_target(mesh, state, targets)
    return 0.5 * float(np.sum(mesh.areas() * (G - f) ** 2))


def volume_residual(mesh, state, targets):
    """Pointwise mismatch ``G - f`` per triangle."""
    return volume_density(mesh, state) - volume_target(mesh, state, targets)


def assemble_volume_tracking_rhs(mesh, state, targets, alpha_vol, project=True, geo=None):
    """Derivative of ``alpha_vol * J_vol``: ``-alpha_vol int 1/2 (G^2 - f^2) div V dx``.

    With ``project`` the entries at shape and outer vertices are zeroed, which
    restricts the load to fields vanishing on the curve and the outer boundary.
    """
    geo = geo or geometry(mesh)
    G = volume_density(mesh, state)
    f = volume_target(mesh, state, targets)
    coef = -alpha_vol * 0.5 * (G ** 2 - f ** 2) * geo.areas
    local = coef[:, None, None] * geo.grads
    n = mesh.n_vertices
    idx = mesh.triangles.ravel()
    L = np.column_stack([np.bincount(idx, weights=local[..., k].ravel(), minlength=n) for k in range(2)])
    return project_interior(L, mesh) if project else L


def project_interior(field, mesh):
    """Zero a vector field on the shape and outer boundary vertices."""
    out = np.array(field, dtype=float, copy=True)
    out[mesh.shape_vertices] = 0.0
    out[mesh.outer_vertices] = 0.0
    return out
