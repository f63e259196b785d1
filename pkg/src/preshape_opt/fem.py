"""P1 finite elements on :class:`~preshape_opt.mesh.TriMesh`.

Scalar fields are ``(n,)`` arrays of nodal values and vector fields are
``(n, 2)`` arrays; vector DOFs are interleaved as ``2 * vertex + component``.
Stiffness matrices are assembled exactly; integrands that are not constant per
element use the three-point edge-midpoint rule, which is exact for quadratics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import Region, geometry

log = logging.getLogger(__name__)

# value of local basis function a at quadrature point q (midpoint of edge q, q+1)
QUAD_BASIS = np.array([[0.5, 0.5, 0.0],
                       [0.0, 0.5, 0.5],
                       [0.5, 0.0, 0.5]])
QUAD_WEIGHT = 1.0 / 3.0  # times the triangle area


class SolverError(Exception):
    pass


class NonConvergence(SolverError):
    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IndefiniteSystem(SolverError):
    pass


class PointOutside(Exception):
    pass


# ---------------------------------------------------------------- linear algebra

def cg_solve(A, b, tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||``. Raises :class:`IndefiniteSystem`
    when a search direction with non-positive curvature shows up and
    :class:`NonConvergence` when ``max_iter`` (default ``10 n``) is exhausted.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise IndefiniteSystem("non-positive diagonal entry")
    dinv = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= tol * bnorm:
        return x
    z = dinv * r
    d = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ad = A @ d
        curv = d @ Ad
        if curv <= 0.0:
            raise IndefiniteSystem(f"non-positive curvature {curv:.3e} at CG iteration {it}")
        step = rz / curv
        x += step * d
        r -= step * Ad
        rnorm = np.linalg.norm(r)
        if rnorm <= tol * bnorm:
            return x
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise NonConvergence(f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
                         residual=rnorm / bnorm, iterations=max_iter)


def apply_dirichlet(A, b, dofs, values):
    """Symmetric elimination of prescribed DOFs.

    Returns a new matrix with identity rows/columns on ``dofs`` and a right
    hand side carrying the prescribed values there, with the known columns
    moved to the right.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    u = np.zeros(n)
    u[dofs] = values
    b = np.asarray(b, dtype=float) - A @ u
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    A = (D @ A @ D).tocsr()
    fixed = np.zeros(n)
    fixed[dofs] = 1.0
    A = (A + sp.diags(fixed)).tocsr()
    b[dofs] = values
    return A, b


@dataclass
class SparseSystem:
    """Symmetric matrix, right-hand side and prescribed DOF values."""

    matrix: sp.spmatrix
    rhs: np.ndarray
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def constrained(self):
        return apply_dirichlet(self.matrix, self.rhs, self.fixed_dofs, self.fixed_values)

    def solve(self, tol=1e-10, max_iter=None, x0=None):
        A, b = self.constrained()
        x = cg_solve(A, b, tol=tol, max_iter=max_iter, x0=x0)
        x[self.fixed_dofs] = self.fixed_values  # exact, not up to the CG tolerance
        return x


# -------------------------------------------------------------------- assembly

def _scatter(tri, local, n):
    """Sparse matrix from per-element (m, 3, 3) blocks."""
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness(mesh, coef=None, geo=None):
    """P1 Laplacian ``int c grad(u).grad(v)`` with per-element coefficient ``c``."""
    geo = geo or geometry(mesh)
    local = np.einsum("tai,tbi->tab", geo.grads, geo.grads) * geo.areas[:, None, None]
    if coef is not None:
        local *= np.asarray(coef, dtype=float)[:, None, None]
    return _scatter(mesh.triangles, local, mesh.n_vertices)


def mass(mesh, geo=None):
    """Consistent P1 mass matrix."""
    geo = geo or geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = geo.areas[:, None, None] * ref[None]
    return _scatter(mesh.triangles, local, mesh.n_vertices)


def quad_points(mesh, geo=None):
    """Edge-midpoint quadrature points, shape ``(m, 3, 2)``."""
    geo = geo or geometry(mesh)
    return geo.midpoints


def at_quad(mesh, values):
    """Nodal P1 values at the quadrature points, shape ``(m, 3)``."""
    return np.asarray(values)[mesh.triangles] @ QUAD_BASIS.T


def load_quad(mesh, fq, geo=None):
    """Load vector ``int f phi_a`` for ``f`` given at quadrature points ``(m, 3)``."""
    geo = geo or geometry(mesh)
    local = (np.asarray(fq) @ QUAD_BASIS) * (QUAD_WEIGHT * geo.areas)[:, None]
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def load_elementwise(mesh, f, geo=None):
    """Load vector for a per-element constant ``f``."""
    geo = geo or geometry(mesh)
    local = np.repeat((np.asarray(f, dtype=float) * geo.areas / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def region_source(mesh, r1, r2):
    """Piecewise constant source: ``r2`` inside the shape, ``r1`` outside."""
    return np.where(mesh.labels == Region.INNER, float(r2), float(r1))


def _solve_dirichlet(K, b, dofs, values, tol, x0=None):
    return SparseSystem(K, b, np.asarray(dofs), np.asarray(values, dtype=float)).solve(tol=tol, x0=x0)


# ---------------------------------------------------------------------- solves

def solve_poisson(mesh, r1, r2, source=None, tol=1e-10, geo=None):
    """State equation ``-lap y = r`` in D, ``y = 0`` on the outer boundary.

    ``source`` overrides the region source: either a per-element array or a
    callable ``f(x, y)`` evaluated at the quadrature points.
    """
    geo = geo or geometry(mesh)
    K = stiffness(mesh, geo=geo)
    if source is None:
        b = load_elementwise(mesh, region_source(mesh, r1, r2), geo)
    elif callable(source):
        q = geo.midpoints
        b = load_quad(mesh, source(q[..., 0], q[..., 1]), geo)
    else:
        b = load_elementwise(mesh, source, geo)
    return _solve_dirichlet(K, b, mesh.outer_vertices, 0.0, tol)


def solve_adjoint(mesh, y, ybar, tol=1e-10, geo=None):
    """Adjoint equation ``-lap p = -(y - ybar)``, ``p = 0`` on the outer boundary.

    ``ybar`` is either nodal on ``mesh`` or given at the quadrature points
    ``(m, 3)`` (the usual case when it is interpolated from another mesh).
    """
    geo = geo or geometry(mesh)
    ybar = np.asarray(ybar, dtype=float)
    ybar_q = ybar if ybar.ndim == 2 else at_quad(mesh, ybar)
    resid = at_quad(mesh, y) - ybar_q
    b = -load_quad(mesh, resid, geo)
    return _solve_dirichlet(stiffness(mesh, geo=geo), b, mesh.outer_vertices, 0.0, tol)


def solve_mu(mesh, mu_max, mu_min, tol=1e-10, geo=None):
    """Harmonic weight: ``mu_max`` on the shape curve, ``mu_min`` on the outer boundary."""
    if mu_max <= 0 or mu_min <= 0:
        raise ValueError("mu bounds must be positive")
    geo = geo or geometry(mesh)
    dofs = np.concatenate([mesh.shape_vertices, mesh.outer_vertices])
    vals = np.concatenate([np.full(len(mesh.shape_vertices), float(mu_max)),
                           np.full(len(mesh.outer_vertices), float(mu_min))])
    K = stiffness(mesh, geo=geo)
    return _solve_dirichlet(K, np.zeros(mesh.n_vertices), dofs, vals, tol)


# --------------------------------------------------------------- interpolation

class P1Interpolant:
    """Evaluate a nodal P1 field of a frozen mesh at arbitrary points.

    Candidate triangles come from a k-d tree on centroids; points not found
    among the candidates fall back to a scan over all triangles. Points up to
    ``clamp`` outside the mesh are snapped to the nearest triangle.
    """

    def __init__(self, mesh, values, slack=1e-9, clamp=1e-7, k=12):
        self.vertices = mesh.vertices.copy()
        self.triangles = mesh.triangles.copy()
        self.values = np.asarray(values, dtype=float).copy()
        self.slack = slack
        self.clamp = clamp
        self.k = min(k, len(self.triangles))
        geo = geometry(mesh)
        self.grads = np.einsum("ta,tai->ti", self.values[self.triangles], geo.grads)
        p = self.vertices[self.triangles]
        self._p0 = p[:, 0]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        # inverse of [e1 e2] per triangle
        self._inv = np.stack([np.column_stack([e2[:, 1], -e2[:, 0]]),
                              np.column_stack([-e1[:, 1], e1[:, 0]])], axis=1) / det[:, None, None]
        self._tree = cKDTree(p.mean(axis=1))

    def _bary(self, points, tris):
        d = points - self._p0[tris]
        l12 = np.einsum("...ij,...j->...i", self._inv[tris], d)
        return np.concatenate([1.0 - l12.sum(axis=-1, keepdims=True), l12], axis=-1)

    def locate(self, points):
        """Containing triangle and barycentric coordinates for each point."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        _, cand = self._tree.query(points, k=self.k)
        cand = cand.reshape(len(points), -1)
        lam = self._bary(points[:, None, :], cand)
        best = np.argmax(lam.min(axis=-1), axis=1)
        rows = np.arange(len(points))
        tri = cand[rows, best]
        lam = lam[rows, best]
        miss = np.flatnonzero(lam.min(axis=1) < -self.slack)
        for i in miss:
            tri[i], lam[i] = self._scan(points[i])
        return tri, lam

    def _scan(self, point):
        all_tris = np.arange(len(self.triangles))
        lam = self._bary(np.broadcast_to(point, (len(all_tris), 2)), all_tris)
        t = int(np.argmax(lam.min(axis=1)))
        if lam[t].min() >= -self.slack:
            return t, lam[t]
        # nearest triangle by distance of the point to its clamped projection
        clamped = np.clip(lam, 0.0, None)
        clamped /= clamped.sum(axis=1, keepdims=True)
        proj = np.einsum("ta,tai->ti", clamped, self.vertices[self.triangles])
        dist = np.linalg.norm(proj - point, axis=1)
        t = int(np.argmin(dist))
        if dist[t] <= self.clamp:
            return t, clamped[t]
        raise PointOutside(f"point {point.tolist()} lies outside the mesh (distance {dist[t]:.3e})")

    def __call__(self, points):
        """Return ``(values, gradients)`` at ``points`` of shape ``(..., 2)``."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        tri, lam = self.locate(points.reshape(-1, 2))
        vals = np.einsum("pa,pa->p", lam, self.values[self.triangles[tri]])
        return vals.reshape(shape), self.grads[tri].reshape(shape + (2,))


def interpolate(mesh, values, points):
    """One-shot :class:`P1Interpolant` evaluation."""
    return P1Interpolant(mesh, values)(points)
