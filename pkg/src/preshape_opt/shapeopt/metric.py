"""Gradient metrics turning a load vector into a displacement field.

Vector unknowns are interleaved, DOF ``2 * i + k`` is component ``k`` of
vertex ``i``. The weight ``mu`` is a nodal field; its element mean is exact
for the element-constant integrands used here.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from .. import fem
from ..mesh import geometry

log = logging.getLogger(__name__)


class NewtonNonConvergence(fem.SolverError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def vector_dofs(vertices):
    vertices = np.asarray(vertices, dtype=np.int64)
    return np.column_stack([2 * vertices, 2 * vertices + 1]).ravel()


def _scatter6(tri, local, n):
    dofs = np.empty((len(tri), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * tri
    dofs[:, 1::2] = 2 * tri + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(2 * n, 2 * n))


def element_mu(mesh, mu):
    return np.asarray(mu, dtype=float)[mesh.triangles].mean(axis=1)


def elasticity_matrix(mesh, mu, geo=None):
    """``int mu eps(U):eps(V) dx`` (first Lame parameter zero)."""
    geo = geo or geometry(mesh)
    G = geo.grads
    m = len(G)
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = G[..., 0]
    B[:, 1, 1::2] = G[..., 1]
    B[:, 2, 0::2] = G[..., 1]
    B[:, 2, 1::2] = G[..., 0]
    W = np.array([1.0, 1.0, 0.5])
    local = np.einsum("tri,r,trj->tij", B, W, B) * (geo.areas * element_mu(mesh, mu))[:, None, None]
    return _scatter6(mesh.triangles, local, mesh.n_vertices)


def vector_laplacian(mesh, coef, geo=None):
    """``int c grad(U):grad(V) dx`` for a per-element coefficient ``c``."""
    K = fem.stiffness(mesh, coef=coef, geo=geo)
    return sp.kron(K, sp.identity(2), format="csr")


def h1_norm(mesh, U, geo=None):
    """Full H^1 norm (L^2 plus seminorm) of a P1 vector field."""
    geo = geo or geometry(mesh)
    S = fem.stiffness(mesh, geo=geo) + fem.mass(mesh, geo=geo)
    U = np.asarray(U, dtype=float).reshape(-1, 2)
    return float(np.sqrt(max(sum(U[:, k] @ (S @ U[:, k]) for k in range(2)), 0.0)))


def _boundary(dirichlet, n):
    dofs, vals = dirichlet
    return np.asarray(dofs, dtype=np.int64), np.asarray(vals, dtype=float)


def solve_linear_elasticity(mesh, mu, load, dirichlet, tol=1e-10, geo=None):
    """Solve ``a(U, V) = load(V)`` with prescribed vector DOFs.

    ``dirichlet`` is ``(dofs, values)`` in interleaved numbering.
    """
    dofs, vals = _boundary(dirichlet, mesh.n_vertices)
    if len(dofs) == 0:
        raise fem.SolverError("elasticity system is singular without Dirichlet data")
    A = elasticity_matrix(mesh, mu, geo)
    U = fem.SparseSystem(A, np.asarray(load, dtype=float).ravel(), dofs, vals).solve(tol=tol)
    return U.reshape(-1, 2)


def _plap_parts(mesh, mu_el, U, p, eps, geo):
    G = geo.grads
    DU = np.einsum("tak,taj->tkj", U[mesh.triangles], G)  # DU[t, k, j] = d_j U_k
    k = eps ** 2 + np.sum(DU ** 2, axis=(1, 2))
    coef = mu_el * k ** (p / 2 - 1)
    return DU, k, coef


def solve_p_laplacian(mesh, mu, load, dirichlet, p=6.0, eps=8.0, warm_start=None,
                      newton_tol=1e-8, newton_max=50, tol=1e-10, geo=None):
    """Damped Newton for ``int mu (eps^2 + |DU|^2)^(p/2-1) DU:DV dx = load(V)``.

    Returns ``(U, iterations)``. Each Newton step is solved by CG; the step is
    halved (at most 20 times) until the residual norm decreases.
    """
    geo = geo or geometry(mesh)
    n = mesh.n_vertices
    dofs, vals = _boundary(dirichlet, n)
    b = np.asarray(load, dtype=float).ravel()
    mu_el = element_mu(mesh, mu)
    free = np.ones(2 * n, dtype=bool)
    free[dofs] = False

    U = np.zeros(2 * n) if warm_start is None else np.array(warm_start, dtype=float).ravel()
    U[dofs] = vals

    def residual(Uv):
        _, _, coef = _plap_parts(mesh, mu_el, Uv.reshape(-1, 2), p, eps, geo)
        R = vector_laplacian(mesh, coef, geo) @ Uv - b
        R[~free] = 0.0
        return R

    if p == 2.0:
        _, _, coef = _plap_parts(mesh, mu_el, U.reshape(-1, 2), p, eps, geo)
        A = vector_laplacian(mesh, coef, geo)
        return fem.SparseSystem(A, b, dofs, vals).solve(tol=tol).reshape(-1, 2), 1

    R = residual(U)
    rnorm = np.linalg.norm(R)
    scale = np.linalg.norm(b[free]) or rnorm
    trace = [rnorm]
    if rnorm <= newton_tol * scale:
        return U.reshape(-1, 2), 0
    for it in range(1, newton_max + 1):
        DU, k, coef = _plap_parts(mesh, mu_el, U.reshape(-1, 2), p, eps, geo)
        J = vector_laplacian(mesh, coef, geo)
        # (dU:dW)(dU:dV) part: b_{a,k} = (DU G_a)_k
        bvec = np.einsum("tkj,taj->tak", DU, geo.grads).reshape(len(k), 6)
        w = geo.areas * mu_el * (p - 2) * k ** (p / 2 - 2)
        local = w[:, None, None] * bvec[:, :, None] * bvec[:, None, :]
        J = (J + _scatter6(mesh.triangles, local, n)).tocsr()
        delta = fem.SparseSystem(J, -R, dofs, np.zeros(len(dofs))).solve(tol=tol)
        step = 1.0
        for _ in range(21):
            trial = U + step * delta
            Rt = residual(trial)
            tnorm = np.linalg.norm(Rt)
            if tnorm < rnorm:
                break
            step *= 0.5
        else:
            raise NewtonNonConvergence("Newton damping failed to reduce the residual", trace)
        U, R, rnorm = trial, Rt, tnorm
        trace.append(rnorm)
        if rnorm <= newton_tol * scale:
            log.debug("p-Laplacian Newton converged in %d iterations", it)
            return U.reshape(-1, 2), it
    raise NewtonNonConvergence(f"Newton did not converge in {newton_max} iterations "
                               f"(relative residual {rnorm / scale:.3e})", trace)
