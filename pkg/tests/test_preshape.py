from __future__ import annotations

import numpy as np
import pytest

from preshape_opt import preshape
from preshape_opt.fixtures import structured_rect
from preshape_opt.gradcheck import check_shape_tracking, check_volume_tracking
from preshape_opt.mesh import MeshError, Region, TriMesh, morph, shape_frames


def _state(mesh):
    return preshape.PreShapeState.from_mesh(mesh)


T1 = preshape.TargetSpec()


def test_target_spec_validation():
    with pytest.raises(ValueError):
        preshape.TargetSpec(q_shape=0.0)
    with pytest.raises(ValueError):
        preshape.TargetSpec(q_vol=-1.0)


def test_state_is_frozen(hexagon):
    s = _state(hexagon)
    with pytest.raises(ValueError):
        s.g_vol[0] = 1.0
    morph(hexagon, np.full((hexagon.n_vertices, 2), 0.0))
    assert s.initial_coords is not hexagon.vertices


# ------------------------------------------------------------------ estimate_g

def test_g_shape_edge_arithmetic():
    # loop vertex 1 sits between edges of length 0.5 and 0.25
    v = np.array([[0, 0], [0.5, 0], [0.5, 0.25], [0, 0.25], [-1, -1], [2, -1], [2, 2], [-1, 2]], float)
    tris = [[0, 1, 2], [0, 2, 3],
            [4, 5, 1], [4, 1, 0], [5, 6, 2], [5, 2, 1], [6, 7, 3], [6, 3, 2], [7, 4, 0], [7, 0, 3]]
    labels = [Region.INNER] * 2 + [Region.OUTER] * 8
    m = TriMesh(v, tris, labels, [0, 1, 2, 3], [[4, 5], [5, 6], [6, 7], [7, 4]])
    g_shape, _ = preshape.estimate_g(m)
    i = list(m.shape_loop).index(1)
    assert g_shape[i] == pytest.approx(3.0, abs=1e-14)


def test_g_vol_uniform():
    m = structured_rect(1.0, 1.0, 8, 8)
    _, g_vol = preshape.estimate_g(m)
    assert np.allclose(g_vol, 1.0 / (0.5 / 64), rtol=1e-12)


def test_g_vol_peaks_near_curve(model_mesh):
    _, g_vol = preshape.estimate_g(model_mesh)
    p = model_mesh.vertices[np.argmax(g_vol)]
    assert abs(np.linalg.norm(p - [0.5, 0.5]) - 0.35) < 0.1


def test_g_rejects_degenerate_cell(square_in_square):
    v = square_in_square.vertices.copy()
    v[square_in_square.shape_loop[1]] = v[square_in_square.shape_loop[0]]
    m = TriMesh(v, square_in_square.triangles, square_in_square.labels, square_in_square.shape_loop,
                square_in_square.outer_edges, validate=False)
    with pytest.raises(MeshError):
        preshape.estimate_g(m)


# ---------------------------------------------------------------- determinants

def test_surface_det_unmoved(model_mesh):
    assert np.allclose(preshape.surface_det(model_mesh, _state(model_mesh)), 1.0, atol=1e-15)


def test_surface_det_scaled_loop(hexagon):
    s = _state(hexagon)
    c = hexagon.vertices[hexagon.shape_loop].mean(axis=0)
    V = np.zeros_like(hexagon.vertices)
    V[hexagon.shape_loop] = hexagon.vertices[hexagon.shape_loop] - c  # doubles the loop about c
    m = hexagon.copy()
    m.vertices = m.vertices + V  # only curve lengths matter here
    assert np.allclose(preshape.surface_det(m, s), 0.5, atol=1e-12)


def test_surface_det_single_vertex_oracle(hexagon):
    s = _state(hexagon)
    loop = hexagon.shape_loop
    m = hexagon.copy()
    c = m.vertices[loop].mean(axis=0)
    k = loop[2]
    d = m.vertices[k] - c
    V = np.zeros_like(m.vertices)
    V[k] = 0.1 * d / np.linalg.norm(d)
    morph(m, V)
    P0, P = s.initial_coords[loop], m.vertices[loop]
    L0 = np.linalg.norm(np.roll(P0, -1, axis=0) - P0, axis=1)
    L = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
    oracle = np.array([(L0[i - 1] + L0[i]) / (L[i - 1] + L[i]) for i in range(len(loop))])
    assert np.array_equal(preshape.surface_det(m, s), oracle)


def test_volume_det_unmoved(model_mesh):
    assert np.allclose(preshape.volume_det(model_mesh, _state(model_mesh)), 1.0, atol=1e-15)


def test_volume_det_affine(model_mesh):
    s = _state(model_mesh)
    A = np.array([[1.3, 0.2], [-0.1, 0.8]])
    model_mesh.vertices = model_mesh.vertices @ A.T
    assert np.allclose(preshape.volume_det(model_mesh, s), 1 / np.linalg.det(A), rtol=1e-12)


def test_volume_det_matrix_oracle(square_in_square):
    s = _state(square_in_square)
    rng = np.random.default_rng(5)
    V = np.zeros_like(square_in_square.vertices)
    V[square_in_square.shape_loop] = rng.uniform(-0.05, 0.05, size=(4, 2))
    morph(square_in_square, V)
    det = preshape.volume_det(square_in_square, s)
    for t, (a, b, c) in enumerate(square_in_square.triangles):
        X0 = s.initial_coords
        X = square_in_square.vertices
        A_init = np.column_stack([X0[b] - X0[a], X0[c] - X0[a]])
        A_cur = np.column_stack([X[b] - X[a], X[c] - X[a]])
        assert det[t] == pytest.approx(np.linalg.det(A_init @ np.linalg.inv(A_cur)), rel=1e-12)


def test_volume_det_rejects_inversion(square_in_square):
    s = _state(square_in_square)
    square_in_square.vertices = square_in_square.vertices * np.array([-1.0, 1.0])
    with pytest.raises(MeshError):
        preshape.volume_det(square_in_square, s)


# --------------------------------------------------------------------- targets

def test_surface_target_unmoved_is_mean(hexagon):
    s = _state(hexagon)
    f = preshape.surface_target(hexagon, s, T1)
    assert f == pytest.approx(s.g_shape.mean(), rel=1e-12)


def test_surface_target_halves_with_doubled_loop(hexagon):
    s = _state(hexagon)
    f0 = preshape.surface_target(hexagon, s, T1)
    m = hexagon.copy()
    m.vertices = 2.0 * m.vertices
    assert preshape.surface_target(m, s, T1) == pytest.approx(0.5 * f0, rel=1e-14)


def test_volume_target_unmoved_is_region_mean(model_mesh):
    s = _state(model_mesh)
    f = preshape.volume_target(model_mesh, s, T1)
    a = model_mesh.areas()
    for lab in Region:
        sel = model_mesh.labels == lab
        expected = np.sum(s.g_tri(model_mesh)[sel] * a[sel]) / a[sel].sum()
        assert np.allclose(f[sel], expected, rtol=1e-13)


def test_volume_target_uniform():
    m = structured_rect(1.0, 1.0, 6, 6)
    s = _state(m)
    assert np.allclose(preshape.volume_target(m, s, T1), 72.0, rtol=1e-12)


# ------------------------------------------------------------------ objectives

def test_j_tau_zero_on_uniform_loop(hexagon):
    assert preshape.j_tau(hexagon, _state(hexagon), T1) < 1e-20


def test_j_tau_positive_after_tangential_move(hexagon):
    s = _state(hexagon)
    f = shape_frames(hexagon)
    V = np.zeros_like(hexagon.vertices)
    V[hexagon.shape_loop[0]] = 0.02 * f.tangent[0]
    morph(hexagon, V)
    assert preshape.j_tau(hexagon, s, T1) > 0


def test_j_tau_against_refined_quadrature(model_mesh, target_mesh):
    from preshape_opt.shapeopt.config import OptConfig
    from preshape_opt.shapeopt.descent import descend
    s = _state(model_mesh)
    descend(model_mesh, target_mesh, OptConfig(max_iters=20))
    # G and f are constant per edge, so a 5-point Gauss rule per edge must agree
    x, w = np.polynomial.legendre.leggauss(5)
    G = preshape.surface_density(model_mesh, s)
    f = preshape.surface_target(model_mesh, s, T1)
    L = model_mesh.shape_edge_lengths()
    brute = 0.5 * sum(Le / 2 * np.sum(w * (Ge - f) ** 2) for Le, Ge in zip(L, G))
    assert preshape.j_tau(model_mesh, s, T1) == pytest.approx(brute, rel=0.02)


def test_j_vol_zero_on_uniform_mesh():
    m = structured_rect(1.0, 1.0, 6, 6)
    assert preshape.j_vol(m, _state(m), T1) < 1e-20


def test_j_vol_positive_on_refined_model(model_mesh):
    assert preshape.j_vol(model_mesh, _state(model_mesh), T1) > 0


# --------------------------------------------------------------- tracking loads

def test_shape_load_ignores_normal_fields(model_mesh, target_mesh):
    s = _state(model_mesh)
    rng = np.random.default_rng(0)
    V = np.zeros_like(model_mesh.vertices)
    V[model_mesh.shape_loop] = 0.002 * rng.normal(size=(63, 2))
    morph(model_mesh, V)
    frames = shape_frames(model_mesh)
    L = preshape.assemble_shape_tracking_rhs(model_mesh, s, T1, 1000.0, frames)
    W = np.zeros_like(model_mesh.vertices)
    W[model_mesh.shape_loop] = rng.normal(size=63)[:, None] * frames.normal
    assert abs(np.sum(L * W)) < 1e-12 * np.abs(L).sum()


def test_shape_load_vanishes_at_zero_residual(hexagon):
    L = preshape.assemble_shape_tracking_rhs(hexagon, _state(hexagon), T1, 1000.0)
    assert np.max(np.abs(L)) < 1e-9


def test_shape_load_supported_on_curve(model_mesh):
    s = _state(model_mesh)
    L = preshape.assemble_shape_tracking_rhs(model_mesh, s, T1, 1.0)
    off = np.setdiff1d(np.arange(model_mesh.n_vertices), model_mesh.shape_vertices)
    assert np.all(L[off] == 0.0)


def test_volume_load_zero_on_curve_and_boundary(model_mesh):
    s = _state(model_mesh)
    L = preshape.assemble_volume_tracking_rhs(model_mesh, s, T1, 100.0)
    assert np.all(L[model_mesh.shape_vertices] == 0.0)
    assert np.all(L[model_mesh.outer_vertices] == 0.0)
    assert np.abs(L).max() > 0


def test_volume_load_vanishes_on_uniform_mesh():
    m = structured_rect(1.0, 1.0, 6, 6)
    L = preshape.assemble_volume_tracking_rhs(m, _state(m), T1, 100.0)
    assert np.max(np.abs(L)) < 1e-9


@pytest.mark.parametrize("name", ["hexagon", "model_mesh", "graded_rect"])
def test_tracking_loads_match_finite_differences(name, request):
    mesh = request.getfixturevalue(name)
    s = check_shape_tracking(mesh)
    v = check_volume_tracking(mesh)
    assert s.directions > 0 and v.directions > 0
    assert s.passed, s
    assert v.passed, v


def test_volume_fd_needs_free_vertices(square_in_square):
    with pytest.raises(ValueError):
        check_volume_tracking(square_in_square)


# ------------------------------------------------------------------ projection

def test_projection_constant_field(model_mesh):
    P = preshape.project_interior(np.ones((model_mesh.n_vertices, 2)), model_mesh)
    fixed = np.union1d(model_mesh.shape_vertices, model_mesh.outer_vertices)
    assert np.all(P[fixed] == 0.0)
    assert np.all(np.delete(P, fixed, axis=0) == 1.0)


def test_projection_idempotent_and_identity_on_subspace(model_mesh):
    rng = np.random.default_rng(1)
    F = rng.normal(size=(model_mesh.n_vertices, 2))
    P = preshape.project_interior(F, model_mesh)
    assert np.array_equal(preshape.project_interior(P, model_mesh), P)
    assert preshape.project_interior(F, model_mesh) is not F
