from __future__ import annotations

import numpy as np
import pytest

from preshape_opt.mesh import (InvertedElementsError, MeshParseError, MeshTopologyError, Region, TriMesh,
                               geometry, load_msh, morph, polygon_area, shape_frames, write_msh)


def _msh(nodes, elements):
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(nodes))]
    lines += [f"{i + 1} {x} {y} 0" for i, (x, y) in enumerate(nodes)]
    lines += ["$EndNodes", "$Elements", str(len(elements))]
    lines += [f"{k + 1} {e}" for k, e in enumerate(elements)]
    lines.append("$EndElements")
    return "\n".join(lines) + "\n"


def test_unit_square_without_loop_is_rejected(tmp_path):
    path = tmp_path / "sq.msh"
    path.write_text(_msh([(0, 0), (1, 0), (1, 1), (0, 1)],
                         ["2 2 20 20 1 2 3", "2 2 20 20 1 3 4",
                          "1 2 2 2 1 2", "1 2 2 2 2 3", "1 2 2 2 3 4", "1 2 2 2 4 1"]))
    with pytest.raises(MeshTopologyError, match="no shape loop"):
        load_msh(path)


def test_model_mesh_counts(model_mesh):
    # 741 vertices and 1402 triangles: the only assignment of the two counts
    # compatible with Euler's formula for a triangulated rectangle
    assert model_mesh.n_vertices == 741
    assert model_mesh.n_triangles == 1402
    assert len(model_mesh.shape_loop) == 63
    b = len(model_mesh.outer_vertices)
    assert model_mesh.n_triangles == 2 * model_mesh.n_vertices - b - 2


def test_model_mesh_geometry(model_mesh):
    assert geometry(model_mesh).areas.sum() == pytest.approx(2.35, abs=1e-10)
    r = np.linalg.norm(model_mesh.vertices[model_mesh.shape_loop] - [0.5, 0.5], axis=1)
    assert np.allclose(r, 0.35, atol=1e-12)
    assert polygon_area(model_mesh.vertices[model_mesh.shape_loop]) > 0


def test_square_in_square_inner_region(square_in_square):
    m = square_in_square
    inner = m.labels == Region.INNER
    assert inner.sum() == 2
    assert m.n_triangles == 10
    # inner triangles exactly tile the loop polygon (shoelace)
    assert m.areas()[inner].sum() == pytest.approx(polygon_area(m.vertices[m.shape_loop]), abs=1e-15)
    assert polygon_area(m.vertices[m.shape_loop]) == pytest.approx(0.25)


def test_load_reorients_triangles_and_loop(tmp_path, square_in_square):
    m = square_in_square
    nodes = m.vertices.tolist()
    elems = []
    for (a, b, c), lab in zip(m.triangles, m.labels):
        elems.append(f"2 2 {lab} {lab} {a + 1} {c + 1} {b + 1}")  # clockwise
    loop = m.shape_loop[::-1]  # clockwise loop
    for a, b in zip(loop, np.roll(loop, -1)):
        elems.append(f"1 2 1 1 {a + 1} {b + 1}")
    for a, b in m.outer_edges:
        elems.append(f"1 2 2 2 {a + 1} {b + 1}")
    elems.append("15 2 0 0 1")  # point element: ignored
    path = tmp_path / "cw.msh"
    path.write_text(_msh(nodes, elems).replace("$Elements", "$PhysicalNames\n0\n$EndPhysicalNames\n$Elements"))
    loaded = load_msh(path)
    assert np.all(loaded.areas() > 0)
    assert polygon_area(loaded.vertices[loaded.shape_loop]) > 0


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.msh"
    bad.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n2\n1 0 0\n")
    with pytest.raises(MeshParseError):
        load_msh(bad)
    with pytest.raises(MeshParseError):
        load_msh(tmp_path / "missing.msh")
    nonplanar = tmp_path / "z.msh"
    nonplanar.write_text(_msh([(0, 0), (1, 0), (0, 1)], ["2 2 20 20 1 2 3"]).replace("1 0 0", "1 0 0.5"))
    with pytest.raises(MeshParseError):
        load_msh(nonplanar)


def test_open_loop_is_rejected(tmp_path, square_in_square):
    m = square_in_square
    elems = [f"2 2 {lab} {lab} {a + 1} {b + 1} {c + 1}" for (a, b, c), lab in zip(m.triangles, m.labels)]
    elems += [f"1 2 1 1 {a + 1} {b + 1}" for a, b in m.shape_edges[:3]]
    elems += [f"1 2 2 2 {a + 1} {b + 1}" for a, b in m.outer_edges]
    path = tmp_path / "open.msh"
    path.write_text(_msh(m.vertices.tolist(), elems))
    with pytest.raises(MeshTopologyError):
        load_msh(path)


def test_roundtrip_is_exact(tmp_path, model_mesh):
    path = tmp_path / "rt.msh"
    write_msh(model_mesh, path)
    again = load_msh(path)
    assert np.array_equal(again.vertices, model_mesh.vertices)
    assert np.array_equal(again.triangles, model_mesh.triangles)
    assert np.array_equal(again.labels, model_mesh.labels)
    assert np.array_equal(again.shape_loop, model_mesh.shape_loop)


def test_unit_right_triangle_geometry():
    m = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [Region.OUTER], [], [], validate=False)
    g = geometry(m)
    assert g.areas[0] == 0.5
    assert np.allclose(g.grads[0], [[-1, -1], [1, 0], [0, 1]], atol=1e-15)


def test_equilateral_area():
    m = TriMesh([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]], [[0, 1, 2]], [Region.OUTER], [], [], validate=False)
    assert geometry(m).areas[0] == pytest.approx(np.sqrt(3) / 4, abs=1e-14)


def test_hexagon_normals_radial(hexagon):
    f = shape_frames(hexagon)
    r = hexagon.vertices[hexagon.shape_loop] - [0.5, 0.5]
    r /= np.linalg.norm(r, axis=1)[:, None]
    assert np.allclose(f.normal, r, atol=1e-12)


def test_circle_normals(model_mesh):
    f = shape_frames(model_mesh)
    r = model_mesh.vertices[model_mesh.shape_loop] - [0.5, 0.5]
    r /= np.linalg.norm(r, axis=1)[:, None]
    assert np.max(np.abs(np.sum(f.normal * r, axis=1) - 1)) < 1e-3
    assert np.allclose(np.linalg.norm(f.tangent, axis=1), 1, atol=1e-12)
    assert np.allclose(np.sum(f.tangent * f.normal, axis=1), 0, atol=1e-12)
    assert f.lumped_length.sum() == pytest.approx(model_mesh.loop_length(), abs=1e-12)


def test_collinear_edges_give_shared_tangent(square_in_square):
    m = square_in_square
    v = m.vertices.copy()
    loop = m.shape_loop
    # put one loop vertex on the segment between its neighbors
    a, b, c = loop[-1], loop[0], loop[1]
    v[b] = 0.5 * (v[a] + v[c])
    m2 = TriMesh(v, m.triangles, m.labels, loop, m.outer_edges, validate=False)
    f = shape_frames(m2)
    d = (v[c] - v[a]) / np.linalg.norm(v[c] - v[a])
    assert np.allclose(f.tangent[0], d, atol=1e-15, rtol=0)


def test_degenerate_shape_edge(square_in_square):
    m = square_in_square
    v = m.vertices.copy()
    v[m.shape_loop[1]] = v[m.shape_loop[0]]
    m2 = TriMesh(v, m.triangles, m.labels, m.shape_loop, m.outer_edges, validate=False)
    with pytest.raises(MeshTopologyError):
        shape_frames(m2)


def test_morph_zero_and_translation(model_mesh):
    before = model_mesh.vertices.copy()
    morph(model_mesh, np.zeros_like(before))
    assert np.array_equal(model_mesh.vertices, before)
    a0 = model_mesh.areas()
    morph(model_mesh, np.tile([0.1, 0.0], (model_mesh.n_vertices, 1)))
    assert np.allclose(model_mesh.areas(), a0, atol=1e-12, rtol=0)


def test_morph_reports_collapsed_triangle(square_in_square):
    m = square_in_square
    t = 8  # inner triangle (4, 5, 6)
    a, b, c = m.triangles[t]
    V = np.zeros_like(m.vertices)
    V[c] = 0.5 * (m.vertices[a] + m.vertices[b]) - m.vertices[c]  # onto the opposite edge
    before = m.vertices.copy()
    with pytest.raises(InvertedElementsError) as info:
        morph(m, V)
    assert t in info.value.triangles.tolist()
    assert np.array_equal(m.vertices, before)  # nothing committed
