"""Generate the bundled mesh files.

Development helper, not part of the installed package. Needs the ``triangle``
package (constrained Delaunay triangulation) in addition to the runtime
dependencies::

    pip install triangle
    python tools/make_meshes.py src/preshape_opt/data
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import triangle

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from preshape_opt.mesh import Region, from_arrays, write_msh  # noqa: E402

WIDTH, HEIGHT = 1.0, 2.35
CENTER, RADIUS, N_SHAPE = np.array([0.5, 0.5]), 0.35, 63
N_X, N_Y = 12, 27          # outer boundary segments per side
N_INTERIOR = 600


def rectangle_points(width, height, nx, ny):
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    pts = ([(x, 0.0) for x in xs[:-1]] + [(width, y) for y in ys[:-1]]
           + [(x, height) for x in xs[::-1][:-1]] + [(0.0, y) for y in ys[::-1][:-1]])
    return np.array(pts)


def loop_segments(start, count):
    idx = np.arange(count) + start
    return np.column_stack([idx, np.roll(idx, -1)])


def circle_points(center, radius, n, warp=0.0):
    """``n`` points on a circle; ``warp`` > 0 makes the spacing vary smoothly by +-warp."""
    s = 2 * np.pi * np.arange(n) / n
    t = s + warp * np.sin(s)
    return center + radius * np.column_stack([np.cos(t), np.sin(t)])


def bump_curve(t):
    """Bottle-like target: a disc with a smooth neck pointing upward."""
    center = np.array([0.5, 0.9])
    r = 0.3 + 0.3 * np.exp(-((np.angle(np.exp(1j * (t - np.pi / 2)))) / 0.5) ** 2)
    return center + r[:, None] * np.column_stack([np.cos(t), np.sin(t)])


def resample_closed(curve, n, dense=20000):
    """``n`` points equidistant in arc length along a parametric closed curve."""
    t = np.linspace(0.0, 2 * np.pi, dense, endpoint=False)
    p = curve(t)
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], n, endpoint=False)
    tt = np.interp(target, s, np.concatenate([t, [2 * np.pi]]))
    return curve(tt)


def point_in_polygon(points, poly):
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    for (x0, y0), (x1, y1) in zip(poly, np.roll(poly, -1, axis=0)):
        cross = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cross & (x < xi)
    return inside


def build(points, outer_seg, shape_seg, shape_poly, opts="p"):
    tri = triangle.triangulate({"vertices": points, "segments": np.vstack([outer_seg, shape_seg])}, opts)
    v, t = tri["vertices"], tri["triangles"]
    labels = np.where(point_in_polygon(v[t].mean(axis=1), shape_poly), Region.INNER, Region.OUTER)
    edges = np.sort(tri["segments"], axis=1)
    key = {tuple(e) for e in np.sort(shape_seg, axis=1)}
    is_shape = np.array([tuple(e) in key for e in edges])
    # segments must come back unsplit so the loop keeps its vertices
    if len(key) != is_shape.sum():
        raise RuntimeError("shape segments were split")
    return from_arrays(v, t, labels, edges[is_shape], edges[~is_shape])


def min_angle(mesh):
    p = mesh.vertices[mesh.triangles]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    return float(np.min(angles))


def model_mesh(seed=3, warp=0.02):
    """Disc of radius 0.35 in [0,1]x[0,2.35], refined near the disc boundary."""
    rng = np.random.default_rng(seed)
    outer = rectangle_points(WIDTH, HEIGHT, N_X, N_Y)
    circ = circle_points(CENTER, RADIUS, N_SHAPE, warp=warp)
    fixed = np.vstack([outer, circ])
    n_fix = len(fixed)

    def size(x):
        d = np.abs(np.linalg.norm(x - CENTER, axis=1) - RADIUS)
        return np.minimum(0.035 + 0.22 * d, 0.1)

    # rejection sampling with density ~ 1/h^2
    cand = rng.uniform([0, 0], [WIDTH, HEIGHT], size=(200000, 2))
    accept = rng.uniform(size=len(cand)) < (0.035 / size(cand)) ** 2
    cand = cand[accept]
    margin = 0.5 * size(cand)
    away = (np.abs(np.linalg.norm(cand - CENTER, axis=1) - RADIUS) > margin) \
        & (cand[:, 0] > margin) & (cand[:, 0] < WIDTH - margin) \
        & (cand[:, 1] > margin) & (cand[:, 1] < HEIGHT - margin)
    cand = cand[away]
    interior = cand[rng.choice(len(cand), N_INTERIOR, replace=False)]

    outer_seg = loop_segments(0, len(outer))
    shape_seg = loop_segments(len(outer), N_SHAPE)
    inside0 = np.linalg.norm(interior - CENTER, axis=1) < RADIUS
    pts = np.vstack([fixed, interior])
    for _ in range(300):
        tri = triangle.triangulate({"vertices": pts, "segments": np.vstack([outer_seg, shape_seg])}, "p")
        if len(tri["vertices"]) != len(pts):
            raise RuntimeError("triangulation inserted points")
        t = tri["triangles"]
        edges = np.unique(np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1), axis=0)
        vec = pts[edges[:, 1]] - pts[edges[:, 0]]
        L = np.linalg.norm(vec, axis=1)
        h = size(0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]]))
        L0 = h * 1.2 * np.sqrt(np.sum(L ** 2) / np.sum(h ** 2))
        F = np.maximum(L0 - L, 0.0) / L
        force = np.zeros_like(pts)
        np.add.at(force, edges[:, 0], -F[:, None] * vec)
        np.add.at(force, edges[:, 1], F[:, None] * vec)
        force[:n_fix] = 0.0
        new = pts + 0.2 * force
        # stay inside the rectangle and on the original side of the circle
        q = new[n_fix:]
        m = 0.3 * size(q)
        q[:, 0] = np.clip(q[:, 0], m, WIDTH - m)
        q[:, 1] = np.clip(q[:, 1], m, HEIGHT - m)
        rad = np.linalg.norm(q - CENTER, axis=1)
        lo = np.where(inside0, 0.0, RADIUS + m)
        hi = np.where(inside0, RADIUS - m, np.inf)
        scale = np.clip(rad, lo, hi) / np.maximum(rad, 1e-12)
        q = CENTER + (q - CENTER) * scale[:, None]
        new[n_fix:] = q
        pts = new
    return build(pts, outer_seg, shape_seg, circ)


def target_mesh(n_shape=1200):
    """Fine mesh of the same rectangle around the bottle-like target curve."""
    curve = resample_closed(bump_curve, n_shape)
    outer = rectangle_points(WIDTH, HEIGHT, 40, 94)
    pts = np.vstack([outer, curve])
    outer_seg = loop_segments(0, len(outer))
    shape_seg = loop_segments(len(outer), n_shape)
    return build(pts, outer_seg, shape_seg, curve, opts="pq28YYa0.0006")


def hexagon_mesh():
    """Regular hexagon of radius 0.3 inside the unit square, with interior vertices."""
    outer = rectangle_points(1.0, 1.0, 4, 4)
    t = 2 * np.pi * np.arange(6) / 6
    hexa = np.array([0.5, 0.5]) + 0.3 * np.column_stack([np.cos(t), np.sin(t)])
    pts = np.vstack([outer, hexa])
    return build(pts, loop_segments(0, len(outer)), loop_segments(len(outer), 6), hexa, opts="pq30YYa0.02")


def square_in_square():
    """Unit square with an inner square loop: 8 vertices, 10 triangles, 2 inside."""
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1],
                  [0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75]], dtype=float)
    tris = [[0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
            [4, 5, 6], [4, 6, 7]]
    labels = [Region.OUTER] * 8 + [Region.INNER] * 2
    return from_arrays(v, tris, labels, [[4, 5], [5, 6], [6, 7], [7, 4]], [[0, 1], [1, 2], [2, 3], [3, 0]])


def graded_rect():
    """10x20 grid on [0,1]x[0,2] (400 triangles) with a square loop, nonuniformly distorted.

    The distortion vanishes on the outer boundary and on the loop, so the
    uniform grid is reachable by moving interior vertices only.
    """
    xs, ys = np.linspace(0, 1, 11), np.linspace(0, 2, 21)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(11 * 21).reshape(11, 21)
    tris, labels = [], []
    for i in range(10):
        for j in range(20):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            inner = 3 <= i < 7 and 8 <= j < 12
            lab = Region.INNER if inner else Region.OUTER
            tris += [[a, b, c], [a, c, d]] if (i + j) % 2 == 0 else [[a, b, d], [b, c, d]]
            labels += [lab, lab]
    loop = [idx[i, 8] for i in range(3, 7)] + [idx[7, j] for j in range(8, 12)] \
        + [idx[i, 12] for i in range(7, 3, -1)] + [idx[3, j] for j in range(12, 8, -1)]
    shape_edges = np.column_stack([loop, np.roll(loop, -1)])
    outer = [idx[i, 0] for i in range(10)] + [idx[10, j] for j in range(20)] \
        + [idx[i, 20] for i in range(10, 0, -1)] + [idx[0, j] for j in range(20, 0, -1)]
    outer_edges = np.column_stack([outer, np.roll(outer, -1)])
    x, y = v[:, 0], v[:, 1]
    bubble = x * (1 - x) * y * (2 - y) * (x - 0.3) * (x - 0.7) * (y - 0.8) * (y - 1.2)
    bubble /= np.abs(bubble).max()
    v = v + 0.045 * bubble[:, None] * np.column_stack([np.ones_like(x), 2 * np.ones_like(y)])
    return from_arrays(v, tris, labels, shape_edges, outer_edges)


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = {
        "disc_in_rect.msh": model_mesh(),
        "bottle_target.msh": target_mesh(),
        "hexagon.msh": hexagon_mesh(),
        "square_in_square.msh": square_in_square(),
        "graded_rect.msh": graded_rect(),
    }
    for name, mesh in meshes.items():
        write_msh(mesh, out / name)
        print(f"{name}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
              f"{len(mesh.shape_loop)} shape vertices, {len(mesh.outer_vertices)} outer vertices, "
              f"min angle {min_angle(mesh):.1f} deg")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/preshape_opt/data")
