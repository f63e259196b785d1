"""Triangle mesh of a 2D hold-all domain with one embedded closed shape curve.

The mesh carries region labels per triangle (inside/outside the shape), the
shape curve as a counterclockwise vertex loop and the outer boundary edges.
Topology is fixed for the lifetime of a mesh; only coordinates change.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SHAPE_TAG = 1
OUTER_TAG = 2


class Region(enum.IntEnum):
    INNER = 10
    OUTER = 20


class MeshError(Exception):
    pass


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


class InvertedElementsError(MeshError):
    """Raised when a coordinate update produces non-positive triangle areas."""

    def __init__(self, triangles):
        self.triangles = np.asarray(triangles, dtype=int)
        super().__init__(f"{len(self.triangles)} inverted triangle(s): {self.triangles[:10].tolist()}")


def signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def polygon_area(points):
    """Shoelace area of a closed polygon given as an ordered point list."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class TriMesh:
    """Triangulated hold-all domain with an embedded shape loop.

    Parameters
    ----------
    vertices : (n, 2) array
    triangles : (m, 3) int array, counterclockwise
    labels : (m,) int array of :class:`Region` values
    shape_loop : (k,) int array
        Shape vertices in counterclockwise loop order. Edge ``i`` joins
        ``shape_loop[i]`` and ``shape_loop[i + 1]`` (cyclically).
    outer_edges : (b, 2) int array
    """

    def __init__(self, vertices, triangles, labels, shape_loop, outer_edges, validate=True):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        self.labels = np.array(labels, dtype=np.int64).reshape(-1)
        self.shape_loop = np.array(shape_loop, dtype=np.int64).reshape(-1)
        self.outer_edges = np.array(outer_edges, dtype=np.int64).reshape(-1, 2)
        if validate:
            self.validate()

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def shape_edges(self):
        return np.column_stack([self.shape_loop, np.roll(self.shape_loop, -1)])

    @property
    def shape_vertices(self):
        return self.shape_loop

    @property
    def outer_vertices(self):
        return np.unique(self.outer_edges)

    @property
    def inner_mask(self):
        return self.labels == Region.INNER

    def copy(self):
        return TriMesh(self.vertices.copy(), self.triangles, self.labels, self.shape_loop,
                       self.outer_edges, validate=False)

    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    def shape_edge_lengths(self):
        e = self.shape_edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def loop_length(self):
        return float(self.shape_edge_lengths().sum())

    def validate(self):
        n = self.n_vertices
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise MeshTopologyError("triangle index out of range")
        if len(self.labels) != self.n_triangles:
            raise MeshTopologyError("one region label per triangle required")
        if not np.all(np.isin(self.labels, [Region.INNER, Region.OUTER])):
            raise MeshTopologyError("unknown region label")
        bad = np.flatnonzero(self.areas() <= 0.0)
        if len(bad):
            raise InvertedElementsError(bad)
        if len(self.shape_loop) < 3:
            raise MeshTopologyError("no shape loop")
        if len(np.unique(self.shape_loop)) != len(self.shape_loop):
            raise MeshTopologyError("shape loop visits a vertex twice")

        owners = _edge_owners(self.triangles)
        for a, b in self.shape_edges:
            tris = owners.get((min(a, b), max(a, b)), [])
            labs = sorted(self.labels[t] for t in tris)
            if labs != [Region.INNER, Region.OUTER]:
                raise MeshTopologyError(f"shape edge ({a}, {b}) must separate one inner and one outer triangle")
        boundary = {k for k, v in owners.items() if len(v) == 1}
        if any(len(v) > 2 for v in owners.values()):
            raise MeshTopologyError("non-manifold edge")
        outer = {(min(a, b), max(a, b)) for a, b in self.outer_edges}
        if outer != boundary:
            raise MeshTopologyError("outer edges do not match the topological boundary")
        if np.intersect1d(self.shape_loop, self.outer_vertices).size:
            raise MeshTopologyError("shape loop touches the outer boundary")
        if polygon_area(self.vertices[self.shape_loop]) <= 0.0:
            raise MeshTopologyError("shape loop is not counterclockwise")


def _edge_owners(triangles):
    owners = {}
    for t, tri in enumerate(triangles):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            owners.setdefault((min(a, b), max(a, b)), []).append(t)
    return owners


def order_loop(edges):
    """Chain undirected edges into a single closed vertex loop."""
    edges = [tuple(int(v) for v in e) for e in edges]
    if not edges:
        raise MeshTopologyError("no shape loop")
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in adj.values()):
        raise MeshTopologyError("shape loop not closed")
    start = edges[0][0]
    loop = [start]
    prev, cur = start, adj[start][0]
    while cur != start:
        loop.append(cur)
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        prev, cur = cur, nxt
    if len(loop) != len(adj):
        raise MeshTopologyError("shape edges form more than one loop")
    return np.array(loop, dtype=np.int64)


def from_arrays(vertices, triangles, labels, shape_edges, outer_edges):
    """Build a mesh, fixing triangle orientation and shape loop order."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    area = signed_areas(vertices, triangles)
    if np.any(area == 0.0):
        raise MeshTopologyError(f"degenerate triangles: {np.flatnonzero(area == 0.0)[:10].tolist()}")
    flip = area < 0.0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    loop = order_loop(shape_edges)
    if polygon_area(vertices[loop]) < 0.0:
        loop = loop[::-1].copy()
    return TriMesh(vertices, triangles, labels, loop, outer_edges)


def load_msh(path):
    """Read an ASCII Gmsh 2.2 file into a :class:`TriMesh`.

    Lines tagged 1 are the shape curve, lines tagged 2 the outer boundary,
    triangles tagged 10/20 the inner/outer region. Other element types are
    ignored, as are sections other than $MeshFormat, $Nodes and $Elements.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise MeshParseError(f"cannot read mesh file {path}: {err}") from err
    lines = [ln.strip() for ln in text.splitlines()]
    sections = {}
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("$") and not ln.startswith("$End"):
            name = ln[1:]
            end = f"$End{name}"
            try:
                j = lines.index(end, i + 1)
            except ValueError:
                raise MeshParseError(f"section ${name} is not terminated") from None
            sections[name] = lines[i + 1:j]
            i = j + 1
        else:
            i += 1

    fmt = sections.get("MeshFormat")
    if not fmt or not fmt[0].split() or not fmt[0].split()[0].startswith("2"):
        raise MeshParseError("expected $MeshFormat 2.2 ASCII")
    if fmt[0].split()[1] != "0":
        raise MeshParseError("binary MSH files are not supported")
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshParseError("missing $Nodes or $Elements")

    try:
        nodes = sections["Nodes"]
        n = int(nodes[0])
        ids = np.empty(n, dtype=np.int64)
        xyz = np.empty((n, 3))
        for k in range(n):
            parts = nodes[1 + k].split()
            ids[k] = int(parts[0])
            xyz[k] = [float(v) for v in parts[1:4]]
    except (IndexError, ValueError) as err:
        raise MeshParseError(f"malformed $Nodes section: {err}") from err
    if np.any(xyz[:, 2] != 0.0):
        raise MeshParseError("third coordinate must be 0 for a planar mesh")
    index_of = {int(v): k for k, v in enumerate(ids)}

    shape_edges, outer_edges, tris, labels = [], [], [], []
    try:
        elems = sections["Elements"]
        m = int(elems[0])
        for k in range(m):
            parts = [int(v) for v in elems[1 + k].split()]
            etype, ntags = parts[1], parts[2]
            tag = parts[3] if ntags > 0 else None
            conn = [index_of[v] for v in parts[3 + ntags:]]
            if etype == 1:
                if tag == SHAPE_TAG:
                    shape_edges.append(conn)
                elif tag == OUTER_TAG:
                    outer_edges.append(conn)
                else:
                    raise MeshTopologyError(f"line element with unknown physical tag {tag}")
            elif etype == 2:
                if tag not in (Region.INNER, Region.OUTER):
                    raise MeshTopologyError(f"triangle with unknown physical tag {tag}")
                tris.append(conn)
                labels.append(tag)
    except (IndexError, ValueError, KeyError) as err:
        raise MeshParseError(f"malformed $Elements section: {err}") from err

    if not tris:
        raise MeshTopologyError("no triangles")
    tris = np.array(tris, dtype=np.int64)
    keys = np.sort(tris, axis=1)
    if len(np.unique(keys, axis=0)) != len(keys):
        raise MeshTopologyError("duplicate triangles")
    if not shape_edges:
        raise MeshTopologyError("no shape loop")

    used = np.unique(tris)
    remap = -np.ones(n, dtype=np.int64)
    remap[used] = np.arange(len(used))
    shape_edges = np.array(shape_edges, dtype=np.int64)
    outer_edges = np.array(outer_edges, dtype=np.int64).reshape(-1, 2)
    if np.any(remap[shape_edges] < 0) or np.any(remap[outer_edges] < 0):
        raise MeshTopologyError("line element references a node without triangles")
    return from_arrays(xyz[used, :2], remap[tris], labels, remap[shape_edges], remap[outer_edges])


def write_msh(mesh, path):
    """Write ``mesh`` as ASCII Gmsh 2.2 using the physical tag convention of :func:`load_msh`."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements"]
    elems = []
    for a, b in mesh.shape_edges:
        elems.append(f"1 2 {SHAPE_TAG} {SHAPE_TAG} {a + 1} {b + 1}")
    for a, b in mesh.outer_edges:
        elems.append(f"1 2 {OUTER_TAG} {OUTER_TAG} {a + 1} {b + 1}")
    for (a, b, c), lab in zip(mesh.triangles, mesh.labels):
        elems.append(f"2 2 {lab} {lab} {a + 1} {b + 1} {c + 1}")
    out.append(str(len(elems)))
    out += [f"{k + 1} {e}" for k, e in enumerate(elems)]
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")


@dataclass
class ShapeFrame:
    """Per shape vertex (in loop order): unit tangent, outward normal, lumped length."""

    vertices: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    lumped_length: np.ndarray


def shape_frames(mesh):
    """Tangent frames on the shape loop.

    The tangent at a vertex is the normalized sum of its two incident unit
    edge tangents, oriented along the loop; the normal is the tangent rotated
    by -90 degrees, which points out of the inner region for a
    counterclockwise loop.
    """
    loop = mesh.shape_loop
    p = mesh.vertices[loop]
    d = np.roll(p, -1, axis=0) - p
    length = np.linalg.norm(d, axis=1)
    if np.any(length < 1e-14):
        raise MeshTopologyError(f"degenerate shape edge(s): {np.flatnonzero(length < 1e-14).tolist()}")
    t_edge = d / length[:, None]
    t = t_edge + np.roll(t_edge, 1, axis=0)
    tn = np.linalg.norm(t, axis=1)
    if np.any(tn < 1e-14):
        raise MeshTopologyError("shape loop folds back on itself")
    t /= tn[:, None]
    n = np.column_stack([t[:, 1], -t[:, 0]])
    lumped = 0.5 * (length + np.roll(length, 1))
    return ShapeFrame(loop.copy(), t, n, lumped)


def morph(mesh, displacement):
    """Move every vertex by ``displacement`` in place.

    The update is only committed if all triangles keep a positive area;
    otherwise :class:`InvertedElementsError` lists the offending triangles
    and the mesh is left untouched.
    """
    displacement = np.asarray(displacement, dtype=float)
    if displacement.shape != mesh.vertices.shape:
        raise ValueError(f"displacement shape {displacement.shape} != {mesh.vertices.shape}")
    if not np.all(np.isfinite(displacement)):
        raise ValueError("non-finite displacement")
    new = mesh.vertices + displacement
    bad = np.flatnonzero(signed_areas(new, mesh.triangles) <= 0.0)
    if len(bad):
        raise InvertedElementsError(bad)
    mesh.vertices = new
    return mesh


@dataclass
class Geometry:
    areas: np.ndarray          # (m,)
    grads: np.ndarray          # (m, 3, 2) gradients of the P1 hat functions
    midpoints: np.ndarray      # (m, 3, 2) edge midpoints, see geometry()
    shape_lengths: np.ndarray  # (k,)
    shape_tangents: np.ndarray  # (k, 2) unit edge tangents along the loop
    shape_midpoints: np.ndarray  # (k, 2)


def geometry(mesh):
    """Element-level geometric quantities for the current coordinates.

    ``midpoints[t, i]`` is the midpoint of the edge joining local vertices
    ``i`` and ``(i + 1) % 3``.
    """
    v = mesh.vertices
    tri = mesh.triangles
    p0, p1, p2 = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    if np.any(det <= 0.0):
        raise InvertedElementsError(np.flatnonzero(det <= 0.0))
    grads = np.empty((len(tri), 3, 2))
    grads[:, 0] = np.column_stack([p1[:, 1] - p2[:, 1], p2[:, 0] - p1[:, 0]])
    grads[:, 1] = np.column_stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]])
    grads[:, 2] = np.column_stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]])
    grads /= det[:, None, None]
    mids = 0.5 * np.stack([p0 + p1, p1 + p2, p2 + p0], axis=1)

    e = mesh.shape_edges
    d = v[e[:, 1]] - v[e[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    return Geometry(
        areas=0.5 * det,
        grads=grads,
        midpoints=mids,
        shape_lengths=lengths,
        shape_tangents=d / lengths[:, None],
        shape_midpoints=0.5 * (v[e[:, 0]] + v[e[:, 1]]),
    )
