"""Legacy ASCII VTK (version 2.0) output of triangle meshes with point data."""
from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, mesh, point_data=None, title="preshape_opt mesh"):
    """Write an UNSTRUCTURED_GRID with triangle cells, point scalars and region labels."""
    point_data = point_data or {}
    n, m = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {n} double"]
    out += [f"{x!r} {y!r} 0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {m} {4 * m}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {m}")
    out += [str(VTK_TRIANGLE)] * m
    out += [f"CELL_DATA {m}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    out += [str(int(v)) for v in mesh.labels]
    if point_data:
        out.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"point data {name!r} has shape {values.shape}, expected ({n},)")
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk(path):
    """Parse a file written by :func:`write_vtk`.

    Returns ``(points (n, 3), cells (m, 3), cell_types (m,), point_data, cell_data)``.
    """
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise ValueError("not a legacy VTK file")
    if tokens[2].strip() != "ASCII":
        raise ValueError("only ASCII files are supported")
    words = " ".join(tokens[3:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        out = words[pos:pos + k]
        pos += k
        return out

    if take(2) != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise ValueError("expected DATASET UNSTRUCTURED_GRID")
    points = cells = types = None
    point_data, cell_data = {}, {}
    section = None
    while pos < len(words):
        key = take(1)[0]
        if key == "POINTS":
            n = int(take(2)[0])
            points = np.array(take(3 * n), dtype=float).reshape(n, 3)
        elif key == "CELLS":
            m, size = (int(v) for v in take(2))
            raw = np.array(take(size), dtype=np.int64).reshape(m, -1)
            if np.any(raw[:, 0] != 3):
                raise ValueError("only triangle cells are supported")
            cells = raw[:, 1:]
        elif key == "CELL_TYPES":
            m = int(take(1)[0])
            types = np.array(take(m), dtype=np.int64)
        elif key == "POINT_DATA":
            take(1)
            section = point_data
        elif key == "CELL_DATA":
            take(1)
            section = cell_data
        elif key == "SCALARS":
            name, _dtype, _ncomp = take(3)
            if take(2) != ["LOOKUP_TABLE", "default"]:
                raise ValueError("expected LOOKUP_TABLE default")
            count = len(points) if section is point_data else len(cells)
            section[name] = np.array(take(count), dtype=float)
        else:
            raise ValueError(f"unexpected keyword {key!r}")
    return points, cells, types, point_data, cell_data
