"""Small programmatic meshes for checks and tests."""
from __future__ import annotations

import numpy as np

from .mesh import Region, from_arrays


def structured_rect(width=1.0, height=1.0, nx=8, ny=8, box=None):
    """Rectangle split into ``nx * ny`` cells of two triangles each.

    ``box = (i0, i1, j0, j1)`` selects the cells ``i0 <= i < i1``,
    ``j0 <= j < j1`` as the inner region; its boundary is the shape loop.
    Defaults to the middle half of the cells in each direction.
    """
    if box is None:
        box = (nx // 4, nx - nx // 4, ny // 4, ny - ny // 4)
    i0, i1, j0, j1 = box
    if not (0 < i0 < i1 < nx and 0 < j0 < j1 < ny):
        raise ValueError("inner box must lie strictly inside the grid")
    xs, ys = np.linspace(0, width, nx + 1), np.linspace(0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris, labels = [], []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            lab = Region.INNER if (i0 <= i < i1 and j0 <= j < j1) else Region.OUTER
            tris += [[a, b, c], [a, c, d]] if (i + j) % 2 == 0 else [[a, b, d], [b, c, d]]
            labels += [lab, lab]
    loop = [idx[i, j0] for i in range(i0, i1)] + [idx[i1, j] for j in range(j0, j1)] \
        + [idx[i, j1] for i in range(i1, i0, -1)] + [idx[i0, j] for j in range(j1, j0, -1)]
    outer = [idx[i, 0] for i in range(nx)] + [idx[nx, j] for j in range(ny)] \
        + [idx[i, ny] for i in range(nx, 0, -1)] + [idx[0, j] for j in range(ny, 0, -1)]
    return from_arrays(v, tris, labels,
                       np.column_stack([loop, np.roll(loop, -1)]),
                       np.column_stack([outer, np.roll(outer, -1)]))


def bounding_box(mesh):
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return lo, hi


def unrelated_target(mesh, n=7):
    """Mesh of the same rectangle whose element edges avoid those of ``mesh``.

    A structured grid with its interior vertices shifted by an irrational
    smooth field, so that grid-aligned quadrature points of ``mesh`` do not
    fall on its element boundaries.
    """
    lo, hi = bounding_box(mesh)
    size = hi - lo
    m = structured_rect(size[0], size[1], n, n)
    x = m.vertices / size
    shift = np.column_stack([np.sin(np.pi * x[:, 0]) * np.sin(np.sqrt(2) * np.pi * x[:, 1]),
                             np.sin(np.sqrt(3) * np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])])
    shift[m.outer_vertices] = 0.0
    m.vertices = lo + m.vertices + 0.17 * shift * size / n
    m.validate()
    return m
