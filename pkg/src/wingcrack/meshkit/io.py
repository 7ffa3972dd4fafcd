"""Plain-text mesh exchange and VTK legacy ASCII export."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import GeometryError
from .geometry import FractureNetwork, Rectangle
from .grid import Triangulation, _validate_triangulation, check_conformity


def write_mesh(tri: Triangulation, path) -> None:
    """Write `nodes N triangles T fractures F`, then node, triangle and polyline lines."""
    lines = [f"nodes {len(tri.nodes)} triangles {len(tri.tris)} fractures {len(tri.frac_paths)}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(tri.nodes.tolist())]
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(tri.tris.tolist())]
    for k, p in enumerate(tri.frac_paths):
        xy = tri.nodes[np.asarray(p)]
        coords = " ".join(f"{x!r} {y!r}" for x, y in xy.tolist())
        lines.append(f"{k} {len(p)} {coords}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, domain: Rectangle | None = None, tip_ids=()) -> Triangulation:
    """Read the plain-text mesh format.

    Fracture polylines are matched to mesh nodes (within 1e-9 m); the first
    and last listed vertices become the fracture tips.
    """
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    head = rows[0]
    if len(head) != 6 or head[0] != "nodes" or head[2] != "triangles" or head[4] != "fractures":
        raise GeometryError(f"bad mesh header: {' '.join(head)}")
    n, t, f = int(head[1]), int(head[3]), int(head[5])
    if len(rows) < 1 + n + t + f:
        raise GeometryError("mesh file is truncated")
    nodes = np.zeros((n, 2))
    for r in rows[1: 1 + n]:
        nodes[int(r[0])] = float(r[1]), float(r[2])
    tris = np.zeros((t, 3), dtype=np.int64)
    for r in rows[1 + n: 1 + n + t]:
        tris[int(r[0])] = int(r[1]), int(r[2]), int(r[3])
    from scipy.spatial import cKDTree

    tree = cKDTree(nodes)
    fracs, paths = [], []
    for r in rows[1 + n + t: 1 + n + t + f]:
        m = int(r[1])
        xy = np.array(r[2: 2 + 2 * m], dtype=float).reshape(m, 2)
        d, idx = tree.query(xy)
        if np.any(d > 1e-9):
            raise GeometryError(f"fracture {r[0]} vertex is not a mesh node")
        paths.append(idx.astype(np.int64))
        fracs.append(xy)
    if domain is None:
        lo, hi = nodes.min(axis=0), nodes.max(axis=0)
        domain = Rectangle(lo[0], lo[1], hi[0], hi[1])
    from .cdt import orient_ccw

    # polyline vertices: keep only corners of each path (collinear interior path nodes are subdivision)
    polys = [_corners(xy) for xy in fracs]
    net = FractureNetwork(tuple(polys), tuple(tip_ids))
    h = float(np.median(np.linalg.norm(nodes[tris[:, 1]] - nodes[tris[:, 0]], axis=1))) if t else 0.0
    tri = Triangulation(domain, net, nodes, orient_ccw(nodes, tris), tuple(paths), h)
    _validate_triangulation(tri)
    check_conformity(tri)
    return tri


def _corners(xy: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    keep = [0]
    for i in range(1, len(xy) - 1):
        a, b, c = xy[keep[-1]], xy[i], xy[i + 1]
        cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cr) > tol * max(np.linalg.norm(c - a) ** 2, 1e-300):
            keep.append(i)
    keep.append(len(xy) - 1)
    return xy[keep]


def write_vtk(path, nodes, cells, cell_data=None, point_data=None, title="wingcrack") -> None:
    """VTK legacy ASCII unstructured grid of triangles (and optionally lines)."""
    nodes = np.asarray(nodes, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    npc = cells.shape[1]
    ctype = {3: 5, 2: 3, 6: 22}[npc]
    out = ["# vtk DataFile Version 3.0", title[:250], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {len(nodes)} double")
    out += [f"{x:.17g} {y:.17g} 0" for x, y in nodes[:, :2].tolist()]
    out.append(f"CELLS {len(cells)} {len(cells) * (npc + 1)}")
    out += [f"{npc} " + " ".join(map(str, c)) for c in cells.tolist()]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(ctype)] * len(cells)
    for label, data, count in (("CELL_DATA", cell_data, len(cells)), ("POINT_DATA", point_data, len(nodes))):
        if not data:
            continue
        out.append(f"{label} {count}")
        for name, val in data.items():
            val = np.asarray(val, dtype=float)
            if val.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in val.tolist()]
            else:
                out.append(f"VECTORS {name} double")
                v3 = np.zeros((len(val), 3))
                v3[:, : val.shape[1]] = val
                out += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in v3.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_points_cells(path):
    """Minimal reader for files produced by :func:`write_vtk` (used in tests)."""
    lines = Path(path).read_text().split("\n")
    i = lines.index(next(ln for ln in lines if ln.startswith("POINTS")))
    n = int(lines[i].split()[1])
    pts = np.array([list(map(float, ln.split())) for ln in lines[i + 1: i + 1 + n]])
    j = i + 1 + n
    m = int(lines[j].split()[1])
    cells = [list(map(int, ln.split()))[1:] for ln in lines[j + 1: j + 1 + m]]
    return pts, np.array(cells)
