"""Conforming tetrahedral meshes with globally oriented entities.

Every tetrahedron is stored with positive signed volume.  Edges and faces
are stored as ascending tuples of global vertex indices; that ascending
order *is* the global orientation of the entity.  Per-cell signs record how
the local vertex order of each sub-entity relates to the global one.

Local sub-entity numbering on a cell with local vertices 0..3::

    edges: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
    faces: (1,2,3) (0,2,3) (0,1,3) (0,1,2)     # face i is opposite vertex i
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
LOCAL_ENTITIES = {
    0: ((0,), (1,), (2,), (3,)),
    1: LOCAL_EDGES,
    2: LOCAL_FACES,
    3: ((0, 1, 2, 3),),
}


class MeshError(ValueError):
    """Raised for malformed, non-conforming or degenerate meshes."""


def _perm_parity(seq) -> int:
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass
class TetMesh:
    """Tetrahedral mesh with derived, globally oriented edges and faces.

    Attributes
    ----------
    vertices : (nv, 3) float array
    tets : (nt, 4) int array, positively oriented
    exact_vertices : list of Fraction triples, or None
        Exact coordinates used by rational-arithmetic checks.
    edges, faces : (ne, 2), (nf, 3) ascending vertex tuples
    cell_edges, cell_faces : (nt, 6), (nt, 4) global entity indices
    cell_edge_signs, cell_face_signs : orientation of the local entity
        relative to the global one (+1 or -1)
    boundary_faces : (nf,) bool
    """

    vertices: np.ndarray
    tets: np.ndarray
    exact_vertices: list | None = None
    edges: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)
    cell_edges: np.ndarray = field(init=False, repr=False)
    cell_faces: np.ndarray = field(init=False, repr=False)
    cell_edge_signs: np.ndarray = field(init=False, repr=False)
    cell_face_signs: np.ndarray = field(init=False, repr=False)
    boundary_faces: np.ndarray = field(init=False, repr=False)
    face_cells: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        if self.exact_vertices is None:
            self.exact_vertices = [tuple(Fraction(float(c)) for c in v)
                                   for v in self.vertices]
        derive_entities(self)
        self.validate()

    # sizes ----------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.tets)

    def n_entities(self, d: int) -> int:
        return (self.n_vertices, len(self.edges), len(self.faces), self.n_cells)[d]

    def cell_entities(self, d: int) -> np.ndarray:
        """(nt, n_local) global indices of the d-dimensional sub-entities."""
        if d == 0:
            return self.tets
        if d == 1:
            return self.cell_edges
        if d == 2:
            return self.cell_faces
        return np.arange(self.n_cells)[:, None]

    def entity_vertices(self, d: int) -> np.ndarray:
        if d == 0:
            return np.arange(self.n_vertices)[:, None]
        if d == 1:
            return self.edges
        if d == 2:
            return self.faces
        return np.sort(self.tets, axis=1)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.faces) - self.n_cells

    # geometry -------------------------------------------------------------
    def affine_maps(self):
        """Jacobians B (nt,3,3) and offsets b (nt,3) of x = B xhat + b."""
        p = self.vertices[self.tets]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
        return B, p[:, 0].copy()

    def volumes(self) -> np.ndarray:
        B, _ = self.affine_maps()
        return np.linalg.det(B) / 6.0

    def cell_ranks(self) -> np.ndarray:
        """Rank of each local vertex among the cell's global vertex indices."""
        return np.argsort(np.argsort(self.tets, axis=1), axis=1)

    def exact_cell_vertices(self, cell: int):
        return [self.exact_vertices[v] for v in self.tets[cell]]

    def locate(self, point, tol=1e-12):
        """Index of a cell containing ``point`` (or None)."""
        B, b = self.affine_maps()
        xhat = np.linalg.solve(B, (np.asarray(point, float) - b)[:, :, None])[:, :, 0]
        lam = np.column_stack([1 - xhat.sum(axis=1), xhat])
        inside = np.nonzero((lam >= -tol).all(axis=1))[0]
        return int(inside[0]) if len(inside) else None

    # checks ---------------------------------------------------------------
    def validate(self):
        vol = self.volumes()
        scale = max(self.mesh_size(), 1e-300) ** 3
        bad = np.nonzero(np.abs(vol) <= 1e-14 * scale)[0]
        if len(bad):
            raise MeshError(f"degenerate tetrahedron {int(bad[0])} has zero volume")
        bad = np.nonzero(vol < 0)[0]
        if len(bad):
            raise MeshError(f"inverted tetrahedron {int(bad[0])} has negative volume")
        counts = np.bincount(self.cell_faces.ravel(), minlength=len(self.faces))
        if counts.max(initial=0) > 2:
            f = int(np.argmax(counts))
            raise MeshError(f"non-conforming mesh: face {tuple(self.faces[f])} "
                            f"is shared by {int(counts[f])} tetrahedra")

    def mesh_size(self) -> float:
        """Largest edge length over all cells."""
        p = self.vertices
        if len(self.edges) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(p[self.edges[:, 1]] - p[self.edges[:, 0]],
                                           axis=1)))


def derive_entities(mesh: TetMesh) -> TetMesh:
    """Fill in the global edge/face lists, cell adjacency and signs."""
    tets = mesh.tets
    nt = len(tets)
    if nt == 0:
        raise MeshError("mesh has no tetrahedra")
    e_local = tets[:, LOCAL_EDGES]                       # (nt, 6, 2)
    e_sorted = np.sort(e_local, axis=2)
    edges, e_inv = np.unique(e_sorted.reshape(-1, 2), axis=0, return_inverse=True)
    mesh.edges = edges
    mesh.cell_edges = e_inv.reshape(nt, 6)
    mesh.cell_edge_signs = np.where(e_local[:, :, 0] < e_local[:, :, 1], 1, -1)

    f_local = tets[:, LOCAL_FACES]                       # (nt, 4, 3)
    f_sorted = np.sort(f_local, axis=2)
    faces, f_inv = np.unique(f_sorted.reshape(-1, 3), axis=0, return_inverse=True)
    mesh.faces = faces
    mesh.cell_faces = f_inv.reshape(nt, 4)
    order = np.argsort(f_local, axis=2)
    parity = np.ones((nt, 4), dtype=np.int64)
    for perm in itertools.permutations(range(3)):
        mask = (order == np.array(perm)).all(axis=2)
        parity[mask] = _perm_parity(perm)
    mesh.cell_face_signs = parity

    counts = np.bincount(mesh.cell_faces.ravel(), minlength=len(faces))
    mesh.boundary_faces = counts == 1
    fc = -np.ones((len(faces), 2), dtype=np.int64)
    for c in range(nt):
        for f in mesh.cell_faces[c]:
            slot = 0 if fc[f, 0] < 0 else 1
            if slot == 1 and fc[f, 1] >= 0:
                continue  # reported by validate()
            fc[f, slot] = c
    mesh.face_cells = fc
    return mesh


def _orient(points, tet):
    a, b, c, d = (points[v] for v in tet)
    det = np.linalg.det(np.column_stack([b - a, c - a, d - a]))
    return det


def build_box_mesh(n: int) -> TetMesh:
    """Unit cube split into n^3 subcubes of 6 Kuhn tetrahedra each."""
    if int(n) != n or n < 1:
        raise ValueError(f"box mesh needs n >= 1 subdivisions, got {n}")
    n = int(n)
    m = n + 1
    idx = lambda i, j, k: i + m * j + m * m * k  # noqa: E731
    exact = [(Fraction(i, n), Fraction(j, n), Fraction(k, n))
             for k in range(m) for j in range(m) for i in range(m)]
    verts = np.array([[float(c) for c in v] for v in exact])
    tets = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in itertools.permutations(range(3)):
                    cur = [i, j, k]
                    path = [idx(*cur)]
                    for axis in perm:
                        cur[axis] += 1
                        path.append(idx(*cur))
                    if _perm_parity(perm) < 0:
                        path[2], path[3] = path[3], path[2]
                    tets.append(path)
    return TetMesh(verts, np.array(tets), exact_vertices=exact)


def reference_mesh() -> TetMesh:
    exact = [(Fraction(0),) * 3, (Fraction(1), Fraction(0), Fraction(0)),
             (Fraction(0), Fraction(1), Fraction(0)), (Fraction(0), Fraction(0), Fraction(1))]
    return TetMesh(np.array(exact, dtype=float), np.array([[0, 1, 2, 3]]),
                   exact_vertices=exact)


def mesh_size(mesh: TetMesh) -> float:
    return mesh.mesh_size()


# ---------------------------------------------------------------------------
# file formats

def read_mesh_file(path) -> TetMesh:
    """Read an ASCII Gmsh 2.2 file; only 4-node tetrahedra (type 4) are kept.

    Vertices not referenced by any tetrahedron are dropped with a warning.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    sections = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            end = f"$End{name}"
            j = i + 1
            while j < len(lines) and lines[j].strip() != end:
                j += 1
            if j == len(lines):
                raise MeshError(f"{path}: section ${name} is not terminated")
            sections[name] = lines[i + 1:j]
            i = j
        i += 1
    if "MeshFormat" in sections:
        fmt = sections["MeshFormat"][0].split()
        if not fmt or not fmt[0].startswith("2") or (len(fmt) > 1 and fmt[1] != "0"):
            raise MeshError(f"{path}: unsupported MSH format {' '.join(fmt)}; "
                            "need ASCII 2.2")
    for name in ("Nodes", "Elements"):
        if name not in sections:
            raise MeshError(f"{path}: missing ${name} section")
    try:
        body = sections["Nodes"]
        count = int(body[0])
        node_ids, coords = [], []
        for row in body[1:1 + count]:
            parts = row.split()
            node_ids.append(int(parts[0]))
            coords.append([float(x) for x in parts[1:4]])
        if len(node_ids) != count:
            raise MeshError(f"{path}: expected {count} nodes, found {len(node_ids)}")
        body = sections["Elements"]
        count = int(body[0])
        tets, skipped = [], 0
        for row in body[1:1 + count]:
            parts = [int(x) for x in row.split()]
            etype, ntags = parts[1], parts[2]
            nodes = parts[3 + ntags:]
            if etype == 4:
                if len(nodes) != 4:
                    raise MeshError(f"{path}: element {parts[0]} has {len(nodes)} nodes")
                tets.append(nodes)
            else:
                skipped += 1
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed file ({exc})") from exc
    if skipped:
        logger.warning("%s: skipped %d non-tetrahedral elements", path, skipped)
    if not tets:
        raise MeshError(f"{path}: no tetrahedra found")
    lookup = {nid: i for i, nid in enumerate(node_ids)}
    try:
        tets = np.array([[lookup[v] for v in t] for t in tets])
    except KeyError as exc:
        raise MeshError(f"{path}: element references unknown node {exc}") from exc
    coords = np.array(coords)
    used = np.unique(tets)
    if len(used) < len(coords):
        logger.warning("%s: dropped %d dangling vertices", path, len(coords) - len(used))
    remap = -np.ones(len(coords), dtype=np.int64)
    remap[used] = np.arange(len(used))
    coords = coords[used]
    tets = remap[tets]
    for c, t in enumerate(tets):
        det = _orient(coords, t)
        if abs(det) <= 1e-14 * max(np.ptp(coords, axis=0).max(), 1e-300) ** 3:
            raise MeshError(f"{path}: degenerate tetrahedron {c} has zero volume")
        if det < 0:
            raise MeshError(f"{path}: inverted tetrahedron {c} (negative orientation)")
    return TetMesh(coords, tets)


def write_mesh_file(path, mesh: TetMesh):
    """Write a mesh as ASCII Gmsh 2.2 (nodes and type-4 elements only)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {float(x)!r} {float(y)!r} {float(z)!r}"
            for i, (x, y, z) in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(mesh.n_cells)]
    out += [f"{c + 1} 4 2 0 1 " + " ".join(str(v + 1) for v in t)
            for c, t in enumerate(mesh.tets)]
    out += ["$EndElements", ""]
    Path(path).write_text("\n".join(out))


def write_vtk(path, mesh: TetMesh, cell_data=None, point_data=None, title="elastweak"):
    """Legacy ASCII VTK unstructured grid with cell type 10 (tetrahedron).

    ``cell_data``/``point_data`` map names to arrays of shape (n,) or (n, 3).
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.16e} {y:.16e} {z:.16e}" for x, y, z in mesh.vertices]
    lines.append(f"CELLS {mesh.n_cells} {5 * mesh.n_cells}")
    lines += ["4 " + " ".join(str(v) for v in t) for t in mesh.tets]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += ["10"] * mesh.n_cells

    def block(kind, n, data):
        if not data:
            return
        lines.append(f"{kind} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{x:.16e}" for x in arr)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(f"{x:.16e}" for x in row) for row in arr)

    block("CELL_DATA", mesh.n_cells, cell_data)
    block("POINT_DATA", mesh.n_vertices, point_data)
    Path(path).write_text("\n".join(lines) + "\n")


def box_h(n: int) -> float:
    return math.sqrt(3.0) / n
