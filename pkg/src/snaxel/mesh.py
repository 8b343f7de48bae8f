"""Triangle mesh with directed edges, cyclic vertex adjacency and normals.

Edges are undirected in storage but carry a canonical direction: the
endpoint with the smaller vertex index is ``v_from``.  All parametric
positions elsewhere in the package are expressed along that direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNormalError,
    EmptyMeshError,
    ObjParseError,
    TopologyError,
)

_AREA_EPS = 1e-18


@dataclass(frozen=True)
class DirectedEdge:
    """Canonical directed edge ``v_from -> v_to`` with ``v_from < v_to``."""

    index: int
    v_from: int
    v_to: int
    length: float


class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array, counter-clockwise when seen from outside
    normals : optional (V, 3) float array overriding computed vertex normals
    """

    def __init__(self, vertices, faces, normals=None):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.size == 0 or faces.size == 0:
            raise EmptyMeshError("mesh has no vertices or no faces")
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise TopologyError("vertices must be an (V, 3) array")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise TopologyError("faces must be an (F, 3) array of triangles")
        if faces.min() < 0 or faces.max() >= len(vertices):
            raise TopologyError("face references a vertex out of range")
        for k in range(3):
            if np.any(faces[:, k] == faces[:, (k + 1) % 3]):
                raise TopologyError("face with a repeated vertex")

        self.vertices = vertices
        self.faces = faces
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

        self._build_edges()
        self._build_vertex_cycles()
        self.normals = self._vertex_normals(normals)
        self.normals.setflags(write=False)

        mins = vertices.min(axis=0)
        maxs = vertices.max(axis=0)
        self.bbox_diag = float(np.linalg.norm(maxs - mins))
        self.mean_edge_length = float(self.edge_lengths.mean())

    # -- construction ------------------------------------------------------

    def _build_edges(self):
        faces = self.faces
        pairs = np.concatenate(
            [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
        )
        pairs = np.sort(pairs, axis=1)
        uniq, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            bad = uniq[int(np.argmax(counts))]
            raise TopologyError(
                f"edge ({bad[0]}, {bad[1]}) is shared by more than two faces"
            )
        self.edge_verts = uniq
        vec = self.vertices[uniq[:, 1]] - self.vertices[uniq[:, 0]]
        self.edge_lengths = np.linalg.norm(vec, axis=1)
        if self.edge_lengths.min() <= 0.0:
            raise TopologyError("zero-length edge")
        self.edge_index = {
            (int(a), int(b)): i for i, (a, b) in enumerate(uniq)
        }
        # two incident faces per edge, -1 padding
        n_edges = len(uniq)
        edge_faces = np.full((n_edges, 2), -1, dtype=np.int64)
        n_faces = len(faces)
        for row, eid in enumerate(inverse):
            fid = row % n_faces
            if edge_faces[eid, 0] < 0:
                edge_faces[eid, 0] = fid
            elif edge_faces[eid, 1] < 0:
                edge_faces[eid, 1] = fid
        self.edge_faces = edge_faces
        # rows of `pairs` are grouped per face side, so reshaping recovers
        # the three edge ids of each face
        self.face_edges = inverse.reshape(3, n_faces).T.copy()
        self.edge_verts.setflags(write=False)
        self.edge_faces.setflags(write=False)
        self.face_edges.setflags(write=False)
        # plain-int copies for hot scalar loops
        self.edge_faces_list = [(int(a), int(b)) for a, b in edge_faces]
        self.face_edges_list = [tuple(int(e) for e in row)
                                for row in self.face_edges]

    def _build_vertex_cycles(self):
        """Per-vertex incident edges in rotational order.

        Consecutive edges in the returned order always share one incident
        face; for interior vertices the order is cyclic.
        """
        nv = len(self.vertices)
        succ = [dict() for _ in range(nv)]
        for a, b, c in self.faces:
            for v, p, q in ((a, b, c), (b, c, a), (c, a, b)):
                if p in succ[v]:
                    raise TopologyError(
                        f"inconsistent orientation or non-manifold fan at vertex {v}"
                    )
                succ[v][p] = q
        cycles = []
        boundary = np.zeros(nv, dtype=bool)
        for v in range(nv):
            nbrs = succ[v]
            if not nbrs:
                cycles.append(np.empty(0, dtype=np.int64))
                continue
            starts = set(nbrs) - set(nbrs.values())
            if starts:
                boundary[v] = True
                start = min(starts)
                if len(starts) > 1:
                    raise TopologyError(f"non-manifold vertex {v}")
            else:
                start = min(nbrs)
            order = [start]
            cur = start
            while True:
                cur = nbrs.get(cur)
                if cur is None or cur == start:
                    break
                order.append(cur)
                if len(order) > len(nbrs) + 1:
                    raise TopologyError(f"non-manifold vertex {v}")
            if len(order) != len(nbrs):
                raise TopologyError(f"non-manifold vertex {v}")
            eids = [self.edge_index[(min(v, n), max(v, n))] for n in order]
            cycles.append(np.asarray(eids, dtype=np.int64))
        self._vertex_cycles = cycles
        self.boundary_vertex = boundary
        self.boundary_vertex.setflags(write=False)

    def _vertex_normals(self, override):
        if override is not None:
            normals = np.asarray(override, dtype=np.float64).copy()
            if normals.shape != self.vertices.shape:
                raise TopologyError("normal override must match vertex count")
            norms = np.linalg.norm(normals, axis=1)
            if norms.min() <= 0.0:
                raise DegenerateNormalError(int(np.argmin(norms)))
            return normals / norms[:, None]
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        face_cross = np.cross(b - a, c - a)  # 2x area-weighted face normal
        accum = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(accum, self.faces[:, k], face_cross)
        norms = np.linalg.norm(accum, axis=1)
        if norms.min() <= _AREA_EPS:
            raise DegenerateNormalError(int(np.argmin(norms)))
        return accum / norms[:, None]

    # -- queries -----------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_edges(self):
        return len(self.edge_verts)

    def edge(self, eid: int) -> DirectedEdge:
        a, b = self.edge_verts[eid]
        return DirectedEdge(int(eid), int(a), int(b), float(self.edge_lengths[eid]))

    def edge_between(self, u: int, v: int) -> int:
        return self.edge_index[(min(u, v), max(u, v))]

    def edges_incident(self, v: int) -> np.ndarray:
        """Incident edge ids of ``v`` in rotational order."""
        return self._vertex_cycles[v]

    def faces_of_edge(self, eid: int):
        fa, fb = self.edge_faces[eid]
        return (int(fa), int(fb))

    def edges_share_face(self, e1: int, e2: int) -> bool:
        if e1 == e2:
            return True
        fa, fb = self.edge_faces[e1]
        fc, fd = self.edge_faces[e2]
        for f in (fc, fd):
            if f >= 0 and (f == fa or f == fb):
                return True
        return False

    def face_edge_ids(self, fid: int) -> np.ndarray:
        """The three edge ids bounding face ``fid``."""
        return self.face_edges[fid]

    def face_of_edge_pair(self, e1: int, e2: int) -> int:
        """Face shared by two distinct edges, or -1."""
        fa, fb = self.edge_faces[e1]
        fc, fd = self.edge_faces[e2]
        for f in (fc, fd):
            if f >= 0 and (f == fa or f == fb):
                return int(f)
        return -1

    def is_closed(self) -> bool:
        return bool((self.edge_faces[:, 1] >= 0).all())

    def point_on_edge(self, eid: int, t: float) -> np.ndarray:
        a, b = self.edge_verts[eid]
        return (1.0 - t) * self.vertices[a] + t * self.vertices[b]

    def points_on_edges(self, eids, ts) -> np.ndarray:
        eids = np.asarray(eids, dtype=np.int64)
        ts = np.asarray(ts, dtype=np.float64)[:, None]
        a = self.vertices[self.edge_verts[eids, 0]]
        b = self.vertices[self.edge_verts[eids, 1]]
        return (1.0 - ts) * a + ts * b

    def with_vertices(self, vertices) -> "Mesh":
        """Same connectivity with new vertex positions (animation frames)."""
        return Mesh(vertices, self.faces)


def parse_obj(text: str) -> Mesh:
    """Parse Wavefront OBJ text into a Mesh.

    Faces with more than three sides are fan-triangulated.  ``vn`` records
    override computed normals only when there is exactly one per vertex.
    """
    verts = []
    vnormals = []
    face_rows = []  # (indices, line_no)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError("vertex needs three coordinates", line_no)
            try:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ObjParseError(f"bad vertex coordinate ({exc})", line_no) from None
        elif tag == "vn":
            if len(parts) < 4:
                raise ObjParseError("normal needs three coordinates", line_no)
            try:
                vnormals.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ObjParseError(f"bad normal coordinate ({exc})", line_no) from None
        elif tag == "f":
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ObjParseError(f"bad face index {head!r}", line_no) from None
                if i <= 0:
                    raise ObjParseError(
                        f"face index {i} is not positive (OBJ indices are 1-based)",
                        line_no,
                    )
                idx.append(i - 1)
            if len(idx) < 3:
                raise ObjParseError("face needs at least three vertices", line_no)
            for k in range(1, len(idx) - 1):
                face_rows.append(((idx[0], idx[k], idx[k + 1]), line_no))
        # every other record type is ignored
    if not verts or not face_rows:
        raise EmptyMeshError("OBJ contains no usable geometry")
    nv = len(verts)
    for idx, line_no in face_rows:
        for i in idx:
            if i >= nv:
                raise ObjParseError(
                    f"face references vertex {i + 1} but only {nv} are defined",
                    line_no,
                )
    faces = np.asarray([row for row, _ in face_rows], dtype=np.int64)
    normals = None
    if vnormals and len(vnormals) == nv:
        normals = np.asarray(vnormals, dtype=np.float64)
    return Mesh(np.asarray(verts, dtype=np.float64), faces, normals=normals)


def load_mesh(path) -> Mesh:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_obj(fh.read())


class AnimatedMeshSequence:
    """Fixed-connectivity mesh frames with timestamps."""

    def __init__(self, meshes, times=None):
        if not meshes:
            raise EmptyMeshError("no animation frames")
        base = meshes[0]
        for i, m in enumerate(meshes[1:], start=1):
            if m.n_vertices != base.n_vertices or not np.array_equal(m.faces, base.faces):
                raise TopologyError(f"frame {i} does not share the base connectivity")
        if times is None:
            times = [float(i) for i in range(len(meshes))]
        if len(times) != len(meshes):
            raise TopologyError("one timestamp per frame required")
        self.meshes = list(meshes)
        self.times = [float(t) for t in times]

    def __len__(self):
        return len(self.meshes)
