"""Point visibility against the mesh by ray casting.

A sample is occluded when the open segment from it toward the viewer hits
a triangle meaningfully in front of it.  Hits closer than a skin distance
(1e-4 of the bounding box diagonal) are treated as the sample's own face
and ignored.  The production path uses an axis-aligned BVH; a brute-force
all-triangles variant with identical hit arithmetic exists for testing.
"""

from __future__ import annotations

import numpy as np

from .camera import Camera
from .mesh import Mesh

_DET_EPS = 1e-14
_BARY_EPS = 1e-12


def _ray_triangles(orig, direction, v0, e1, e2):
    """Hit parameters of one ray against many triangles (inf = miss)."""
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > _DET_EPS
    inv = np.where(ok, det, 1.0)
    s = orig - v0
    u = np.einsum("ij,ij->i", s, p) / inv
    q = np.cross(s, e1)
    v = np.dot(q, direction) / inv
    t = np.einsum("ij,ij->i", e2, q) / inv
    hit = (
        ok
        & (u >= -_BARY_EPS)
        & (v >= -_BARY_EPS)
        & (u + v <= 1.0 + _BARY_EPS)
    )
    return np.where(hit, t, np.inf)


def _skin(mesh: Mesh) -> float:
    return 1e-4 * mesh.bbox_diag


class VisibilityTester:
    """BVH-accelerated occlusion queries for one mesh."""

    def __init__(self, mesh: Mesh, leaf_size: int = 8):
        self.mesh = mesh
        self.skin = _skin(mesh)
        tris = mesh.vertices[mesh.faces]
        self._v0 = np.ascontiguousarray(tris[:, 0])
        self._e1 = np.ascontiguousarray(tris[:, 1] - tris[:, 0])
        self._e2 = np.ascontiguousarray(tris[:, 2] - tris[:, 0])
        self._build(tris, leaf_size)

    def _build(self, tris, leaf_size):
        n = len(tris)
        lo = tris.min(axis=1)
        hi = tris.max(axis=1)
        cent = 0.5 * (lo + hi)
        order = np.arange(n)
        node_lo, node_hi = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []

        def new_node():
            node_lo.append(None)
            node_hi.append(None)
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(-1)
            node_count.append(0)
            return len(node_lo) - 1

        root = new_node()
        stack = [(root, 0, n)]
        while stack:
            ni, a, b = stack.pop()
            idx = order[a:b]
            node_lo[ni] = lo[idx].min(axis=0)
            node_hi[ni] = hi[idx].max(axis=0)
            if b - a <= leaf_size:
                node_start[ni] = a
                node_count[ni] = b - a
                continue
            c = cent[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            part = np.argsort(c[:, axis], kind="stable")
            order[a:b] = idx[part]
            mid = a + (b - a) // 2
            li, ri = new_node(), new_node()
            node_left[ni], node_right[ni] = li, ri
            stack.append((li, a, mid))
            stack.append((ri, mid, b))

        self._order = order
        self._nlo = np.asarray(node_lo)
        self._nhi = np.asarray(node_hi)
        self._left = np.asarray(node_left)
        self._right = np.asarray(node_right)
        self._start = np.asarray(node_start)
        self._count = np.asarray(node_count)

    def _occluded_one(self, orig, direction, t_lo, t_hi):
        d = np.where(np.abs(direction) < 1e-300, 1e-300, direction)
        inv = 1.0 / d
        stack = [0]
        while stack:
            ni = stack.pop()
            t1 = (self._nlo[ni] - orig) * inv
            t2 = (self._nhi[ni] - orig) * inv
            near = np.minimum(t1, t2).max()
            far = np.maximum(t1, t2).min()
            if far < max(near, t_lo) or near > t_hi:
                continue
            if self._count[ni] > 0:
                a = self._start[ni]
                idx = self._order[a:a + self._count[ni]]
                t = _ray_triangles(orig, direction,
                                   self._v0[idx], self._e1[idx], self._e2[idx])
                if np.any((t > t_lo) & (t < t_hi)):
                    return True
            else:
                stack.append(self._left[ni])
                stack.append(self._right[ni])
        return False

    def occluded(self, origins, directions, max_dists=None) -> np.ndarray:
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        n = len(origins)
        if max_dists is None:
            max_dists = np.full(n, np.inf)
        else:
            max_dists = np.asarray(max_dists, dtype=np.float64)
        out = np.zeros(n, dtype=bool)
        for i in range(n):
            out[i] = self._occluded_one(origins[i], directions[i],
                                        self.skin, max_dists[i] - self.skin)
        return out

    def visible_points(self, camera: Camera, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dirs = camera.toward_viewer(points)
        if dirs.ndim == 1:
            dirs = np.broadcast_to(dirs, points.shape)
        if camera.kind == "perspective":
            max_d = np.linalg.norm(camera.eye - points, axis=1)
        else:
            max_d = None
        return ~self.occluded(points, dirs, max_d)


def occluded_brute(mesh: Mesh, origins, directions, max_dists=None) -> np.ndarray:
    """All-triangles reference for the BVH; same arithmetic, no pruning."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(origins)
    if max_dists is None:
        max_dists = np.full(n, np.inf)
    else:
        max_dists = np.asarray(max_dists, dtype=np.float64)
    tris = mesh.vertices[mesh.faces]
    v0 = tris[:, 0]
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    skin = _skin(mesh)
    out = np.zeros(n, dtype=bool)
    for i in range(n):
        t = _ray_triangles(origins[i], directions[i], v0, e1, e2)
        out[i] = bool(np.any((t > skin) & (t < max_dists[i] - skin)))
    return out


def visible_points_brute(mesh: Mesh, camera: Camera, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dirs = camera.toward_viewer(points)
    if dirs.ndim == 1:
        dirs = np.broadcast_to(dirs, points.shape)
    if camera.kind == "perspective":
        max_d = np.linalg.norm(camera.eye - points, axis=1)
    else:
        max_d = None
    return ~occluded_brute(mesh, points, dirs, max_d)


def classify_visibility(samples, mesh: Mesh, camera: Camera,
                        tester: VisibilityTester | None = None) -> np.ndarray:
    """Per-sample visibility flags for 3-D contour points."""
    if tester is None:
        tester = VisibilityTester(mesh)
    return tester.visible_points(camera, samples)
