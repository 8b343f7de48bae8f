"""Scalar fields over mesh surface points whose zero sets are the contours.

A field is evaluated at points on mesh edges; the normal there is the
spherical interpolation of the endpoint vertex normals, so the field is
continuous across the whole edge graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .errors import DegenerateInterpolationError, FieldConfigError
from .mesh import Mesh

_THETA_EPS = 1e-7


def slerp_normal(na, nb, t):
    """Interpolate two unit normals along a great arc.

    Falls back to ``na`` for nearly identical normals and refuses nearly
    antipodal ones, where the arc is ambiguous.
    """
    na = np.asarray(na, dtype=np.float64)
    nb = np.asarray(nb, dtype=np.float64)
    dot = float(np.clip(na @ nb, -1.0, 1.0))
    theta = float(np.arccos(dot))
    if theta < _THETA_EPS:
        return na.copy()
    if theta > np.pi - _THETA_EPS:
        raise DegenerateInterpolationError(
            "cannot interpolate antipodal normals"
        )
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) / s) * na + (np.sin(t * theta) / s) * nb


def slerp_normal_batch(na, nb, t):
    """Vectorized :func:`slerp_normal` for (N, 3) endpoint arrays."""
    na = np.asarray(na, dtype=np.float64)
    nb = np.asarray(nb, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    dots = np.clip(np.einsum("ij,ij->i", na, nb), -1.0, 1.0)
    theta = np.arccos(dots)
    if np.any(theta > np.pi - _THETA_EPS):
        raise DegenerateInterpolationError("cannot interpolate antipodal normals")
    small = theta < _THETA_EPS
    safe = np.where(small, 1.0, theta)
    s = np.sin(safe)
    wa = np.sin((1.0 - t) * safe) / s
    wb = np.sin(t * safe) / s
    out = wa[:, None] * na + wb[:, None] * nb
    if np.any(small):
        out[small] = na[small]
    return out


@dataclass(frozen=True)
class SurfaceSample:
    """A point on a mesh edge with its interpolated normal."""

    edge: int
    t: float
    position: np.ndarray
    normal: np.ndarray


def sample_on_edge(mesh: Mesh, eid: int, t: float) -> SurfaceSample:
    a, b = mesh.edge_verts[eid]
    pos = mesh.point_on_edge(eid, t)
    nrm = slerp_normal(mesh.normals[a], mesh.normals[b], t)
    return SurfaceSample(int(eid), float(t), pos, nrm)


def samples_on_edges(mesh: Mesh, eids, ts):
    """Positions and normals for a batch of edge-parameter pairs."""
    eids = np.asarray(eids, dtype=np.int64)
    ts = np.asarray(ts, dtype=np.float64)
    pos = mesh.points_on_edges(eids, ts)
    na = mesh.normals[mesh.edge_verts[eids, 0]]
    nb = mesh.normals[mesh.edge_verts[eids, 1]]
    nrm = slerp_normal_batch(na, nb, ts)
    return pos, nrm


class ContourField:
    """Base class; subclasses implement ``evaluate(positions, normals)``."""

    kind = "abstract"

    def __init__(self):
        self.key = self.kind

    def evaluate(self, camera: Camera, positions, normals) -> np.ndarray:
        raise NotImplementedError

    def eval_sample(self, camera: Camera, sample: SurfaceSample) -> float:
        return float(
            self.evaluate(camera, sample.position[None, :], sample.normal[None, :])[0]
        )

    def eval_edges(self, mesh: Mesh, camera: Camera, eids, ts, snaxels=None):
        pos, nrm = samples_on_edges(mesh, eids, ts)
        return self.evaluate(camera, pos, nrm)

    def vertex_values(self, mesh: Mesh, camera: Camera) -> np.ndarray:
        """Field evaluated at every vertex with its own normal."""
        return self.evaluate(camera, mesh.vertices, mesh.normals)


class VisualField(ContourField):
    """N dot V; zero where the surface turns away from the viewer."""

    kind = "visual"

    def evaluate(self, camera, positions, normals):
        v = camera.toward_viewer(positions)
        return np.einsum("ij,ij->i", np.atleast_2d(normals), np.atleast_2d(v))


class IsophoteField(ContourField):
    """min(N.L - k, N.V) for a directional light L and isovalue k.

    The N.V term suppresses the band on back-facing surface so the zero
    set closes along the silhouette.  k = 0 is the shadow boundary.
    """

    kind = "isophote"

    def __init__(self, light, k=0.0, light_index=0):
        light = np.asarray(light, dtype=np.float64)
        n = np.linalg.norm(light)
        if n <= 0:
            raise FieldConfigError("light direction must be non-zero")
        if not (0.0 <= k < 1.0):
            raise FieldConfigError(f"isovalue k={k} outside [0, 1)")
        self.light = light / n
        self.k = float(k)
        self.light_index = int(light_index)
        self.key = f"isophote:{light_index}:{k:g}"

    def evaluate(self, camera, positions, normals):
        normals = np.atleast_2d(normals)
        v = camera.toward_viewer(positions)
        nl = normals @ self.light - self.k
        nv = np.einsum("ij,ij->i", normals, np.atleast_2d(v))
        return np.minimum(nl, nv)


class GleamField(ContourField):
    """V dot reflect(L); zero where the mirror highlight grazes the eye."""

    kind = "gleam"

    def __init__(self, light, light_index=0):
        light = np.asarray(light, dtype=np.float64)
        n = np.linalg.norm(light)
        if n <= 0:
            raise FieldConfigError("light direction must be non-zero")
        self.light = light / n
        self.light_index = int(light_index)
        self.key = f"gleam:{light_index}"

    def evaluate(self, camera, positions, normals):
        normals = np.atleast_2d(normals)
        v = camera.toward_viewer(positions)
        nl = normals @ self.light
        refl = 2.0 * nl[:, None] * normals - self.light
        return np.einsum("ij,ij->i", np.atleast_2d(v), refl)


def field_from_json(spec: dict, lights) -> ContourField:
    """Build a field from a scene description entry."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise FieldConfigError("field entry must be an object with a kind")
    kind = spec["kind"]
    if kind == "visual":
        return VisualField()
    if kind in ("isophote", "shadow", "gleam"):
        idx = int(spec.get("light_index", 0))
        if idx < 0 or idx >= len(lights):
            raise FieldConfigError(
                f"field references light {idx} but scene has {len(lights)}"
            )
        if kind == "gleam":
            return GleamField(lights[idx], light_index=idx)
        k = 0.0 if kind == "shadow" else float(spec.get("k", 0.0))
        return IsophoteField(lights[idx], k=k, light_index=idx)
    raise FieldConfigError(f"unknown field kind {kind!r}")
