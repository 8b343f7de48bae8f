"""Cameras and projection to viewport coordinates.

Conventions:

* ``view_dir`` of an orthographic camera points from the scene toward the
  viewer, so it equals the V vector used by the shading fields.
* depth increases away from the viewer; smaller depth means closer.
* viewport coordinates have x growing right and y growing down, with the
  world origin (orthographic) or the optical axis (perspective) mapped to
  the viewport centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SceneError


def _unit(v, what):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n <= 0.0:
        raise SceneError(f"{what} must be a non-zero vector")
    return v / n


@dataclass
class Camera:
    kind: str = "orthographic"
    view_dir: tuple = (0.0, 0.0, 1.0)  # toward the viewer (orthographic)
    eye: tuple = (0.0, 0.0, 5.0)  # perspective only
    look_at: tuple = (0.0, 0.0, 0.0)  # perspective only
    up: tuple = (0.0, 1.0, 0.0)
    viewport_w: float = 512.0
    viewport_h: float = 512.0
    scale: float = 128.0  # image units per world unit on the image plane

    def __post_init__(self):
        if self.kind not in ("orthographic", "perspective"):
            raise SceneError(f"unknown camera kind {self.kind!r}")
        if self.viewport_w <= 0 or self.viewport_h <= 0 or self.scale <= 0:
            raise SceneError("viewport and scale must be positive")
        if self.kind == "orthographic":
            forward = -_unit(self.view_dir, "view_dir")
        else:
            eye = np.asarray(self.eye, dtype=np.float64)
            target = np.asarray(self.look_at, dtype=np.float64)
            forward = _unit(target - eye, "eye to look_at direction")
        up = _unit(self.up, "up")
        right = np.cross(forward, up)
        nr = np.linalg.norm(right)
        if nr < 1e-12:
            raise SceneError("up vector is parallel to the view direction")
        right /= nr
        self._forward = forward
        self._right = right
        self._up = np.cross(right, forward)
        self._eye = np.asarray(self.eye, dtype=np.float64)

    # -- projection --------------------------------------------------------

    def toward_viewer(self, points) -> np.ndarray:
        """Unit V vector(s) from surface point(s) toward the viewer."""
        points = np.asarray(points, dtype=np.float64)
        if self.kind == "orthographic":
            v = -self._forward
            if points.ndim == 1:
                return v.copy()
            return np.broadcast_to(v, points.shape).copy()
        d = self._eye - points
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        n = np.where(n > 0, n, 1.0)
        return d / n

    def project(self, points):
        """Project points to the viewport.

        Returns ``(xy, depth, in_front)`` where ``xy`` is (N, 2) viewport
        coordinates, ``depth`` grows away from the viewer, and ``in_front``
        flags points on the visible side of a perspective eye.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cx = self.viewport_w / 2.0
        cy = self.viewport_h / 2.0
        if self.kind == "orthographic":
            x = pts @ self._right
            y = pts @ self._up
            depth = pts @ self._forward
            xy = np.stack([cx + self.scale * x, cy - self.scale * y], axis=1)
            return xy, depth, np.ones(len(pts), dtype=bool)
        rel = pts - self._eye
        depth = rel @ self._forward
        in_front = depth > 1e-12
        safe = np.where(in_front, depth, 1.0)
        x = (rel @ self._right) / safe
        y = (rel @ self._up) / safe
        xy = np.stack([cx + self.scale * x, cy - self.scale * y], axis=1)
        return xy, depth, in_front

    def project_one(self, point):
        xy, depth, ok = self.project(np.asarray(point)[None, :])
        return xy[0], float(depth[0]), bool(ok[0])

    # -- (de)serialization -------------------------------------------------

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "up": list(map(float, np.asarray(self.up, dtype=np.float64))),
            "viewport_w": float(self.viewport_w),
            "viewport_h": float(self.viewport_h),
            "scale": float(self.scale),
        }
        if self.kind == "orthographic":
            out["view_dir"] = list(map(float, np.asarray(self.view_dir, dtype=np.float64)))
        else:
            out["eye"] = list(map(float, np.asarray(self.eye, dtype=np.float64)))
            out["look_at"] = list(map(float, np.asarray(self.look_at, dtype=np.float64)))
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Camera":
        if not isinstance(data, dict):
            raise SceneError("camera block must be an object")
        kind = data.get("kind", "orthographic")
        kwargs = {"kind": kind}
        if kind == "orthographic":
            if "view_dir" not in data:
                raise SceneError("orthographic camera requires view_dir")
            kwargs["view_dir"] = tuple(data["view_dir"])
        elif kind == "perspective":
            if "eye" not in data:
                raise SceneError("perspective camera requires eye")
            kwargs["eye"] = tuple(data["eye"])
            kwargs["look_at"] = tuple(data.get("look_at", (0.0, 0.0, 0.0)))
        else:
            raise SceneError(f"unknown camera kind {kind!r}")
        for key in ("up", "viewport_w", "viewport_h", "scale"):
            if key in data:
                kwargs[key] = tuple(data[key]) if key == "up" else float(data[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SceneError(f"bad camera block: {exc}") from None

    def replaced(self, **changes) -> "Camera":
        data = self.to_json()
        data.update(changes)
        return Camera.from_json(data)
