"""Parabolic point detection by sweeping orthographic view directions.

The visual contour changes topology exactly when the view direction
crosses the surface's asymptotic directions at a point of vanishing
Gaussian curvature, so the edge midpoints of split and merge events
recorded while re-converging fronts across a tour of view directions
sample the parabolic curves of the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anim import FrameSpec, track_sequence
from .camera import Camera
from .errors import ConvergenceError, SceneError
from .fields import VisualField
from .mesh import Mesh
from .meshgen import icosphere


def view_directions(subdivisions: int = 2) -> np.ndarray:
    """Unit view directions ordered as a greedy nearest-neighbor tour.

    Consecutive directions stay close, so fronts re-converge in few
    iterations from one view to the next.
    """
    dirs = icosphere(subdivisions).vertices
    n = len(dirs)
    order = [0]
    remaining = list(range(1, n))
    while remaining:
        cur = dirs[order[-1]]
        d2 = np.sum((dirs[remaining] - cur) ** 2, axis=1)
        pick = int(np.argmin(d2))
        order.append(remaining.pop(pick))
    return dirs[order]


def _camera_for(direction, base: Camera | None) -> Camera:
    d = np.asarray(direction, dtype=np.float64)
    up = (0.0, 0.0, 1.0) if abs(d[2]) < 0.98 else (0.0, 1.0, 0.0)
    kwargs = {"kind": "orthographic", "view_dir": tuple(d), "up": up}
    if base is not None:
        kwargs.update(
            viewport_w=base.viewport_w, viewport_h=base.viewport_h,
            scale=base.scale,
        )
    return Camera(**kwargs)


@dataclass
class ParabolicResult:
    points: np.ndarray  # (n, 3) event edge midpoints
    events: list  # per point: direction index, direction, event kind, edge
    directions: np.ndarray
    warnings: int

    def to_json(self):
        return {
            "points": [[float(x) for x in p] for p in self.points],
            "events": self.events,
            "directions": [[float(x) for x in d] for d in self.directions],
            "warnings": self.warnings,
        }


def detect_parabolic_points(mesh: Mesh, directions=None, config=None,
                            base_camera: Camera | None = None) -> ParabolicResult:
    """Sweep view directions and collect topology-event midpoints.

    The first direction builds the fronts from scratch; its events are
    construction artifacts and are not reported.  Directions whose
    re-convergence fails are skipped and counted.
    """
    if not mesh.is_closed():
        raise SceneError("parabolic detection needs a closed mesh")
    if directions is None:
        directions = view_directions()
    directions = np.asarray(directions, dtype=np.float64)

    field = VisualField()
    state = None
    points = []
    events = []
    warnings = 0
    for i, d in enumerate(directions):
        cam = _camera_for(d, base_camera)
        try:
            frames, state = track_sequence(
                [FrameSpec(mesh, cam, field)], config,
                times=[float(i)], state=state,
            )
        except ConvergenceError:
            warnings += 1
            continue
        if i == 0:
            continue
        for ev in frames[0].events:
            if ev.kind in ("split", "merge"):
                mid = ev.data["midpoint"]
                points.append(mid)
                events.append({
                    "direction_index": i,
                    "direction": [float(x) for x in d],
                    "kind": ev.kind,
                    "edge": int(ev.data["edge"]),
                    "point": [float(x) for x in mid],
                })
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return ParabolicResult(points=pts, events=events,
                           directions=directions, warnings=warnings)
