"""Stylesheet handling and SVG emission.

Output is deliberately canonical: fixed attribute order, fixed six-decimal
numbers, newline separated elements.  Emitting the same inputs twice gives
byte-identical documents, which keeps golden tests and HTTP caching sane.

Layer order in static documents: background, region fills, occluded
strokes, visible strokes.  Strokes are split at visibility transitions so
dash patterns apply only to hidden parts.  Animated documents carry one
polyline per track, with a points animation over its keyframes and a
visibility window for its lifetime.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import SceneError

_HEX_RE = re.compile(r"^#[0-9a-fA-F]{6}$")


def _fmt(x: float) -> str:
    v = float(x)
    if abs(v) < 5e-7:
        v = 0.0
    return f"{v:.6f}"


def _fmt_points(pts) -> str:
    return " ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in pts)


# -- stylesheet ------------------------------------------------------------

DEFAULT_STYLE = {
    "background": "#ffffff",
    "strokes": {
        "default": {
            "visible": {"color": "#1a1a1a", "width": 1.6, "dash": []},
            "occluded": {"color": "#8a8a8a", "width": 1.1, "dash": [5.0, 4.0]},
        },
        "visual": {
            "visible": {"color": "#101010", "width": 2.0, "dash": []},
            "occluded": {"color": "#909090", "width": 1.2, "dash": [6.0, 4.0]},
        },
        "isophote": {
            "visible": {"color": "#3558a0", "width": 1.3, "dash": []},
            "occluded": {"color": "#9fb2d8", "width": 0.9, "dash": [4.0, 3.0]},
        },
        "gleam": {
            "visible": {"color": "#c28f1e", "width": 1.2, "dash": []},
            "occluded": {"color": "#d9c38a", "width": 0.9, "dash": [3.0, 3.0]},
        },
    },
    "regions": {
        "default": {"fill": "#f5f5f0", "opacity": 1.0},
        "lit": {"fill": "#fdf6da", "opacity": 1.0},
        "band1": {"fill": "#dce6f2", "opacity": 1.0},
        "shadow": {"fill": "#b9c4d4", "opacity": 1.0},
    },
    "dash_3d": False,
}


@dataclass(frozen=True)
class Stroke:
    color: str
    width: float
    dash: tuple


class StyleSheet:
    """Validated stroke, fill, and background styling."""

    def __init__(self, data: dict):
        if not isinstance(data, dict):
            raise SceneError("style sheet must be a JSON object")
        self.background = data.get("background", "#ffffff")
        if not _HEX_RE.match(self.background):
            raise SceneError(f"bad background color {self.background!r}")
        strokes = data.get("strokes")
        if not isinstance(strokes, dict) or "default" not in strokes:
            raise SceneError("style sheet needs strokes with a 'default' entry")
        self._strokes = {}
        for kind, entry in strokes.items():
            self._strokes[kind] = {
                "visible": self._parse_stroke(entry, "visible", kind),
                "occluded": self._parse_stroke(entry, "occluded", kind),
            }
        regions = data.get("regions", {})
        if not isinstance(regions, dict) or "default" not in regions:
            raise SceneError("style sheet needs regions with a 'default' entry")
        self._regions = {}
        for label, entry in regions.items():
            fill = entry.get("fill", "#ffffff")
            if not _HEX_RE.match(fill):
                raise SceneError(f"bad fill color for region {label!r}")
            opacity = float(entry.get("opacity", 1.0))
            if not 0.0 <= opacity <= 1.0:
                raise SceneError(f"region {label!r} opacity out of range")
            self._regions[label] = (fill, opacity)
        self.dash_3d = bool(data.get("dash_3d", False))

    @staticmethod
    def _parse_stroke(entry, visibility, kind):
        if not isinstance(entry, dict) or visibility not in entry:
            raise SceneError(f"stroke {kind!r} is missing {visibility!r}")
        spec = entry[visibility]
        color = spec.get("color", "#000000")
        if not _HEX_RE.match(color):
            raise SceneError(f"bad stroke color for {kind!r}")
        width = float(spec.get("width", 1.0))
        if width <= 0:
            raise SceneError(f"stroke width for {kind!r} must be positive")
        dash = tuple(float(d) for d in spec.get("dash", []))
        if any(d < 0 for d in dash):
            raise SceneError(f"negative dash length for {kind!r}")
        return Stroke(color, width, dash)

    @classmethod
    def default(cls) -> "StyleSheet":
        return cls(DEFAULT_STYLE)

    @classmethod
    def from_text(cls, text: str) -> "StyleSheet":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneError(f"style sheet is not valid JSON: {exc}") from exc
        return cls(data)

    def stroke_for(self, kind: str, visible: bool) -> Stroke:
        entry = self._strokes.get(kind, self._strokes["default"])
        return entry["visible" if visible else "occluded"]

    def fill_for(self, label: str):
        return self._regions.get(label, self._regions["default"])


# -- shared writer pieces --------------------------------------------------


def _svg_open(w, h):
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(w)}" '
        f'height="{int(h)}" viewBox="0 0 {int(w)} {int(h)}">'
    )


def _polyline(pts, stroke: Stroke, extra: str = "") -> str:
    dash = ""
    if stroke.dash:
        dash = (' stroke-dasharray="'
                + ",".join(_fmt(d) for d in stroke.dash) + '"')
    return (
        f'<polyline points="{_fmt_points(pts)}" fill="none" '
        f'stroke="{stroke.color}" stroke-width="{_fmt(stroke.width)}"'
        f"{dash}{extra}/>"
    )


def _visibility_runs(flags):
    """Runs of equal flags; each run keeps the following point so strokes
    stay connected across the transition."""
    n = len(flags)
    runs = []
    start = 0
    for i in range(1, n + 1):
        if i == n or flags[i] != flags[start]:
            runs.append((start, i - 1, bool(flags[start])))
            start = i
    return runs


# -- static document -------------------------------------------------------


@dataclass
class FrontArt:
    kind: str
    points: np.ndarray  # (n, 3) loop positions
    visible: np.ndarray  # (n,) bool


def front_art_from_contours(contours, mesh, camera, tester=None):
    from .visibility import VisibilityTester

    if tester is None:
        tester = VisibilityTester(mesh)
    arts = []
    for front in contours.fronts:
        pts = contours.polylines[front.fid]
        if len(pts) < 2:
            continue
        vis = tester.visible_points(camera, pts)
        arts.append(FrontArt(front.kind, pts, vis))
    return arts


def emit_svg(style: StyleSheet, camera, fronts=None, planar_map=None,
             split_at_visibility: bool = True) -> str:
    """Layered static document for converged fronts and an optional map."""
    w, h = camera.viewport_w, camera.viewport_h
    lines = [_svg_open(w, h), '<g id="background">',
             f'<rect width="{int(w)}" height="{int(h)}" '
             f'fill="{style.background}"/>', "</g>"]

    lines.append('<g id="regions">')
    if planar_map is not None:
        for region in planar_map.regions:
            fill, opacity = style.fill_for(region.region_class.label)
            d = []
            for ring in [region.outer] + list(region.holes):
                d.append("M " + " L ".join(
                    f"{_fmt(p[0])} {_fmt(p[1])}" for p in ring) + " Z")
            lines.append(
                f'<path d="{" ".join(d)}" fill-rule="evenodd" '
                f'fill="{fill}" fill-opacity="{_fmt(opacity)}"/>'
            )
    lines.append("</g>")

    occluded, visible = [], []
    for art in fronts or []:
        xy, _, _ = camera.project(art.points)
        n = len(xy)
        if n < 2:
            continue
        if split_at_visibility and not (art.visible.all() or
                                        (~art.visible).all()):
            for a, b, flag in _visibility_runs(list(art.visible)):
                seg = [xy[i % n] for i in range(a, b + 2)]
                el = _polyline(seg, style.stroke_for(art.kind, flag))
                (visible if flag else occluded).append(el)
        else:
            flag = bool(art.visible.all()) if split_at_visibility else True
            closed = np.vstack([xy, xy[:1]])
            el = _polyline(closed, style.stroke_for(art.kind, flag))
            (visible if flag else occluded).append(el)

    lines.append('<g id="occluded">')
    lines.extend(occluded)
    lines.append("</g>")
    lines.append('<g id="visible">')
    lines.extend(visible)
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# -- animated document -----------------------------------------------------


def emit_animated_svg(tracks, style: StyleSheet, viewport=(512, 512)) -> str:
    """One animated polyline per track, playable at any rate.

    Keyframe points are interpolated linearly; each element is visible
    only during its track's [start, end) lifetime.
    """
    w, h = viewport
    lines = [_svg_open(w, h)]
    for track in tracks:
        n_frames, n_slots, _ = track.points.shape
        if n_slots < 2:
            continue
        counts = {track.points[f].shape[0] for f in range(n_frames)}
        if len(counts) != 1:
            raise SceneError(
                f"track {track.track_id} has varying vertex counts {counts}")
        closed = np.concatenate(
            [track.points, track.points[:, :1, :]], axis=1)
        majority_visible = bool(np.mean(track.visible) >= 0.5)
        stroke = style.stroke_for(track.kind, majority_visible)
        t0 = track.times[0]
        t1 = track.times[-1]
        begin = _fmt(t0)
        end = _fmt(track.t_end)
        lines.append(
            _polyline(closed[0], stroke,
                      extra=f' visibility="hidden" data-track="{track.track_id}"')
            .replace("/>", ">")
        )
        lines.append(
            f'<set attributeName="visibility" to="visible" '
            f'begin="{begin}s" end="{end}s"/>'
        )
        if n_frames > 1 and t1 > t0:
            values = "; ".join(_fmt_points(closed[f]) for f in range(n_frames))
            key_times = ";".join(
                _fmt((t - t0) / (t1 - t0)) for t in track.times
            )
            lines.append(
                f'<animate attributeName="points" begin="{begin}s" '
                f'dur="{_fmt(t1 - t0)}s" calcMode="linear" '
                f'keyTimes="{key_times}" values="{values}" fill="freeze"/>'
            )
        lines.append("</polyline>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
