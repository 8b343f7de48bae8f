"""Scene files: mesh sources, camera, lights, fields, engine, style.

A scene is a JSON object.  The mesh comes from an OBJ path or a named
generator; animations give a "frames" list instead, all sharing one
connectivity.  Field specs reference lights by index.  Example:

    {
      "mesh": {"generator": "torus", "params": {"n_ring": 48, "n_tube": 24}},
      "camera": {"kind": "orthographic", "view_dir": [0, 0, 1]},
      "lights": [[0.5, 0.5, 0.7]],
      "fields": [{"kind": "visual"}, {"kind": "isophote", "k": 0.5}],
      "engine": {"dt": 0.1},
      "style": "style.json"
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dfield

import numpy as np

from . import meshgen
from .camera import Camera
from .engine import EngineConfig
from .errors import SceneError
from .fields import ContourField, field_from_json
from .mesh import AnimatedMeshSequence, Mesh, load_mesh
from .svg import StyleSheet

_GENERATORS = {
    "tetrahedron": meshgen.tetrahedron,
    "icosphere": meshgen.icosphere,
    "torus": meshgen.torus,
    "grid": meshgen.grid,
    "bumpy_sphere": meshgen.bumpy_sphere,
}


def _load_mesh_entry(entry, base_dir: str) -> Mesh:
    if isinstance(entry, str):
        path = entry if os.path.isabs(entry) else os.path.join(base_dir, entry)
        if not os.path.exists(path):
            raise SceneError(f"mesh file not found: {path}")
        return load_mesh(path)
    if isinstance(entry, dict) and "generator" in entry:
        name = entry["generator"]
        if name not in _GENERATORS:
            raise SceneError(f"unknown mesh generator {name!r}")
        params = entry.get("params", {})
        try:
            mesh = _GENERATORS[name](**params)
        except TypeError as exc:
            raise SceneError(f"bad parameters for generator {name!r}: {exc}")
        axis = entry.get("rotate_axis")
        degrees = entry.get("rotate_degrees", 0.0)
        if axis is not None and degrees:
            mesh = meshgen.rotated(mesh, axis, np.deg2rad(float(degrees)))
        return mesh
    raise SceneError("mesh entry must be an OBJ path or a generator object")


@dataclass
class SceneConfig:
    camera: Camera
    lights: list
    fields: list
    engine: EngineConfig
    style: StyleSheet
    mesh: Mesh | None = None
    frames: list | None = None
    times: list | None = None
    base_dir: str = "."
    field_specs: list = dfield(default_factory=list)

    @property
    def first_mesh(self) -> Mesh:
        return self.mesh if self.mesh is not None else self.frames[0]

    @classmethod
    def from_json(cls, data: dict, base_dir: str = ".") -> "SceneConfig":
        if not isinstance(data, dict):
            raise SceneError("scene must be a JSON object")
        if "camera" not in data:
            raise SceneError("scene is missing a camera")
        camera = Camera.from_json(data["camera"])

        lights = []
        for i, raw in enumerate(data.get("lights", [])):
            v = np.asarray(raw, dtype=np.float64)
            if v.shape != (3,):
                raise SceneError(f"light {i} must be a 3-vector")
            n = np.linalg.norm(v)
            if n <= 0:
                raise SceneError(f"light {i} has zero length")
            lights.append(v / n)

        specs = data.get("fields")
        if not specs:
            raise SceneError("scene needs at least one field")
        fields = [field_from_json(spec, lights) for spec in specs]

        engine = EngineConfig.from_json(data.get("engine", {}))

        style = StyleSheet.default()
        if "style" in data:
            spath = data["style"]
            if not os.path.isabs(spath):
                spath = os.path.join(base_dir, spath)
            if not os.path.exists(spath):
                raise SceneError(f"style file not found: {spath}")
            with open(spath, "r", encoding="utf-8") as fh:
                style = StyleSheet.from_text(fh.read())

        mesh = None
        frames = None
        times = None
        if "frames" in data:
            entries = data["frames"]
            if not isinstance(entries, list) or not entries:
                raise SceneError("frames must be a non-empty list")
            frames = [_load_mesh_entry(e, base_dir) for e in entries]
            AnimatedMeshSequence(frames, list(range(len(frames))))
            if "times" in data:
                times = [float(t) for t in data["times"]]
                if len(times) != len(frames):
                    raise SceneError("times must match the frame count")
            else:
                fps = float(data.get("fps", 12.0))
                if fps <= 0:
                    raise SceneError("fps must be positive")
                times = [i / fps for i in range(len(frames))]
        elif "mesh" in data:
            mesh = _load_mesh_entry(data["mesh"], base_dir)
        else:
            raise SceneError("scene needs either a mesh or frames")

        return cls(camera=camera, lights=lights, fields=fields, engine=engine,
                   style=style, mesh=mesh, frames=frames, times=times,
                   base_dir=base_dir, field_specs=list(specs))

    @classmethod
    def from_path(cls, path: str) -> "SceneConfig":
        if not os.path.exists(path):
            raise SceneError(f"scene file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SceneError(f"scene is not valid JSON: {exc}") from exc
        return cls.from_json(data, base_dir=os.path.dirname(os.path.abspath(path)))
