"""Local HTTP service exposing scenes, evolution, and SVG to the studio.

One scene is resident at a time.  Every mutation (camera, lights) extends
the tracked frame history by warm-starting from the converged fronts, so
small edits re-converge fast; the style can change without touching the
geometry.  A monotonically increasing revision stamps every response so a
client can discard stale fetches.  Mutations run one at a time; when
queueing is disabled a second concurrent mutation gets 409.
"""

from __future__ import annotations

import json
import os
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .anim import FrameSpec, build_tracks, track_sequence
from .camera import Camera
from .errors import (
    ConvergenceError,
    RefinementError,
    SceneError,
    SnaxelError,
)
from .fields import field_from_json
from .planar import PlanarPopulation
from .scene import SceneConfig
from .svg import FrontArt, StyleSheet, emit_animated_svg, emit_svg


class Studio:
    """Mutable scene state behind the endpoints."""

    def __init__(self, allow_queue: bool = True):
        self.lock = threading.Lock()
        self.allow_queue = allow_queue
        self.revision = 0
        self.geometry_revision = 0
        self.scene: SceneConfig | None = None
        self.camera: Camera | None = None
        self.lights: list = []
        self.fields: list = []
        self.style: StyleSheet = StyleSheet.default()
        self.states: dict = {}
        self.frame_results: dict = {}
        self._planar_cache = (None, None)

    # -- lifecycle ---------------------------------------------------------

    def load_scene(self, data: dict, base_dir: str = "."):
        scene = SceneConfig.from_json(data, base_dir)
        self.scene = scene
        self.camera = scene.camera
        self.lights = list(scene.lights)
        self.fields = list(scene.fields)
        self.style = scene.style
        self.states = {}
        self.frame_results = {}
        self._planar_cache = (None, None)
        mesh = scene.first_mesh
        for i, field in enumerate(self.fields):
            results, state = track_sequence(
                [FrameSpec(mesh, self.camera, field)], scene.engine,
                times=[0.0],
            )
            self.states[i] = state
            self.frame_results[i] = results
        self.revision += 1
        self.geometry_revision += 1
        return self.revision

    def require_scene(self):
        if self.scene is None:
            raise LookupError("no scene loaded")

    # -- mutations ---------------------------------------------------------

    def _advance(self):
        """Track one more frame per field from the converged state."""
        mesh = self.scene.first_mesh
        for i, field in enumerate(self.fields):
            idx = len(self.frame_results[i])
            results, state = track_sequence(
                [FrameSpec(mesh, self.camera, field)], self.scene.engine,
                times=[float(idx)], state=self.states[i], start_index=idx,
            )
            self.frame_results[i].extend(results)
            self.states[i] = state
        self.revision += 1
        self.geometry_revision += 1
        self._planar_cache = (None, None)
        return self.revision

    def patch_camera(self, patch: dict):
        self.require_scene()
        merged = self.camera.to_json()
        merged.update(patch)
        self.camera = Camera.from_json(merged)
        return self._advance()

    def patch_lights(self, lights):
        self.require_scene()
        vecs = []
        for i, raw in enumerate(lights):
            v = np.asarray(raw, dtype=np.float64)
            if v.shape != (3,):
                raise SceneError(f"light {i} must be a 3-vector")
            n = np.linalg.norm(v)
            if n <= 0:
                raise SceneError(f"light {i} has zero length")
            vecs.append(v / n)
        self.lights = vecs
        self.fields = [
            field_from_json(spec, vecs) for spec in self.scene.field_specs
        ]
        return self._advance()

    def put_style(self, text: str):
        self.require_scene()
        self.style = StyleSheet.from_text(text)
        self.revision += 1
        return self.revision

    # -- views -------------------------------------------------------------

    def latest_fronts(self):
        self.require_scene()
        fields = []
        for i in sorted(self.frame_results):
            fr = self.frame_results[i][-1]
            fronts = []
            for fid, sids in sorted(fr.loops.items()):
                snaps = [fr.snapshots[s] for s in sids]
                fronts.append({
                    "id": fid,
                    "kind": fr.front_info[fid]["kind"],
                    "points": [list(s.pos) for s in snaps],
                    "visible": [s.visible for s in snaps],
                })
            fields.append({"field": i, "fronts": fronts})
        return {"revision": self.revision,
                "geometry_revision": self.geometry_revision,
                "fields": fields}

    def latest_arts(self):
        arts = []
        for i in sorted(self.frame_results):
            fr = self.frame_results[i][-1]
            for fid, sids in sorted(fr.loops.items()):
                snaps = [fr.snapshots[s] for s in sids]
                arts.append(FrontArt(
                    fr.front_info[fid]["kind"],
                    np.array([s.pos for s in snaps]),
                    np.array([s.visible for s in snaps], dtype=bool),
                ))
        return arts

    def static_svg(self) -> str:
        self.require_scene()
        return emit_svg(self.style, self.camera, fronts=self.latest_arts())

    def planar_map_json(self):
        self.require_scene()
        rev, cached = self._planar_cache
        if rev == self.geometry_revision:
            return cached
        pop = PlanarPopulation(self.scene.first_mesh, self.camera,
                               self.fields, self.scene.engine)
        planar_map, reseeded = pop.classify_and_refine()
        payload = planar_map.to_json()
        payload["reseeded_fronts"] = reseeded
        self._planar_cache = (self.geometry_revision, payload)
        return payload

    def tracks_json(self):
        self.require_scene()
        out = {"fields": []}
        for i in sorted(self.frame_results):
            tracks = build_tracks(self.frame_results[i],
                                  t0=self.scene.engine.t0)
            out["fields"].append({
                "field": i,
                "tracks": [tr.to_json() for tr in tracks],
            })
        return out

    def anim_svg(self) -> str:
        self.require_scene()
        tracks = []
        for i in sorted(self.frame_results):
            for tr in build_tracks(self.frame_results[i],
                                   t0=self.scene.engine.t0):
                tr.track_id = f"f{i}:{tr.track_id}"
                tracks.append(tr)
        return emit_animated_svg(
            tracks, self.style,
            viewport=(self.camera.viewport_w, self.camera.viewport_h),
        )


def create_app(scene_path: str | None = None,
               allow_queue: bool | None = None) -> FastAPI:
    if allow_queue is None:
        allow_queue = os.environ.get("SNAXEL_QUEUE", "1") != "0"
    studio = Studio(allow_queue=allow_queue)
    app = FastAPI(title="snaxel studio service")
    app.state.studio = studio

    if scene_path is not None:
        scene = SceneConfig.from_path(scene_path)
        with open(scene_path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        studio.load_scene(data, base_dir=scene.base_dir)

    def _mutate(fn):
        if not studio.lock.acquire(blocking=studio.allow_queue):
            return JSONResponse({"detail": "mutation in progress"},
                                status_code=409)
        try:
            revision = fn()
        finally:
            studio.lock.release()
        return JSONResponse({"revision": revision,
                             "geometry_revision": studio.geometry_revision})

    @app.exception_handler(LookupError)
    async def _no_scene(request: Request, exc: LookupError):
        return JSONResponse({"detail": str(exc)}, status_code=404)

    @app.exception_handler(ConvergenceError)
    async def _conv(request: Request, exc: ConvergenceError):
        return JSONResponse({"detail": f"convergence failure: {exc}"},
                            status_code=500)

    @app.exception_handler(RefinementError)
    async def _refine(request: Request, exc: RefinementError):
        return JSONResponse(
            {"detail": str(exc),
             "bad_vertices": [int(v) for v in exc.bad_vertices or []]},
            status_code=500)

    @app.exception_handler(SnaxelError)
    async def _bad(request: Request, exc: SnaxelError):
        return JSONResponse({"detail": str(exc)}, status_code=400)

    @app.post("/scene")
    async def post_scene(request: Request):
        data = await request.json()
        return _mutate(lambda: studio.load_scene(data, base_dir=os.getcwd()))

    @app.patch("/camera")
    async def patch_camera(request: Request):
        studio.require_scene()
        patch = await request.json()
        return _mutate(lambda: studio.patch_camera(patch))

    @app.patch("/lights")
    async def patch_lights(request: Request):
        studio.require_scene()
        data = await request.json()
        lights = data["lights"] if isinstance(data, dict) else data
        return _mutate(lambda: studio.patch_lights(lights))

    @app.put("/style")
    async def put_style(request: Request):
        studio.require_scene()
        text = (await request.body()).decode("utf-8")
        return _mutate(lambda: studio.put_style(text))

    @app.get("/fronts")
    async def get_fronts():
        return JSONResponse(studio.latest_fronts())

    @app.get("/svg")
    async def get_svg():
        svg = studio.static_svg()
        return Response(content=svg, media_type="image/svg+xml",
                        headers={"X-Revision": str(studio.revision)})

    @app.get("/planarmap")
    async def get_planarmap():
        payload = dict(studio.planar_map_json())
        payload["revision"] = studio.revision
        return JSONResponse(payload)

    @app.get("/tracks")
    async def get_tracks():
        payload = studio.tracks_json()
        payload["revision"] = studio.revision
        return JSONResponse(payload)

    @app.get("/anim.svg")
    async def get_anim():
        svg = studio.anim_svg()
        return Response(content=svg, media_type="image/svg+xml",
                        headers={"X-Revision": str(studio.revision)})

    @app.get("/health")
    async def get_health():
        return JSONResponse({
            "status": "ok",
            "revision": studio.revision,
            "geometry_revision": studio.geometry_revision,
            "scene_loaded": studio.scene is not None,
        })

    return app
