"""Command line entry points.

    snaxel contours  --scene scene.json --out outdir [--trace]
    snaxel planarmap --scene scene.json --out outdir [--trace]
    snaxel animate   --scene scene.json --out outdir [--trace]
    snaxel parabolic --scene scene.json --out outdir
    snaxel serve     [--scene scene.json] [--port N]

Exit codes: 0 success, 2 scene or input problem, 3 convergence failure,
4 planar-map refinement failure.  Outputs are deterministic byte-for-byte
for an unchanged scene.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .anim import FrameSpec, build_tracks, track_sequence
from .engine import EvolutionState, evolve, init_fronts
from .errors import (
    ConvergenceError,
    RefinementError,
    SceneError,
    SnaxelError,
)
from .parabolic import detect_parabolic_points
from .planar import PlanarPopulation
from .scene import SceneConfig
from .svg import emit_animated_svg, emit_svg, front_art_from_contours
from .visibility import VisibilityTester


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _front_payload(contours, mesh, camera, tester):
    fronts = []
    for front in contours.fronts:
        pts = contours.polylines[front.fid]
        vis = tester.visible_points(camera, pts)
        fronts.append({
            "id": front.fid,
            "kind": front.kind,
            "sign": front.sign,
            "size": front.size,
            "points": [[float(x) for x in p] for p in pts],
            "visible": [bool(v) for v in vis],
        })
    return fronts


def cmd_contours(args) -> int:
    scene = SceneConfig.from_path(args.scene)
    mesh = scene.first_mesh
    os.makedirs(args.out, exist_ok=True)
    tester = VisibilityTester(mesh)
    arts = []
    payload = {"fields": []}
    for i, field in enumerate(scene.fields):
        state = EvolutionState(mesh, scene.camera, field, scene.engine)
        if args.trace:
            state.trace_dir = os.path.join(args.out, "trace", f"field{i}")
        init_fronts(state)
        contours = evolve(state)
        arts.extend(front_art_from_contours(contours, mesh, scene.camera,
                                            tester))
        payload["fields"].append({
            "field": i,
            "kind": field.kind,
            "iterations": contours.iterations,
            "fronts": _front_payload(contours, mesh, scene.camera, tester),
        })
    _write_json(os.path.join(args.out, "contours.json"), payload)
    _write_text(os.path.join(args.out, "contours.svg"),
                emit_svg(scene.style, scene.camera, fronts=arts))
    return 0


def cmd_planarmap(args) -> int:
    scene = SceneConfig.from_path(args.scene)
    mesh = scene.first_mesh
    os.makedirs(args.out, exist_ok=True)
    pop = PlanarPopulation(mesh, scene.camera, scene.fields, scene.engine)
    if args.trace:
        pop.state.trace_dir = os.path.join(args.out, "trace")
    planar_map, reseeded = pop.classify_and_refine()
    payload = planar_map.to_json()
    payload["reseeded_fronts"] = reseeded
    _write_json(os.path.join(args.out, "planarmap.json"), payload)

    arts = []
    from .svg import FrontArt

    for front in pop.state.alive_fronts():
        mem = front.members()
        if len(mem) < 2:
            continue
        pts = mesh.points_on_edges([s.edge for s in mem], [s.t for s in mem])
        vis = pop.tester.visible_points(scene.camera, pts)
        arts.append(FrontArt(front.kind, pts, vis))
    _write_text(os.path.join(args.out, "planarmap.svg"),
                emit_svg(scene.style, scene.camera, fronts=arts,
                         planar_map=planar_map))
    return 0


def cmd_animate(args) -> int:
    scene = SceneConfig.from_path(args.scene)
    if not scene.frames:
        raise SceneError("animate needs a scene with frames")
    os.makedirs(args.out, exist_ok=True)
    all_tracks = []
    payload = {"times": scene.times, "fields": []}
    for i, field in enumerate(scene.fields):
        specs = [FrameSpec(m, scene.camera, field) for m in scene.frames]
        results, state = track_sequence(specs, scene.engine, scene.times)
        tracks = build_tracks(results, t0=scene.engine.t0)
        for tr in tracks:
            tr.track_id = f"f{i}:{tr.track_id}"
        all_tracks.extend(tracks)
        payload["fields"].append({
            "field": i,
            "kind": field.kind,
            "tracks": [tr.to_json() for tr in tracks],
        })
    _write_json(os.path.join(args.out, "tracks.json"), payload)
    _write_text(
        os.path.join(args.out, "anim.svg"),
        emit_animated_svg(all_tracks, scene.style,
                          viewport=(scene.camera.viewport_w,
                                    scene.camera.viewport_h)),
    )
    return 0


def cmd_parabolic(args) -> int:
    scene = SceneConfig.from_path(args.scene)
    mesh = scene.first_mesh
    os.makedirs(args.out, exist_ok=True)
    result = detect_parabolic_points(mesh, config=scene.engine,
                                     base_camera=scene.camera)
    _write_json(os.path.join(args.out, "parabolic.json"), result.to_json())
    lines = [f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}" for p in result.points]
    _write_text(os.path.join(args.out, "parabolic.obj"),
                "\n".join(lines) + ("\n" if lines else ""))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(scene_path=args.scene)
    port = int(os.environ.get("SNAXEL_PORT", args.port))
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snaxel",
        description="Contour extraction, planar maps, and animated SVG "
                    "from triangle meshes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in (
        ("contours", cmd_contours),
        ("planarmap", cmd_planarmap),
        ("animate", cmd_animate),
        ("parabolic", cmd_parabolic),
    ):
        p = sub.add_parser(name)
        p.add_argument("--scene", required=True, help="scene JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--trace", action="store_true",
                       help="write per-iteration front polylines as OBJ")
        p.set_defaults(func=func)
    p = sub.add_parser("serve")
    p.add_argument("--scene", help="scene JSON to preload")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RefinementError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.bad_vertices:
            print(f"offending vertices: {exc.bad_vertices}", file=sys.stderr)
        return 4
    except SnaxelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
