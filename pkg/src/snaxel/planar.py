"""Visible-surface planar maps from mixed front populations.

Fronts of several kinds evolve together on one mesh.  Each front's field
is wrapped so that a snaxel sitting inside the projected polygon of a
closer, higher-precedence front sees its field negated and backs off;
contacts in the image plane push rather than merge.  On convergence the
projected polygons decompose the viewport into nested regions that get a
shading and visibility class.

Precedence is a score: visible beats occluded, and within a visibility
state visual > gleam > isophote, with brighter isophote bands (larger k)
above darker ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield, replace

import numpy as np

from .camera import Camera
from .engine import (
    EngineConfig,
    EvolutionState,
    _make_front_at_vertex,
    evolve,
    init_fronts,
)
from .errors import RefinementError, SceneError
from .fields import ContourField, IsophoteField
from .mesh import Mesh
from .visibility import VisibilityTester

_EDGE_TOL = 1e-9
_VIS_CADENCE = 5
_VISIBLE_BONUS = 65536.0
_STANDOFF_STREAK = 6


def points_in_polygon(polygon, points, edge_tol: float = _EDGE_TOL) -> np.ndarray:
    """Even-odd containment for many points; near-edge points count inside."""
    poly = np.asarray(polygon, dtype=np.float64)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(poly) < 3:
        return np.zeros(len(pts), dtype=bool)
    x1 = poly[:, 0][None, :]
    y1 = poly[:, 1][None, :]
    nxt = np.roll(poly, -1, axis=0)
    x2 = nxt[:, 0][None, :]
    y2 = nxt[:, 1][None, :]
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]

    spans = (y1 <= y) != (y2 <= y)
    denom = np.where(spans, y2 - y1, 1.0)
    xint = x1 + (y - y1) * (x2 - x1) / denom
    inside = (np.sum(spans & (xint > x), axis=1) % 2) == 1

    # distance to segments, so brushing contacts stay classified as inside
    ex = x2 - x1
    ey = y2 - y1
    seg2 = ex * ex + ey * ey
    tt = np.clip(((x - x1) * ex + (y - y1) * ey) / np.where(seg2 > 0, seg2, 1.0), 0.0, 1.0)
    dx = x1 + tt * ex - x
    dy = y1 + tt * ey - y
    near = np.min(dx * dx + dy * dy, axis=1) <= edge_tol * edge_tol
    return inside | near


def point_in_polygon(point, polygon, edge_tol: float = _EDGE_TOL) -> bool:
    return bool(points_in_polygon(polygon, [point], edge_tol)[0])


def polygon_area(polygon) -> float:
    poly = np.asarray(polygon, dtype=np.float64)
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


class PlanarMapField(ContourField):
    """A field negated wherever the population's push predicate fires."""

    def __init__(self, inner: ContourField, population):
        self.inner = inner
        self.population = population
        self.kind = inner.kind
        self.key = inner.key

    def evaluate(self, camera, positions, normals):
        return self.inner.evaluate(camera, positions, normals)

    def vertex_values(self, mesh, camera):
        return self.inner.vertex_values(mesh, camera)

    def eval_edges(self, mesh, camera, eids, ts, snaxels=None):
        base = self.inner.eval_edges(mesh, camera, eids, ts)
        if snaxels is None:
            return base
        delta = self.population.delta_for(snaxels, eids, ts)
        out = -delta * base
        parked = self.population._parked
        if parked:
            held = np.fromiter(
                (s.sid in parked for s in snaxels), dtype=bool, count=len(snaxels)
            )
            if held.any():
                out = np.where(held, 0.0, out)
        return out


def _kind_rank(field: ContourField) -> float:
    if field.kind == "visual":
        return 1000.0
    if field.kind == "gleam":
        return 900.0
    return 100.0 + 100.0 * float(getattr(field, "k", 0.0))


@dataclass
class RegionClass:
    visibility: str
    bands: tuple  # ((light_index, k, satisfied), ...) sorted

    @property
    def label(self) -> str:
        by_light: dict[int, list] = {}
        for li, k, sat in self.bands:
            by_light.setdefault(li, []).append((k, sat))
        parts = []
        for li in sorted(by_light):
            entries = sorted(by_light[li])
            n_sat = sum(1 for _, sat in entries if sat)
            if n_sat == 0:
                word = "shadow"
            elif n_sat == len(entries):
                word = "lit"
            else:
                word = f"band{n_sat}"
            parts.append(word if len(by_light) == 1 else f"L{li}:{word}")
        if not parts:
            parts = ["lit"]
        return ";".join(parts)

    def to_json(self):
        return {
            "label": self.label,
            "visibility": self.visibility,
            "bands": [
                {"light": li, "k": k, "lit": bool(sat)} for li, k, sat in self.bands
            ],
        }


@dataclass
class Region:
    region_id: int
    front: int
    outer: np.ndarray
    holes: list
    region_class: RegionClass
    parent: int
    contained_vertices: int
    area: float

    def to_json(self):
        return {
            "id": self.region_id,
            "front": self.front,
            "class": self.region_class.to_json(),
            "outer": [[float(x), float(y)] for x, y in self.outer],
            "holes": [[[float(x), float(y)] for x, y in h] for h in self.holes],
            "parent": self.parent,
            "contained_vertices": self.contained_vertices,
            "area": self.area,
        }


@dataclass
class PlanarMap:
    regions: list
    vertex_region: np.ndarray  # -1 where not visible or uncovered
    vertex_match: np.ndarray
    mismatched: list
    contact: bool
    iterations: int

    def region_of_class(self, label: str):
        return [r for r in self.regions if r.region_class.label == label]

    def to_json(self):
        return {
            "regions": [r.to_json() for r in self.regions],
            "mismatched_vertices": [int(v) for v in self.mismatched],
            "contact": self.contact,
            "iterations": self.iterations,
        }


class PlanarPopulation:
    """Joint evolution of mixed-kind fronts plus region extraction."""

    def __init__(self, mesh: Mesh, camera: Camera, fields, config=None):
        if not fields:
            raise SceneError("planar map needs at least one field")
        self.mesh = mesh
        self.camera = camera
        self.base_fields = list(fields)
        self.wrapped = [PlanarMapField(f, self) for f in self.base_fields]
        cfg = config if config is not None else EngineConfig()
        if not isinstance(cfg.seeds, list):
            # region fronts grow outward from each field's positive patches;
            # a negative-side twin would land on the same boundary curve
            # from the other side and shred it in head-on collisions
            cfg = replace(cfg, seeds="maxima")
        self.state = EvolutionState(mesh, camera, self.wrapped[0], cfg)
        self.state.pre_iteration = self._refresh
        self.tester = VisibilityTester(mesh)
        self.depth_tol = 1e-6 * mesh.bbox_diag
        self._polys: dict[int, dict] = {}
        self._last_vis_iter = None
        self._vertex_vis = None
        self._seeded = False
        self._occluded: dict[int, bool] = {}
        self._occ_cache: dict[int, tuple] = {}
        self._hop_sign: dict[int, float] = {}
        self._hop_streak: dict[int, int] = {}
        self._parked: set[int] = set()

    # -- population upkeep -------------------------------------------------

    def seed(self):
        for wf in self.wrapped:
            init_fronts(self.state, wf)
        self._seeded = True

    def _project_members(self, front):
        mem = front.members()
        pts = self.mesh.points_on_edges([s.edge for s in mem], [s.t for s in mem])
        xy, depth, _ = self.camera.project(pts)
        return mem, pts, xy, depth

    def _refresh(self):
        state = self.state
        refresh_vis = (
            self._last_vis_iter is None
            or state.iteration - self._last_vis_iter >= _VIS_CADENCE
        )
        polys = {}
        for front in state.alive_fronts():
            if front.size < 3:
                continue
            mem, pts, xy, depth = self._project_members(front)
            if refresh_vis:
                vis = self.tester.visible_points(self.camera, pts)
                front.visibility = (
                    "visible" if np.count_nonzero(vis) * 2 >= len(vis) else "occluded"
                )
            polys[front.fid] = {
                "xy": xy,
                "depth": depth,
                "score": self._score(front),
                "front": front,
            }
        if refresh_vis:
            self._last_vis_iter = state.iteration
            # tags changed, so scores must be rebuilt
            for entry in polys.values():
                entry["score"] = self._score(entry["front"])
        self._polys = polys
        self._update_occlusion()
        self._update_standoffs()

    def _update_occlusion(self):
        """Per-member ray occlusion, refreshed every iteration.

        The push predicate needs to know whether a member lies behind
        another surface sheet; boundary-depth comparisons cannot tell a
        nearer sheet from the slope of the member's own sheet, but a ray
        cast to the camera can.
        """
        members = [s for f in self.state.alive_fronts() for s in f.members()]
        if not members:
            self._occluded = {}
            self._occ_cache = {}
            return
        # the mesh is the only occluder and it never moves, so a member
        # that has not moved keeps its cached answer
        cache = self._occ_cache
        occl = {}
        fresh = {}
        need = []
        for s in members:
            ent = cache.get(s.sid)
            if ent is not None and ent[0] == s.edge and ent[1] == s.t:
                occl[s.sid] = ent[2]
                fresh[s.sid] = ent
            else:
                need.append(s)
        if need:
            pts = self.mesh.points_on_edges(
                [s.edge for s in need],
                [min(max(s.t, 0.0), 1.0) for s in need],
            )
            vis = self.tester.visible_points(self.camera, pts)
            for s, v in zip(need, vis):
                occl[s.sid] = not v
                fresh[s.sid] = (s.edge, s.t, not v)
        self._occluded = occl
        self._occ_cache = fresh

    def _score(self, front) -> float:
        field = front.field
        inner = field.inner if isinstance(field, PlanarMapField) else field
        score = _kind_rank(inner)
        if front.visibility == "visible":
            score += _VISIBLE_BONUS
        return score

    @property
    def standoffs(self) -> frozenset:
        """Snaxel ids currently held at a covering front's boundary."""
        return frozenset(self._parked)

    def delta_for(self, snaxels, eids=None, ts=None) -> np.ndarray:
        """Push signs: +1 where a closer, higher-precedence front covers.

        A member is contested only when it sits behind another sheet (its
        ray to the camera is blocked) and its projection falls inside the
        polygon of a front that outranks its own.  Nested bands on one
        surface never push each other.
        """
        n = len(snaxels)
        out = np.full(n, -1.0)
        if len(self._polys) < 2:
            return out
        occl = np.fromiter(
            (self._occluded.get(s.sid, False) for s in snaxels),
            dtype=bool, count=n,
        )
        if not occl.any():
            return out
        if eids is None:
            eids = [s.edge for s in snaxels]
            ts = [s.t for s in snaxels]
        pts = self.mesh.points_on_edges(eids, ts)
        xy, _, _ = self.camera.project(pts)
        scores = np.array([self._polys.get(s.front.fid, {}).get("score",
                           self._score(s.front)) for s in snaxels])
        fids = np.array([s.front.fid for s in snaxels])
        for fid in sorted(self._polys):
            entry = self._polys[fid]
            cand = np.flatnonzero((fids != fid) & (scores < entry["score"]) & occl)
            if not len(cand):
                continue
            inside = points_in_polygon(entry["xy"], xy[cand])
            out[cand[inside]] = 1.0
        return out

    def _update_standoffs(self):
        """Hold members that shuttle across a quasi-static covering boundary.

        A pushed member straddling the contested boundary sees its sign flip
        every iteration, so it hops in place; the hop centre drifts at second
        order and the configuration never literally repeats.  A sustained
        alternation of the push sign therefore marks the terminal state of a
        standoff, and the member is held where it is by blanking its field.
        The hold is withdrawn as soon as the covering polygon recedes and the
        sign returns to free.
        """
        members = [s for f in self.state.alive_fronts() for s in f.members()]
        if not members:
            self._hop_sign = {}
            self._hop_streak = {}
            self._parked = set()
            return
        delta = self.delta_for(members)
        signs: dict[int, float] = {}
        streaks: dict[int, int] = {}
        parked = set()
        for s, d in zip(members, delta):
            sid = s.sid
            signs[sid] = float(d)
            prev = self._hop_sign.get(sid)
            if prev is not None and d != prev:
                streak = self._hop_streak.get(sid, 0) + 1
            else:
                streak = 0
            streaks[sid] = streak
            if sid in self._parked:
                if d > 0.0:
                    parked.add(sid)
            elif streak >= _STANDOFF_STREAK and d > 0.0:
                parked.add(sid)
        self._hop_sign = signs
        self._hop_streak = streaks
        self._parked = parked

    # -- evolution ---------------------------------------------------------

    def evolve(self):
        if not self._seeded:
            self.seed()
        # standoffs re-form from live dynamics after each reseeding round
        self._hop_sign = {}
        self._hop_streak = {}
        self._parked = set()
        result = evolve(self.state, detect_oscillation=True)
        self._refresh()
        return result

    # -- classification ----------------------------------------------------

    def _band_items(self):
        """Isophote fields with their per-vertex margins N.L - k, in the
        canonical (light_index, k) order used by RegionClass.bands."""
        normals = self.mesh.normals
        items = [
            (f, normals @ f.light - f.k)
            for f in self.base_fields
            if isinstance(f, IsophoteField)
        ]
        items.sort(key=lambda fm: (fm[0].light_index, fm[0].k))
        return items

    def _vertex_class(self, band_items, v, visibility="visible") -> RegionClass:
        bands = tuple(
            (f.light_index, f.k, bool(m[v] >= 0.0)) for f, m in band_items
        )
        return RegionClass(visibility, bands)

    def vertex_visibility(self) -> np.ndarray:
        if self._vertex_vis is None:
            self._vertex_vis = self.tester.visible_points(
                self.camera, self.mesh.vertices
            )
        return self._vertex_vis

    def extract_map(self, iterations: int = 0, contact: bool = False) -> PlanarMap:
        mesh = self.mesh
        self._refresh()
        polys = [
            {
                "fid": fid,
                "xy": entry["xy"],
                "area": polygon_area(entry["xy"]),
                "front": entry["front"],
            }
            for fid, entry in sorted(self._polys.items())
            if entry["front"].visibility == "visible" and len(entry["xy"]) >= 3
        ]

        vxy, _, _ = self.camera.project(mesh.vertices)
        vis = self.vertex_visibility()
        pe = np.linalg.norm(
            vxy[mesh.edge_verts[:, 0]] - vxy[mesh.edge_verts[:, 1]], axis=1
        )
        sliver_area = float(np.mean(pe)) ** 2

        while True:
            order = np.argsort([p["area"] for p in polys], kind="stable")
            vertex_region = np.full(mesh.n_vertices, -1, dtype=np.int64)
            vis_ids = np.flatnonzero(vis)
            unassigned = np.ones(len(vis_ids), dtype=bool)
            for pi in order:
                need = np.flatnonzero(unassigned)
                if not len(need):
                    break
                inside = points_in_polygon(polys[pi]["xy"], vxy[vis_ids[need]])
                hit = need[inside]
                vertex_region[vis_ids[hit]] = pi
                unassigned[hit] = False
            counts = np.bincount(
                vertex_region[vertex_region >= 0], minlength=len(polys)
            ) if len(polys) else np.zeros(0, dtype=np.int64)
            drop = [
                i for i in range(len(polys))
                if counts[i] == 0 and polys[i]["area"] < sliver_area
            ]
            if not drop:
                break
            polys = [p for i, p in enumerate(polys) if i not in set(drop)]

        # nesting forest by containment of a majority of polygon points
        n = len(polys)
        parent = [-1] * n
        for i in range(n):
            best = -1
            best_area = np.inf
            for j in range(n):
                if i == j or polys[j]["area"] <= polys[i]["area"]:
                    continue
                inside = points_in_polygon(polys[j]["xy"], polys[i]["xy"])
                if np.count_nonzero(inside) * 2 > len(inside):
                    if polys[j]["area"] < best_area:
                        best, best_area = j, polys[j]["area"]
            parent[i] = best
        children = [[] for _ in range(n)]
        for i, p in enumerate(parent):
            if p >= 0:
                children[p].append(i)

        band_items = self._band_items()
        regions = []
        for i, poly in enumerate(polys):
            inside_ids = np.flatnonzero(vertex_region == i)
            boundary = [poly["xy"]] + [polys[c]["xy"] for c in children[i]]
            bpts = np.concatenate(boundary, axis=0)
            if len(inside_ids):
                d = vxy[inside_ids][:, None, :] - bpts[None, :, :]
                depth_in = np.min(np.einsum("ijk,ijk->ij", d, d), axis=1)
                pick = int(inside_ids[np.argmax(depth_in)])
            else:
                centroid = poly["xy"].mean(axis=0)
                vis_ids = np.flatnonzero(vis)
                d = np.linalg.norm(vxy[vis_ids] - centroid, axis=1)
                pick = int(vis_ids[np.argmin(d)]) if len(vis_ids) else 0
            regions.append(
                Region(
                    region_id=i,
                    front=poly["fid"],
                    outer=poly["xy"],
                    holes=[polys[c]["xy"] for c in children[i]],
                    region_class=self._vertex_class(band_items, pick),
                    parent=parent[i],
                    contained_vertices=int(len(inside_ids)),
                    area=poly["area"],
                )
            )

        vertex_match, mismatched = self._match_table(
            regions, vertex_region, vis, band_items
        )
        return PlanarMap(
            regions=regions,
            vertex_region=vertex_region,
            vertex_match=vertex_match,
            mismatched=mismatched,
            contact=contact,
            iterations=iterations,
        )

    @staticmethod
    def _boundary_sleeves(regions):
        """Region outlines with their self-measured discretization widths.

        The distance from a polyline point to the chord of its two
        neighbours bounds how far the drawn boundary cuts across the curve
        it samples.  A vertex closer to the polyline than that width sits on
        the drawn boundary itself, so neither side can claim it.
        """
        sleeves = []
        for r in regions:
            poly = np.asarray(r.outer, dtype=np.float64)
            if len(poly) < 3:
                continue
            prv = np.roll(poly, 1, axis=0)
            e = np.roll(poly, -1, axis=0) - prv
            l2 = np.einsum("ij,ij->i", e, e)
            tt = np.clip(
                np.einsum("ij,ij->i", poly - prv, e) / np.where(l2 > 0, l2, 1.0),
                0.0, 1.0,
            )
            sag = np.linalg.norm(poly - (prv + tt[:, None] * e), axis=1)
            sleeves.append((poly, float(np.max(sag))))
        return sleeves

    @staticmethod
    def _on_drawn_boundary(p, sleeves) -> bool:
        for poly, width in sleeves:
            if width <= 0.0:
                continue
            a = poly
            e = np.roll(poly, -1, axis=0) - a
            l2 = np.einsum("ij,ij->i", e, e)
            tt = np.clip(
                np.einsum("ij,ij->i", p - a, e) / np.where(l2 > 0, l2, 1.0),
                0.0, 1.0,
            )
            d = np.min(np.linalg.norm(p - (a + tt[:, None] * e), axis=1))
            if d <= width:
                return True
        return False

    def _match_table(self, regions, vertex_region, vis, band_items):
        eps = self.state.config.eps_f
        n = self.mesh.n_vertices
        match = np.ones(n, dtype=bool)
        mismatched = []
        has_visual = any(f.kind == "visual" for f in self.base_fields)
        visual_vals = None
        if has_visual:
            visual = next(f for f in self.base_fields if f.kind == "visual")
            visual_vals = visual.vertex_values(self.mesh, self.camera)
        vxy, _, _ = self.camera.project(self.mesh.vertices)
        sleeves = self._boundary_sleeves(regions)
        for v in np.flatnonzero(vis):
            ri = vertex_region[v]
            if ri < 0:
                if (has_visual and visual_vals[v] > eps
                        and not self._on_drawn_boundary(vxy[v], sleeves)):
                    match[v] = False
                    mismatched.append(int(v))
                continue
            cls = regions[ri].region_class
            for (li, k, sat), (f, m) in zip(cls.bands, band_items):
                if abs(m[v]) <= eps:
                    continue
                if (m[v] >= 0.0) != sat:
                    if self._on_drawn_boundary(vxy[v], sleeves):
                        break
                    match[v] = False
                    mismatched.append(int(v))
                    break
        return match, mismatched

    # -- refinement --------------------------------------------------------

    def _reseed_at(self, v: int, planar_map: PlanarMap) -> int:
        """Seed fronts of whichever kinds disagree at a mis-classified vertex."""
        made = 0
        band_items = self._band_items()
        ri = planar_map.vertex_region[v]
        wrapped_by_key = {wf.key: wf for wf in self.wrapped}
        if ri < 0:
            visual = next(
                (wf for wf in self.wrapped if wf.kind == "visual"), None
            )
            if visual is not None:
                sign = 1 if visual.vertex_values(self.mesh, self.camera)[v] > 0 else -1
                if _make_front_at_vertex(self.state, v, sign, visual):
                    made += 1
            return made
        cls = planar_map.regions[ri].region_class
        for (li, k, sat), (f, m) in zip(cls.bands, band_items):
            if abs(m[v]) <= self.state.config.eps_f:
                continue
            if (m[v] >= 0.0) != sat:
                wf = wrapped_by_key[f.key]
                sign = 1 if m[v] > 0 else -1
                if _make_front_at_vertex(self.state, v, sign, wf):
                    made += 1
        return made

    def classify_and_refine(self, max_rounds: int = 5):
        """Evolve, extract, and re-seed mis-classified vertices to fixpoint.

        Returns (map, total number of re-initialized fronts).
        """
        total_reseeded = 0
        start_iter = self.state.iteration
        result = self.evolve()
        planar_map = self.extract_map(
            iterations=self.state.iteration - start_iter, contact=result.contact
        )
        for _ in range(max_rounds):
            if not planar_map.mismatched:
                return planar_map, total_reseeded
            blocked = set()
            made = 0
            for v in planar_map.mismatched:
                if v in blocked:
                    continue
                made += self._reseed_at(v, planar_map)
                blocked.add(v)
                for eid in self.mesh.edges_incident(v):
                    a, b = self.mesh.edge_verts[eid]
                    blocked.add(int(a))
                    blocked.add(int(b))
            total_reseeded += made
            if made == 0:
                break
            result = self.evolve()
            planar_map = self.extract_map(
                iterations=self.state.iteration - start_iter,
                contact=result.contact,
            )
        if planar_map.mismatched:
            raise RefinementError(
                f"{len(planar_map.mismatched)} vertices still mis-classified "
                f"after {max_rounds} refinement rounds",
                bad_vertices=planar_map.mismatched,
            )
        return planar_map, total_reseeded


def evolve_planar(mesh: Mesh, camera: Camera, fields, config=None):
    """Build, refine, and return the planar map with its population."""
    pop = PlanarPopulation(mesh, camera, fields, config)
    planar_map, _ = pop.classify_and_refine()
    return planar_map, pop
