"""Front tracking across frames and compilation into fixed-size tracks.

A sequence is evolved frame by frame from the previous converged state.
Topology events (create, split, merge, annihilate, fold) cut the timeline
per front lineage; between cuts a loop only gains vertices by fan-out and
loses them by deletion, so every polyline in a span can be resampled onto
one shared slot list: deleted snaxels ride along colocated with a
neighbor, and snaxels born mid-span sit on their ancestor until birth.
The result is one 2-D polyline track per lineage span with an identical
vertex count at every keyframe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .engine import EvolutionState, evolve, init_fronts
from .errors import ConvergenceError, SnaxelError
from .fields import ContourField
from .mesh import Mesh
from .visibility import VisibilityTester

_CUT_KINDS = ("create", "split", "split_debris", "merge", "fold", "annihilate")


@dataclass(frozen=True)
class Snap:
    edge: int
    t: float
    pos: tuple
    proj: tuple
    depth: float
    visible: bool
    parent: object
    front: int


@dataclass
class FrameResult:
    index: int
    time: float
    snapshots: dict  # sid -> Snap
    loops: dict  # fid -> [sid, ...] in loop order
    front_info: dict  # fid -> {"kind": ..., "sign": ..., "key": ...}
    events: list
    camera: Camera


@dataclass
class FrameSpec:
    mesh: Mesh
    camera: Camera
    field: ContourField


def track_sequence(specs, config=None, times=None, state=None,
                   start_index: int = 0):
    """Evolve a frame sequence with warm starts; returns results and state."""
    if times is None:
        times = [float(start_index + i) for i in range(len(specs))]
    if len(times) != len(specs):
        raise SnaxelError("one timestamp per frame required")
    results = []
    for k, spec in enumerate(specs):
        index = start_index + k
        if state is None:
            state = EvolutionState(spec.mesh, spec.camera, spec.field, config)
        else:
            state.set_mesh(spec.mesh)
            state.set_camera(spec.camera)
            state.field = spec.field
            for front in state.alive_fronts():
                if front.field.key == spec.field.key:
                    front.field = spec.field
        state.frame = index
        mark = len(state.events)
        try:
            evolve(state)
            while True:
                made = init_fronts(state, spec.field)
                if not made:
                    break
                evolve(state)
        except ConvergenceError as exc:
            raise ConvergenceError(f"frame {index}: {exc.args[0]}",
                                   reports=exc.reports) from exc
        results.append(_snapshot_frame(state, index, times[k],
                                       state.events[mark:]))
    return results, state


def _snapshot_frame(state, index, time, events):
    mesh, camera = state.mesh, state.camera
    tester = VisibilityTester(mesh)
    snaxels = sorted(state.snaxels.values(), key=lambda s: s.sid)
    snapshots = {}
    if snaxels:
        pts = mesh.points_on_edges([s.edge for s in snaxels],
                                   [np.clip(s.t, 0.0, 1.0) for s in snaxels])
        xy, depth, _ = camera.project(pts)
        vis = tester.visible_points(camera, pts)
        for i, s in enumerate(snaxels):
            snapshots[s.sid] = Snap(
                edge=s.edge, t=float(s.t),
                pos=tuple(float(x) for x in pts[i]),
                proj=(float(xy[i, 0]), float(xy[i, 1])),
                depth=float(depth[i]), visible=bool(vis[i]),
                parent=s.parent, front=s.front.fid,
            )
    loops = {}
    front_info = {}
    for front in state.alive_fronts():
        loops[front.fid] = [s.sid for s in front.members()]
        front_info[front.fid] = {
            "kind": front.kind, "sign": front.sign, "key": front.field.key,
        }
    return FrameResult(index=index, time=time, snapshots=snapshots,
                       loops=loops, front_info=front_info,
                       events=list(events), camera=camera)


# -- span planning (pass 1) ------------------------------------------------


class _Slot:
    __slots__ = ("sid", "born", "dead", "side", "parent")

    def __init__(self, sid, born, parent=None):
        self.sid = sid
        self.born = born  # first frame index where the snaxel exists
        self.dead = None  # frame index whose evolution removed it
        self.side = "prev"
        self.parent = parent

    def alive_at(self, f):
        return self.born <= f and (self.dead is None or f < self.dead)


@dataclass
class SpanPlan:
    fid: int
    kind: str
    start: int  # frame indices, inclusive
    end: int
    slots: list
    cut_cause: object  # event kind that opened this span, None for first


def _touched_fids(event):
    d = event.data
    if event.kind == "create":
        return [d["front"]]
    if event.kind in ("split", "split_debris"):
        return [d["front"], d["new_front"]]
    if event.kind == "merge":
        return [d["kept"], d["absorbed"]]
    if event.kind in ("fold", "annihilate"):
        return [d["front"]]
    return []


def colocate(frame_results, t0: float = 0.01):
    """Plan per-lineage spans with slot lists covering every keyframe.

    Fan-out children that die in the same frame without moving more than
    the seed offset collapse back into their parent and get no slot.
    """
    if not frame_results:
        return []
    frames = {fr.index: fr for fr in frame_results}
    order = sorted(frames)

    lifetimes = {}
    for k in order:
        for fid in frames[k].loops:
            lo, hi = lifetimes.get(fid, (k, k))
            lifetimes[fid] = (min(lo, k), max(hi, k))

    cuts = {}  # fid -> {frame: cause}
    for k in order:
        for ev in frames[k].events:
            if ev.kind not in _CUT_KINDS:
                continue
            for fid in _touched_fids(ev):
                cuts.setdefault(fid, {}).setdefault(k, ev.kind)

    plans = []
    for fid in sorted(lifetimes):
        lo, hi = lifetimes[fid]
        boundaries = [lo]
        causes = [cuts.get(fid, {}).get(lo)]
        for k in range(lo + 1, hi + 1):
            if k in cuts.get(fid, {}):
                boundaries.append(k)
                causes.append(cuts[fid][k])
        boundaries.append(hi + 1)
        for b, (p, q1) in enumerate(zip(boundaries[:-1], boundaries[1:])):
            span = SpanPlan(
                fid=fid,
                kind=frames[p].front_info[fid]["kind"],
                start=p, end=q1 - 1,
                slots=_replay_span(frames, fid, p, q1 - 1, t0),
                cut_cause=causes[b],
            )
            plans.append(span)
    return plans


def _replay_span(frames, fid, p, q, t0):
    slots = [_Slot(sid, p) for sid in frames[p].loops[fid]]
    index = {s.sid: i for i, s in enumerate(slots)}
    for f in range(p + 1, q + 1):
        events = frames[f].events
        deleted_moved = {
            ev.data["sid"]: ev.data.get("moved", np.inf)
            for ev in events if ev.kind == "delete"
        }
        for ev in events:
            if ev.kind == "fanout" and ev.data["parent"] in index:
                i = index[ev.data["parent"]]
                parent_slot = slots[i]
                keep = [
                    c for c in ev.data["children"]
                    if not (c in deleted_moved
                            and deleted_moved[c] <= t0 * (1.0 + 1e-9))
                ]
                if keep:
                    new = [_Slot(c, f, parent=parent_slot.sid) for c in keep]
                    slots[i:i + 1] = new
                    index = {s.sid: j for j, s in enumerate(slots)}
                else:
                    parent_slot.dead = f
                    parent_slot.side = ev.data.get("side", "prev")
            elif ev.kind == "delete" and ev.data["sid"] in index:
                slot = slots[index[ev.data["sid"]]]
                if slot.dead is None:
                    slot.dead = f
                    slot.side = ev.data.get("side", "prev")
    return slots


# -- track emission (pass 2) -----------------------------------------------


@dataclass
class ContourTrack:
    track_id: str
    lineage: int
    kind: str
    frame_indices: list
    times: list
    points: np.ndarray  # (n_frames, n_slots, 2)
    visible: np.ndarray  # (n_frames, n_slots) bool
    slot_sids: list
    t_end: float  # exclusive end of the validity range
    cut_cause: object

    @property
    def t_start(self):
        return self.times[0]

    def to_json(self):
        return {
            "id": self.track_id,
            "lineage": self.lineage,
            "kind": self.kind,
            "frames": [int(i) for i in self.frame_indices],
            "times": [float(t) for t in self.times],
            "t_end": float(self.t_end),
            "points": self.points.tolist(),
            "visible": self.visible.tolist(),
            "slots": [int(s) for s in self.slot_sids],
        }


def _ancestor_in(snapshots, sid, parent_map):
    seen = set()
    while sid is not None and sid not in snapshots:
        if sid in seen:
            return None
        seen.add(sid)
        sid = parent_map.get(sid)
    return sid


def _resolve_frame(slots, fr, parent_map):
    """2-D point and visibility per slot for one frame."""
    n = len(slots)
    pts = np.zeros((n, 2))
    vis = np.zeros(n, dtype=bool)
    resolved = [None] * n

    def resolve(i, hops=0):
        if resolved[i] is not None:
            return resolved[i]
        if hops > 2 * n + 2:
            raise SnaxelError("colocation walk did not terminate")
        slot = slots[i]
        f = fr.index
        if slot.alive_at(f):
            snap = fr.snapshots[slot.sid]
            resolved[i] = (snap.proj, snap.visible)
        elif slot.born > f:
            anc = _ancestor_in(fr.snapshots, slot.parent, parent_map)
            if anc is None:
                raise SnaxelError(
                    f"slot {slot.sid} has no ancestor in frame {f}")
            snap = fr.snapshots[anc]
            resolved[i] = (snap.proj, snap.visible)
        else:
            stepdir = -1 if slot.side == "prev" else 1
            j = i
            for _ in range(n):
                j = (j + stepdir) % n
                other = slots[j]
                if other.alive_at(f) or other.born > f:
                    resolved[i] = resolve(j, hops + 1)
                    break
            else:
                raise SnaxelError("no live slot to colocate with")
        return resolved[i]

    for i in range(n):
        p, v = resolve(i)
        pts[i] = p
        vis[i] = v
    return pts, vis


def cut_keyframes(frame_results, plans=None, t0: float = 0.01):
    """Emit constant-vertex-count tracks from planned lineage spans."""
    if plans is None:
        plans = colocate(frame_results, t0)
    frames = {fr.index: fr for fr in frame_results}
    order = sorted(frames)
    times = [frames[k].time for k in order]
    if len(times) > 1:
        tail_dt = times[-1] - times[-2]
    else:
        tail_dt = 1.0
    after_end = times[-1] + (tail_dt if tail_dt > 0 else 1.0)
    time_of = {k: frames[k].time for k in order}
    next_time = {}
    for a, b in zip(order[:-1], order[1:]):
        next_time[a] = time_of[b]
    next_time[order[-1]] = after_end

    parent_map = {}
    for k in order:
        for sid, snap in frames[k].snapshots.items():
            if snap.parent is not None:
                parent_map.setdefault(sid, snap.parent)
        for ev in frames[k].events:
            if ev.kind == "fanout":
                for c in ev.data["children"]:
                    parent_map.setdefault(c, ev.data["parent"])

    tracks = []
    span_counter = {}
    for plan in plans:
        if not plan.slots:
            continue
        idx = span_counter.get(plan.fid, 0)
        span_counter[plan.fid] = idx + 1
        fidx = list(range(plan.start, plan.end + 1))
        pts = []
        vis = []
        for f in fidx:
            p, v = _resolve_frame(plan.slots, frames[f], parent_map)
            pts.append(p)
            vis.append(v)
        tracks.append(ContourTrack(
            track_id=f"{plan.fid}.{idx}",
            lineage=plan.fid,
            kind=plan.kind,
            frame_indices=fidx,
            times=[time_of[f] for f in fidx],
            points=np.asarray(pts),
            visible=np.asarray(vis),
            slot_sids=[s.sid for s in plan.slots],
            t_end=next_time[plan.end],
            cut_cause=plan.cut_cause,
        ))
    return tracks


def build_tracks(frame_results, t0: float = 0.01):
    return cut_keyframes(frame_results, colocate(frame_results, t0), t0)
