"""Contour front evolution on mesh edges.

Fronts are closed doubly-linked loops of snaxels.  Each snaxel lives on a
directed mesh edge at parameter t in [0, 1] and moves by an explicit Euler
rule until the loop settles on the zero set of its field.

Sign conventions: every snaxel carries its lineage sign (``sign``, +1 for
loops born at field maxima, -1 for minima) and an edge orientation factor
(``orient``).  The update is ``t -= orient * (dt / edge_length) * f``.
``orient`` is ``sign`` when the snaxel's most recent attachment vertex is
the edge's ``v_to`` end and ``-sign`` otherwise; this makes a young loop
expand away from its seed no matter which way each edge happens to point,
and makes a settled snaxel sit stably on a zero crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .camera import Camera
from .errors import ConvergenceError, SceneError
from .fields import ContourField
from .mesh import Mesh

_T_EQ = 1e-12  # parameter coincidence tolerance for collisions
_F_TIE = 1e-15


@dataclass
class EngineConfig:
    dt: float = 0.1
    eps_move: float = 1e-6
    eps_f: float = 1e-3
    max_iters: object = "auto"  # "auto" or int
    t0: float = 0.01
    seeds: object = "extrema"  # "extrema" | "maxima" | "max" | "min" | vertex ids
    alpha: object = None  # optional value-threshold seeding, off by default
    step_cap: float = 4.0  # per-iteration |dt| bound, a sliver-edge guard

    def resolve_max_iters(self, n_faces: int) -> int:
        if self.max_iters == "auto":
            return int(min(max(20 * math.sqrt(max(n_faces, 1)), 500), 20000))
        return int(self.max_iters)

    @classmethod
    def from_json(cls, data: dict) -> "EngineConfig":
        cfg = cls()
        if not data:
            return cfg
        if not isinstance(data, dict):
            raise SceneError("engine block must be an object")
        known = {
            "dt", "eps_move", "eps_f", "max_iters", "t0", "seeds", "alpha", "step_cap",
        }
        for key, value in data.items():
            if key not in known:
                raise SceneError(f"unknown engine option {key!r}")
            setattr(cfg, key, value)
        for key in ("dt", "eps_move", "eps_f", "t0", "step_cap"):
            val = float(getattr(cfg, key))
            if val <= 0:
                raise SceneError(f"engine option {key} must be positive")
            setattr(cfg, key, val)
        if cfg.max_iters != "auto":
            if int(cfg.max_iters) <= 0:
                raise SceneError("max_iters must be positive or 'auto'")
            cfg.max_iters = int(cfg.max_iters)
        if isinstance(cfg.seeds, str):
            if cfg.seeds not in ("extrema", "max", "min"):
                raise SceneError(f"unknown seed mode {cfg.seeds!r}")
        else:
            cfg.seeds = [int(v) for v in cfg.seeds]
        return cfg


class Snaxel:
    __slots__ = (
        "sid", "edge", "t", "t_prev", "sign", "orient", "front",
        "prev", "next", "alive", "parent", "moved", "f_cache", "entry",
    )

    def __init__(self, sid, edge, t, sign, orient, front, parent=None):
        self.sid = sid
        self.edge = edge
        self.t = t
        self.t_prev = t
        self.sign = sign
        self.orient = orient
        self.front = front
        self.prev = None
        self.next = None
        self.alive = True
        self.parent = parent
        self.moved = 0.0
        self.f_cache = 0.0
        # parameter of the vertex this member entered its edge through,
        # or None for seeds placed mid-edge
        self.entry = None

    def __repr__(self):
        return f"Snaxel({self.sid}, e{self.edge}, t={self.t:.4f})"


class Front:
    __slots__ = (
        "fid", "kind", "sign", "field", "head", "size", "alive",
        "seed_vertex", "born_iter", "visibility",
    )

    def __init__(self, fid, sign, field, seed_vertex=None, born_iter=0):
        self.fid = fid
        self.kind = field.kind
        self.sign = sign
        self.field = field
        self.head = None
        self.size = 0
        self.alive = True
        self.seed_vertex = seed_vertex
        self.born_iter = born_iter
        self.visibility = "visible"

    def members(self):
        """Loop members in order, starting from the smallest snaxel id."""
        if self.head is None or self.size == 0:
            return []
        best = self.head
        s = self.head.next
        while s is not self.head:
            if s.sid < best.sid:
                best = s
            s = s.next
        out = [best]
        s = best.next
        while s is not best:
            out.append(s)
            s = s.next
        return out

    def __repr__(self):
        return f"Front({self.fid}, {self.kind}, n={self.size})"


@dataclass
class EngineEvent:
    kind: str  # create | fanout | delete | split | split_debris | fold | merge | annihilate
    frame: int
    iteration: int
    data: dict


@dataclass
class IterationReport:
    iteration: int
    moved_max: float = 0.0
    residual_max: float = 0.0
    fanouts: int = 0
    fanout_created: int = 0
    collisions: int = 0
    splits: int = 0
    merges: int = 0
    folds: int = 0
    shed: int = 0
    cleanup_removed: int = 0
    annihilated_fronts: int = 0
    annihilated_members: int = 0
    created_total: int = 0
    removed_total: int = 0
    snaxel_count: int = 0
    front_count: int = 0


@dataclass
class ConvergedContours:
    fronts: list  # alive Front objects
    polylines: dict  # fid -> (n, 3) positions in loop order
    loops: dict  # fid -> [sid, ...]
    visited: dict  # field key -> bool array per vertex
    iterations: int
    reports: list
    contact: bool = False  # stopped on a repeating state signature


class EvolutionState:
    """Mutable evolution state for one mesh/camera/field system."""

    def __init__(self, mesh: Mesh, camera: Camera, field: ContourField,
                 config: EngineConfig | None = None):
        self.mesh = mesh
        self.camera = camera
        self.field = field
        self.config = config or EngineConfig()
        self.fronts: dict[int, Front] = {}
        self.snaxels: dict[int, Snaxel] = {}
        self.visited: dict[str, np.ndarray] = {}
        self.edge_snax: dict[int, set] = {}
        self.iteration = 0
        self.frame = 0
        self.events: list[EngineEvent] = []
        self.reports: list[IterationReport] = []
        self._next_sid = 0
        self._next_fid = 0
        self.trace_dir = None
        self.pre_iteration = None  # callable hook, run before each evolve step
        self._struct_ver = 0
        self._gv_cache = None
        self._f_eval_cache = None
        self._vf_cache = {}
        self._cleanup_pending = True

    # -- id + bookkeeping helpers -----------------------------------------

    def _new_sid(self):
        sid = self._next_sid
        self._next_sid += 1
        return sid

    def _new_fid(self):
        fid = self._next_fid
        self._next_fid += 1
        return fid

    def visited_for(self, key: str) -> np.ndarray:
        if key not in self.visited:
            self.visited[key] = np.zeros(self.mesh.n_vertices, dtype=bool)
        return self.visited[key]

    def alive_fronts(self):
        return [f for _, f in sorted(self.fronts.items()) if f.alive]

    def alive_snaxels(self):
        # dict preserves insertion order and sids only grow
        return list(self.snaxels.values())

    def log(self, kind, **data):
        self.events.append(EngineEvent(kind, self.frame, self.iteration, data))

    def _attach(self, snax: Snaxel):
        self.snaxels[snax.sid] = snax
        self.edge_snax.setdefault(snax.edge, set()).add(snax.sid)
        self._struct_ver += 1

    def _detach(self, snax: Snaxel):
        snax.alive = False
        del self.snaxels[snax.sid]
        occ = self.edge_snax.get(snax.edge)
        if occ is not None:
            occ.discard(snax.sid)
            if not occ:
                del self.edge_snax[snax.edge]
        self._struct_ver += 1

    def snapshot_positions(self, sids):
        eids = [self.snaxels[s].edge for s in sids]
        ts = [self.snaxels[s].t for s in sids]
        return self.mesh.points_on_edges(eids, ts)

    # -- camera / mesh swaps (animation warm starts) -----------------------

    def set_camera(self, camera: Camera):
        self.camera = camera

    def set_mesh(self, mesh: Mesh):
        if mesh.n_edges != self.mesh.n_edges or mesh.n_vertices != self.mesh.n_vertices:
            raise SceneError("animation frame does not share connectivity")
        self.mesh = mesh
        self._gv_cache = None
        self._f_eval_cache = None


# -- seeding ---------------------------------------------------------------


def _make_front_at_vertex(state: EvolutionState, v: int, sign: int,
                          field: ContourField) -> Front | None:
    mesh = state.mesh
    cyc = mesh.edges_incident(v)
    if len(cyc) < 3:
        return None
    front = Front(state._new_fid(), sign, field, seed_vertex=v,
                  born_iter=state.iteration)
    state.fronts[front.fid] = front
    t0 = state.config.t0
    created = []
    for eid in cyc:
        a, b = mesh.edge_verts[eid]
        t = t0 if a == v else 1.0 - t0
        orient = sign if v == b else -sign
        s = Snaxel(state._new_sid(), int(eid), float(t), sign, orient, front)
        state._attach(s)
        created.append(s)
    n = len(created)
    for i, s in enumerate(created):
        s.prev = created[(i - 1) % n]
        s.next = created[(i + 1) % n]
    front.head = created[0]
    front.size = n
    state.visited_for(field.key)[v] = True
    state.log("create", front=front.fid, vertex=int(v), sign=sign,
              snaxels=[s.sid for s in created], field=field.key)
    return front


def init_fronts(state: EvolutionState, field: ContourField | None = None):
    """Seed fronts at unvisited strict 1-ring extrema of the field.

    "maxima" seeds only positive-valued local maxima, which is what a
    region-bounding population wants: a negative-side twin would converge
    onto the same boundary curve from the other side and collide head-on
    with it.  "max" and "min" restrict creation to the global extremum,
    and an explicit vertex list seeds exactly those vertices.
    """
    field = field or state.field
    mesh = state.mesh
    values = field.vertex_values(mesh, state.camera)
    visited = state.visited_for(field.key)
    mode = state.config.seeds
    created = []

    def seed(v, sign):
        f = _make_front_at_vertex(state, v, sign, field)
        if f is not None:
            created.append(f)

    if isinstance(mode, list):
        for v in mode:
            if not visited[v]:
                seed(int(v), 1 if values[v] > 0 else -1)
        return created

    if mode in ("max", "min"):
        free = np.flatnonzero(~visited)
        if len(free):
            if mode == "max":
                v = int(free[np.argmax(values[free])])
                seed(v, 1)
            else:
                v = int(free[np.argmin(values[free])])
                seed(v, -1)
        return created

    if state.config.alpha is not None:
        alpha = float(state.config.alpha)
        order = np.argsort(-np.abs(values), kind="stable")
        for v in order:
            v = int(v)
            if visited[v] or abs(values[v]) < alpha:
                continue
            sign = 1 if values[v] > 0 else -1
            before = len(created)
            seed(v, sign)
            if len(created) > before:
                for eid in mesh.edges_incident(v):
                    a, b = mesh.edge_verts[eid]
                    visited[a] = visited[b] = True
        return created

    maxima_only = mode == "maxima"
    for v in range(mesh.n_vertices):
        if visited[v]:
            continue
        cyc = mesh.edges_incident(v)
        if len(cyc) < 3:
            continue
        nbrs = [int(a) if b == v else int(b)
                for a, b in (mesh.edge_verts[e] for e in cyc)]
        val = values[v]
        if all(val > values[n] for n in nbrs):
            if not maxima_only or val > 0.0:
                seed(v, 1)
        elif not maxima_only and all(val < values[n] for n in nbrs):
            seed(v, -1)
    return created


# -- movement --------------------------------------------------------------


def _vertex_values(state: EvolutionState, fld) -> np.ndarray:
    """Field values at every mesh vertex, cached per camera and mesh.

    Edge-endpoint evaluations reduce to vertex values exactly, so the
    hot paths that only need endpoint data (travel senses, root
    brackets) read this array instead of interpolating."""
    ent = state._vf_cache.get(fld.key)
    if ent is not None and ent[0] is state.camera and ent[1] is state.mesh:
        return ent[2]
    vals = np.asarray(fld.vertex_values(state.mesh, state.camera),
                      dtype=np.float64)
    state._vf_cache[fld.key] = (state.camera, state.mesh, vals)
    return vals


def _gather_field_values(state: EvolutionState):
    """Field values and proposed parameter displacements, unapplied."""
    cache = state._gv_cache
    if cache is not None and cache[0] == state._struct_ver:
        _, snax, groups, lens, orients = cache
        if not snax:
            return snax, np.empty(0), np.empty(0)
    else:
        snax = state.alive_snaxels()
        if not snax:
            state._gv_cache = (state._struct_ver, snax, None, None, None)
            return snax, np.empty(0), np.empty(0)
        groups = {}
        for i, s in enumerate(snax):
            groups.setdefault(s.front.field.key, []).append(i)
        lens = state.mesh.edge_lengths[[s.edge for s in snax]]
        orients = np.array([s.orient for s in snax], dtype=np.float64)
        state._gv_cache = (state._struct_ver, snax, groups, lens, orients)
    ts = np.array([s.t for s in snax])
    fc = state._f_eval_cache
    if (fc is not None and fc[0] == state._struct_ver
            and fc[1] is state.camera):
        # positions that did not move keep their last field value; only
        # members whose parameter changed get re-evaluated
        f = fc[3]
        stale = ts != fc[2]
        if np.any(stale):
            f = f.copy()
            for key in sorted(groups):
                idx = [i for i in groups[key] if stale[i]]
                if not idx:
                    continue
                subset = [snax[i] for i in idx]
                fld = subset[0].front.field
                f[idx] = fld.eval_edges(
                    state.mesh, state.camera, [s.edge for s in subset],
                    [s.t for s in subset], snaxels=subset)
    else:
        f = np.empty(len(snax))
        for key in sorted(groups):
            idx = groups[key]
            subset = [snax[i] for i in idx]
            fld = subset[0].front.field
            f[idx] = fld.eval_edges(state.mesh, state.camera,
                                    [s.edge for s in subset],
                                    [s.t for s in subset], snaxels=subset)
    state._f_eval_cache = (state._struct_ver, state.camera, ts, f)
    delta = -orients * (state.config.dt / lens) * f
    cap = state.config.step_cap
    delta = np.clip(delta, -cap, cap)
    # members inside the residual tolerance hold position: their zero
    # crossing is already resolved to working accuracy, and letting them
    # creep along near-tangent edges only delays convergence
    settled = np.abs(f) < state.config.eps_f
    if np.any(settled):
        delta[settled] = 0.0
    # members holding a vertex whose pull points off the edge stay pinned;
    # they are connective links between strands heading elsewhere, and
    # their field value does not gate convergence while pinned
    pinned = ((ts <= 0.0) & (delta < 0.0)) | ((ts >= 1.0) & (delta > 0.0))
    if np.any(pinned):
        delta[pinned] = 0.0
        f = f.copy()
        f[pinned] = 0.0
    return snax, f, delta


def _apply_movement(state, snax, f, delta):
    # zero-displacement members stay put and cannot leave their edge, so
    # their cached field value can never be consulted before they move again
    for i in np.flatnonzero(delta):
        s = snax[i]
        dv = delta[i]
        s.t += dv
        s.moved += abs(dv)
        s.f_cache = f[i]


def _restabilize_orients(state: EvolutionState):
    """Point every member's travel sense so its edge zero attracts.

    A member's sense is fixed at birth for the field it was born under.
    After the camera moves (warm restarts, animation frames) a member that
    froze on the repelling side of its edge can wake up travelling away
    from the contour and drag its strand with it.  Re-deriving the sense
    from the current field slope removes that failure mode wholesale.

    The entry-vertex record is cleared at the same time: it describes the
    traversal that placed the member on its edge, and once a new journey
    begins under changed conditions, leaving through either end is a real
    traversal rather than a bounced excursion.
    """
    groups = {}
    for s in state.alive_snaxels():
        s.entry = -1.0
        groups.setdefault(s.front.field.key, []).append(s)
    for key in sorted(groups):
        members = groups[key]
        fld = members[0].front.field
        vert_f = _vertex_values(state, fld)
        ev = state.mesh.edge_verts[[s.edge for s in members]]
        slopes = vert_f[ev[:, 1]] - vert_f[ev[:, 0]]
        for s, sl in zip(members, slopes):
            if sl > 0.0:
                s.orient = 1
            elif sl < 0.0:
                s.orient = -1
    state._gv_cache = None


# -- fan-out ---------------------------------------------------------------


def _remove_from_loop(state: EvolutionState, s: Snaxel):
    front = s.front
    if front.head is s:
        front.head = s.next if s.next is not s else None
    s.prev.next = s.next
    s.next.prev = s.prev
    front.size -= 1
    state._detach(s)


def fan_out(state: EvolutionState, s: Snaxel,
            report: IterationReport | None = None):
    """Replace a snaxel that left its edge with children around the vertex.

    Children go on every edge at the reached vertex except the incoming
    one, in rotational order, each carrying the parameter excess as its
    distance from the vertex.  Returns the children (some may themselves
    be out of range and fan out again).
    """
    mesh = state.mesh
    if s.prev is s or s.next is s:
        # lone-member loop; drop it and let cleanup dissolve the front
        front = s.front
        front.head = None
        front.size = 0
        state._detach(s)
        state.log("delete", sid=s.sid, cause="cleanup", front=front.fid,
                  prev=s.sid, next=s.sid, side="prev", moved=float(s.moved))
        return []
    eid = s.edge
    a, b = mesh.edge_verts[eid]
    if s.t > 1.0:
        w, r = int(b), s.t - 1.0
    else:
        w, r = int(a), -s.t
    cyc = mesh.edges_incident(w)
    d = len(cyc)
    pos = int(np.flatnonzero(cyc == eid)[0])
    fwd = [int(cyc[(pos + k) % d]) for k in range(1, d)]
    bwd = [int(cyc[(pos - k) % d]) for k in range(1, d)]

    def _common_face(x, y):
        xf = mesh.edge_faces_list[x]
        for fc in mesh.edge_faces_list[y]:
            if fc >= 0 and fc in xf:
                return fc
        return -1

    f_fwd = _common_face(eid, fwd[0]) if fwd else -1
    f_bwd = _common_face(eid, bwd[0]) if bwd else -1

    def _side(x):
        if x == eid:
            return "any"
        if f_fwd >= 0 and x in mesh.face_edges_list[f_fwd]:
            return "fwd"
        if f_bwd >= 0 and x in mesh.face_edges_list[f_bwd]:
            return "bwd"
        return None

    ps = _side(s.prev.edge)
    ns = _side(s.next.edge)
    bounced = ((s.t > 1.0 and s.entry == 1.0)
               or (s.t < 0.0 and s.entry == 0.0))
    if ps in ("fwd", "bwd") and ns == ps:
        # both neighbours attach on the same side of the crossed edge: the
        # strand is a hairpin pulling off the vertex, so it detaches with no
        # children rather than wrapping the whole fan inconsistently
        order = []
    elif ps == "fwd" or ns == "bwd":
        order = fwd
    elif ps == "bwd" or ns == "fwd":
        order = bwd
    else:
        order = fwd
    if order and bounced:
        # pushed straight back out of its birth vertex: a zero-length
        # excursion, not a traversal.  The member detaches when the loop
        # can close over the gap; otherwise it holds the vertex as a
        # connective link until the neighbourhood restructures around it.
        pe, ne = s.prev.edge, s.next.edge
        if pe == ne or pe == eid or ne == eid or mesh.edges_share_face(pe, ne):
            order = []
        else:
            s.t = 1.0 if s.t > 1.0 else 0.0
            s.t_prev = s.t
            return None
    front = s.front
    children = []
    for ce in order:
        ca, cb = mesh.edge_verts[ce]
        t = r if ca == w else 1.0 - r
        orient = s.sign if w == cb else -s.sign
        child = Snaxel(state._new_sid(), ce, float(t), s.sign, orient, front,
                       parent=s.sid)
        # the child's trajectory this iteration starts at the entry vertex,
        # so crossings of edge occupants are caught by the collision test
        child.t_prev = 0.0 if ca == w else 1.0
        child.entry = child.t_prev
        child.f_cache = s.f_cache
        state._attach(child)
        children.append(child)
    if children:
        # Children ahead of the crossing keep travelling away from the
        # vertex in the sense of the field value the parent carried, so a
        # strand crosses level or rising stretches instead of stalling on
        # them; the value decay is what eventually stops it.  Children
        # behind the crossing point downhill instead, which runs them
        # back into the vertex and retires them through the bounce path.
        vert_f = _vertex_values(state, front.field)
        away = 1 if s.f_cache > 0.0 else -1
        wpos = mesh.vertices[w]
        u = int(a) if w == int(b) else int(b)
        travel = wpos - mesh.vertices[u]
        for c in children:
            ca, cb = mesh.edge_verts[c.edge]
            x = int(cb) if int(ca) == w else int(ca)
            if float((mesh.vertices[x] - wpos) @ travel) >= 0.0:
                c.orient = away if c.entry == 1.0 else -away
            else:
                slope = float(vert_f[cb]) - float(vert_f[ca])
                if slope > 0.0:
                    c.orient = 1
                elif slope < 0.0:
                    c.orient = -1
    prv, nxt = s.prev, s.next
    if front.head is s:
        front.head = children[0] if children else (nxt if nxt is not s else None)
    if children:
        chain = [prv] + children + [nxt]
        for u, v2 in zip(chain[:-1], chain[1:]):
            u.next = v2
            v2.prev = u
    else:
        prv.next = nxt
        nxt.prev = prv
    front.size += len(children) - 1
    state._detach(s)
    state.visited_for(front.field.key)[w] = True
    wpos = mesh.vertices[w]
    dpv = wpos - _edge_point(mesh, prv)
    dnv = wpos - _edge_point(mesh, nxt)
    state.log("fanout", parent=s.sid, vertex=w, degree=d, front=front.fid,
              children=[c.sid for c in children],
              side="prev" if float(dpv @ dpv) <= float(dnv @ dnv) else "next")
    return children


def _pair_collides(p: Snaxel, q: Snaxel) -> bool:
    """Whether two same-edge snaxels crossed since the last iteration.

    An exact landing (equal t within 1e-12) is a crossing when the members
    still travel at macroscopic speed and are either closing head-on or
    running co-directed in lockstep (duplicate strands born from one vertex
    crossing).  Resting pairs and anti-parallel lockstep pairs, which are
    twin fronts tracing one zero set from opposite sides, are left alone.
    """
    if (p.t_prev - q.t_prev) * (p.t - q.t) < 0.0:
        return True
    if abs(p.t - q.t) > _T_EQ:
        return False
    dp = p.t - p.t_prev
    dq = q.t - q.t_prev
    if max(abs(dp), abs(dq)) <= 1e-9:
        return False
    if dp * dq < 0.0:
        return True
    return p.orient == q.orient


def _crossed_occupant(state: EvolutionState, s: Snaxel):
    """First same-field occupant of s's edge whose t-order swapped with s.

    A snaxel leaving its edge may have passed over an occupant on the way;
    that crossing must resolve as a collision before any fan-out, or the
    pair evidence is destroyed when the snaxel is replaced by children.
    """
    occ = state.edge_snax.get(s.edge)
    if not occ or len(occ) < 2:
        return None
    best = None
    key = s.front.field.key
    for qid in sorted(occ):
        if qid == s.sid:
            continue
        q = state.snaxels[qid]
        if q.front.field.key != key or q.sign != s.sign:
            continue
        if not _pair_collides(s, q):
            continue
        rank = q.t if s.t > 1.0 else -q.t
        if best is None or rank < best[0]:
            best = (rank, q)
    return best[1] if best else None


def _run_fanout_pass(state: EvolutionState, report: IterationReport):
    queue = sorted(
        (s for s in state.alive_snaxels() if s.t < 0.0 or s.t > 1.0),
        key=lambda s: s.sid,
    )
    eps_f = state.config.eps_f
    guard = 0
    limit = 20 * (state.mesh.n_edges + len(queue) + 10)
    while queue:
        nxt = []
        for s in queue:
            if not s.alive or (0.0 <= s.t <= 1.0):
                continue
            if abs(s.f_cache) < eps_f:
                # a settled member drifting over its vertex is numerical
                # noise, not a traversal; pin it instead of fanning out
                s.t = min(max(s.t, 0.0), 1.0)
                continue
            partner = _crossed_occupant(state, s)
            if partner is not None:
                _resolve_pair(state, s, partner, report)
                continue
            children = fan_out(state, s, report)
            if children is None:
                # the member bounced back to the vertex and holds it as a
                # connective link; no structural change happened
                continue
            report.fanouts += 1
            report.fanout_created += len(children)
            report.created_total += len(children)
            report.removed_total += 1
            nxt.extend(c for c in children if c.t < 0.0 or c.t > 1.0)
            guard += 1
            if guard > limit:
                raise ConvergenceError("fan-out cascade did not terminate")
        queue = sorted((s for s in nxt if s.alive), key=lambda s: s.sid)


# -- collisions ------------------------------------------------------------


def _reconnect_reversed(chain):
    for u, v in zip(chain[:-1], chain[1:]):
        u.next = v
        v.prev = u


def _walk(start: Snaxel):
    out = [start]
    s = start.next
    while s is not start:
        out.append(s)
        s = s.next
    return out


def _resolve_pair(state: EvolutionState, a: Snaxel, b: Snaxel,
                  report: IterationReport):
    mesh = state.mesh
    eid = a.edge
    fa, fb = a.front, b.front
    same = fa is fb
    midpoint = [float(x) for x in mesh.point_on_edge(eid, 0.5)]

    pa, na, pb, nb = a.prev, a.next, b.prev, b.next

    def _side_of(s, prv, nxt):
        pos = mesh.point_on_edge(s.edge, min(max(s.t, 0.0), 1.0))
        dp = float(np.linalg.norm(pos - mesh.point_on_edge(prv.edge, min(max(prv.t, 0.0), 1.0))))
        dn = float(np.linalg.norm(pos - mesh.point_on_edge(nxt.edge, min(max(nxt.t, 0.0), 1.0))))
        return "prev" if dp <= dn else "next"

    def delete_pair():
        side_a = _side_of(a, pa, na)
        side_b = _side_of(b, pb, nb)
        for s in (a, b):
            state._detach(s)
        report.collisions += 1
        report.removed_total += 2
        state.log("delete", sid=a.sid, cause="collision", front=fa.fid,
                  prev=pa.sid, next=na.sid, partner=b.sid, edge=eid,
                  side=side_a, moved=float(a.moved))
        state.log("delete", sid=b.sid, cause="collision", front=fb.fid,
                  prev=pb.sid, next=nb.sid, partner=a.sid, edge=eid,
                  side=side_b, moved=float(b.moved))

    # debris singletons carry no strand; cancel the pair without surgery
    if na is a or nb is b:
        delete_pair()
        for s, front in ((a, fa), (b, fb)):
            if s.next is s:
                front.head = None
                front.size = 0
                front.alive = False
                report.annihilated_fronts += 1
                state.log("annihilate", front=front.fid, snaxels=[],
                          via="collision")
            else:
                prv, nxt = s.prev, s.next
                prv.next = nxt
                nxt.prev = prv
                front.size -= 1
                if front.head is s:
                    front.head = nxt
                if prv is not nxt and not mesh.edges_share_face(prv.edge, nxt.edge):
                    _repair_front(state, front, report)
        return

    # degenerate: two-member loop collapsing on one edge
    if same and na is b and nb is a:
        delete_pair()
        fa.head = None
        fa.size = 0
        fa.alive = False
        state.log("annihilate", front=fa.fid, snaxels=[], via="collision")
        report.annihilated_fronts += 1
        return

    # adjacent pair on one loop: plain shortening, no topology change
    if same and na is b:
        delete_pair()
        pa.next = nb
        nb.prev = pa
        fa.size -= 2
        if fa.head in (a, b):
            fa.head = pa
        if pa is not nb and not mesh.edges_share_face(pa.edge, nb.edge):
            _repair_front(state, fa, report)
        return
    if same and nb is a:
        delete_pair()
        pb.next = na
        na.prev = pb
        fa.size -= 2
        if fa.head in (a, b):
            fa.head = pb
        if pb is not na and not mesh.edges_share_face(pb.edge, na.edge):
            _repair_front(state, fa, report)
        return

    exchange_ok = (mesh.edges_share_face(pa.edge, nb.edge)
                   and mesh.edges_share_face(pb.edge, na.edge))
    straight_ok = (mesh.edges_share_face(pa.edge, pb.edge)
                   and mesh.edges_share_face(na.edge, nb.edge))

    delete_pair()

    if exchange_ok or not straight_ok:
        pa.next = nb
        nb.prev = pa
        pb.next = na
        na.prev = pb
        if same:
            loop1 = _walk(na)
            loop2 = _walk(nb)
            keep1 = min(s.sid for s in loop1) < min(s.sid for s in loop2)
            keep, split = (loop1, loop2) if keep1 else (loop2, loop1)
            fa.head = keep[0]
            fa.size = len(keep)
            nf = Front(state._new_fid(), fa.sign, fa.field,
                       seed_vertex=fa.seed_vertex, born_iter=state.iteration)
            nf.kind = fa.kind
            state.fronts[nf.fid] = nf
            nf.head = split[0]
            nf.size = len(split)
            for s in split:
                s.front = nf
            # a pinched-off loop counts as a topology change only when it is
            # both viable (three members minimum) and resolvable: a loop
            # whose whole extent fits inside a couple of edges cannot trace
            # any closed curve the mesh can represent, so it is shed debris
            small = nf if nf.size <= fa.size else fa
            smem = small.members()
            spts = mesh.points_on_edges(
                [s.edge for s in smem],
                [min(max(s.t, 0.0), 1.0) for s in smem])
            extent = float(np.linalg.norm(spts.max(axis=0) - spts.min(axis=0)))
            if (fa.size >= 3 and nf.size >= 3
                    and extent >= 2.0 * mesh.mean_edge_length):
                report.splits += 1
                state.log("split", front=fa.fid, new_front=nf.fid, edge=eid,
                          sizes=[fa.size, nf.size], midpoint=midpoint)
            else:
                report.shed += 1
                state.log("split_debris", front=fa.fid, new_front=nf.fid,
                          edge=eid, sizes=[fa.size, nf.size])
            if not exchange_ok:
                for fr in (fa, nf):
                    if fr.alive:
                        _repair_front(state, fr, report)
        else:
            _merge_fronts(state, fa, fb, na, eid, midpoint, report)
            if not exchange_ok:
                for fr in (fa, fb):
                    if fr.alive:
                        _repair_front(state, fr, report)
    else:
        # parallel strands: one chain must be reversed
        if same:
            chain = _walk_until(na, pb)
            _reconnect_reversed([pa] + chain[::-1] + [nb])
            fa.head = pa
            fa.size -= 2
            report.folds += 1
            state.log("fold", front=fa.fid, edge=eid)
        else:
            chain = _walk_until(nb, pb)
            _reconnect_reversed([pa] + chain[::-1] + [na])
            _merge_fronts(state, fa, fb, na, eid, midpoint, report)


def _repair_front(state: EvolutionState, front, report: IterationReport):
    """Contract members around non-face-adjacent links until the loop heals.

    Collision wiring can occasionally join strands whose endpoint edges do
    not bound a common face (the crossing still demands deletion, but no
    valid reconnection exists).  The junkier endpoint of each bad link is
    removed until adjacency holds; a loop that loses too much dissolves.
    """
    mesh = state.mesh
    budget = 32
    while front.alive and front.size >= 3 and front.head is not None:
        s = front.head
        bad = None
        for _ in range(front.size):
            if not mesh.edges_share_face(s.edge, s.next.edge):
                bad = s
                break
            s = s.next
        if bad is None:
            return
        if budget <= 0:
            break
        budget -= 1
        u, v = bad, bad.next
        if abs(_scalar_f(state, u)) >= abs(_scalar_f(state, v)):
            _delete_single(state, u, "cleanup", report)
        else:
            _delete_single(state, v, "cleanup", report)
    if front.alive:
        members = front.members()
        for m in members:
            _remove_from_loop(state, m)
        front.alive = False
        front.head = None
        report.annihilated_fronts += 1
        report.annihilated_members += len(members)
        report.removed_total += len(members)
        state.log("annihilate", front=front.fid,
                  snaxels=[m.sid for m in members], via="cleanup")


def _walk_until(start: Snaxel, stop: Snaxel):
    out = [start]
    s = start
    while s is not stop:
        s = s.next
        out.append(s)
    return out


def _merge_fronts(state, fa, fb, seed_member, eid, midpoint, report):
    size_a = fa.size - 1
    size_b = fb.size - 1
    if size_a > size_b or (size_a == size_b and fa.fid < fb.fid):
        survivor, absorbed = fa, fb
    else:
        survivor, absorbed = fb, fa
    loop = _walk(seed_member)
    for s in loop:
        s.front = survivor
    survivor.head = loop[0]
    survivor.size = len(loop)
    absorbed.alive = False
    absorbed.head = None
    absorbed.size = 0
    report.merges += 1
    state.log("merge", kept=survivor.fid, absorbed=absorbed.fid, edge=eid,
              sizes=[size_a + 1, size_b + 1], midpoint=midpoint)


def resolve_collisions(state: EvolutionState, report: IterationReport):
    """Delete crossed same-edge snaxel pairs and reconnect the loops."""
    candidates = []
    snaxels = state.snaxels
    for eid in sorted(state.edge_snax):
        occ = state.edge_snax[eid]
        if len(occ) < 2:
            continue
        if len(occ) == 2:
            lo, hi = occ
            if lo > hi:
                lo, hi = hi, lo
            p = snaxels[lo]
            q = snaxels[hi]
            # strands of opposite birth lineage wind opposite ways around
            # one zero set; merging them builds a loop that doubles back
            # on itself and zips away, so they pass through freely
            if (p.sign == q.sign
                    and p.front.field.key == q.front.field.key
                    and _pair_collides(p, q)):
                candidates.append((eid, lo, hi))
            continue
        sids = sorted(occ)
        for i in range(len(sids)):
            for j in range(i + 1, len(sids)):
                p = snaxels[sids[i]]
                q = snaxels[sids[j]]
                if p.front.field.key != q.front.field.key or p.sign != q.sign:
                    continue
                if _pair_collides(p, q):
                    candidates.append((eid, sids[i], sids[j]))
    for eid, lo, hi in candidates:
        p = state.snaxels.get(lo)
        q = state.snaxels.get(hi)
        if p is None or q is None or not (p.alive and q.alive):
            continue
        _resolve_pair(state, p, q, report)


# -- cleanup ---------------------------------------------------------------


def _scalar_f(state: EvolutionState, s: Snaxel) -> float:
    vals = s.front.field.eval_edges(state.mesh, state.camera, [s.edge], [s.t],
                                    snaxels=[s])
    return float(vals[0])


def _edge_point(mesh, s):
    a, b = mesh.edge_verts[s.edge]
    tt = min(max(s.t, 0.0), 1.0)
    return mesh.vertices[a] * (1.0 - tt) + mesh.vertices[b] * tt


def _delete_single(state: EvolutionState, s: Snaxel, cause: str,
                   report: IterationReport):
    prv, nxt = s.prev, s.next
    pos = _edge_point(state.mesh, s)
    dp = pos - _edge_point(state.mesh, prv)
    dn = pos - _edge_point(state.mesh, nxt)
    side = "prev" if float(dp @ dp) <= float(dn @ dn) else "next"
    _remove_from_loop(state, s)
    report.cleanup_removed += 1
    report.removed_total += 1
    state.log("delete", sid=s.sid, cause=cause, front=s.front.fid,
              prev=prv.sid, next=nxt.sid, side=side,
              moved=float(s.moved))


def cleanup(state: EvolutionState, report: IterationReport):
    """Remove redundant snaxels and dissolve loops that fell below size 3."""
    edge_faces = state.mesh.edge_faces_list
    face_edges = state.mesh.face_edges_list
    changed = True
    while changed:
        changed = False
        fronts = state.alive_fronts()
        dup_map = {}
        for front in fronts:
            if front.size < 2 or front.head is None:
                continue
            # adjacent members sharing one edge: keep the one nearer the zero set
            start = front.head
            s = start
            dups = []
            while True:
                n = s.next
                if n is not s and n.edge == s.edge:
                    dups.append(s)
                s = n
                if s is start:
                    break
            if dups:
                dup_map[front.fid] = dups
        # one batched evaluation per field covers every pair in this scan;
        # deletions do not move survivors, so the values stay valid
        fvals = {}
        if dup_map:
            by_key = {}
            for front in fronts:
                for s in dup_map.get(front.fid, ()):
                    for m in (s, s.next):
                        if m.sid not in fvals:
                            fvals[m.sid] = None
                            by_key.setdefault(
                                front.field.key, (front.field, [])
                            )[1].append(m)
            for key in sorted(by_key):
                fld, mem = by_key[key]
                vals = fld.eval_edges(state.mesh, state.camera,
                                      [m.edge for m in mem],
                                      [m.t for m in mem], snaxels=mem)
                for m, v in zip(mem, vals):
                    fvals[m.sid] = float(v)
        for front in fronts:
            if not front.alive or front.head is None:
                continue
            for s in dup_map.get(front.fid, ()):
                if not s.alive or front.size < 2:
                    continue
                n = s.next
                if n is s or n.edge != s.edge:
                    continue
                v_s = fvals.get(s.sid)
                v_n = fvals.get(n.sid)
                f_s = abs(v_s) if v_s is not None else abs(_scalar_f(state, s))
                f_n = abs(v_n) if v_n is not None else abs(_scalar_f(state, n))
                if f_s < f_n - _F_TIE:
                    victim = n
                elif f_n < f_s - _F_TIE:
                    victim = s
                else:
                    victim = s if n.sid < s.sid else n
                _delete_single(state, victim, "cleanup", report)
                changed = True
            if front.size < 3 or front.head is None:
                continue
            # middle of three consecutive snaxels on one triangle
            start = front.head
            s = start
            middles = []
            while True:
                p, n = s.prev, s.next
                se, pe, ne = s.edge, p.edge, n.edge
                if p is not n and pe != se and ne != se and pe != ne:
                    for f in edge_faces[se]:
                        if f < 0:
                            continue
                        fe = face_edges[f]
                        if pe in fe and ne in fe:
                            middles.append(s)
                            break
                s = n
                if s is start:
                    break
            for s in middles:
                if not s.alive or front.size < 3:
                    continue
                p, n = s.prev, s.next
                if p is n or p.edge == s.edge or n.edge == s.edge or p.edge == n.edge:
                    continue
                _delete_single(state, s, "cleanup", report)
                changed = True
    for front in state.alive_fronts():
        if front.size < 3:
            members = front.members()
            for s in members:
                _remove_from_loop(state, s)
            front.alive = False
            front.head = None
            report.annihilated_fronts += 1
            report.annihilated_members += len(members)
            report.removed_total += len(members)
            state.log("annihilate", front=front.fid,
                      snaxels=[s.sid for s in members], via="cleanup")


# -- the iteration ---------------------------------------------------------

def _snap_to_edge_zeros(state: EvolutionState) -> int:
    """Finish settling members by root-finding instead of creeping.

    Once the loop topology has stopped changing, the remaining motion is a
    slow slide toward the place on each edge where the field magnitude
    drops inside tolerance.  Solving for that point directly removes the
    exponential tail without changing where anything ends up.  Members on
    sign-crossing edges go to the root, refined by bisection because the
    field need not be linear along the edge; members on grazing edges walk
    to the first spot below tolerance in their travel direction, if it
    exists.  Jumps remain subject to collision resolution because the
    previous-position record lags one iteration behind.
    """
    eps_f = state.config.eps_f
    groups = {}
    for s in state.alive_snaxels():
        groups.setdefault(s.front.field.key, []).append(s)
    snapped = 0
    for key in sorted(groups):
        members = groups[key]
        fld = members[0].front.field
        mesh = state.mesh
        cam = state.camera
        eids = [s.edge for s in members]
        n = len(members)
        vert_f = _vertex_values(state, fld)
        ev = mesh.edge_verts[eids]
        fa = vert_f[ev[:, 0]]
        fb = vert_f[ev[:, 1]]
        fc = np.asarray(fld.eval_edges(mesh, cam, eids, [s.t for s in members],
                                       snaxels=members), dtype=np.float64)
        cross = [i for i in range(n)
                 if abs(fc[i]) >= eps_f and fa[i] * fb[i] < 0.0]
        graze = [i for i in range(n)
                 if abs(fc[i]) >= eps_f and fa[i] * fb[i] >= 0.0]
        if cross:
            lo_t = np.zeros(len(cross))
            hi_t = np.ones(len(cross))
            lo_f = fa[cross]
            hi_f = fb[cross]
            sub_e = [eids[i] for i in cross]
            sub_m = [members[i] for i in cross]
            t_try = lo_f / (lo_f - hi_f)
            for _ in range(10):
                fv = np.asarray(fld.eval_edges(mesh, cam, sub_e, t_try,
                                               snaxels=sub_m), dtype=np.float64)
                if np.all(np.abs(fv) < eps_f):
                    break
                same = fv * lo_f > 0.0
                lo_t = np.where(same, t_try, lo_t)
                lo_f = np.where(same, fv, lo_f)
                hi_t = np.where(same, hi_t, t_try)
                hi_f = np.where(same, hi_f, fv)
                t_try = 0.5 * (lo_t + hi_t)
            for i, tz in zip(cross, t_try):
                if float(tz) != members[i].t:
                    members[i].t = float(tz)
                    snapped += 1
        if graze:
            grid = 48
            flat_e, flat_t, flat_m, spans = [], [], [], []
            for i in graze:
                s = members[i]
                direction = -s.orient * (1.0 if fc[i] > 0.0 else -1.0)
                end = 1.0 if direction > 0.0 else 0.0
                ts = np.linspace(s.t, end, grid)
                flat_e.extend([eids[i]] * grid)
                flat_t.extend(ts.tolist())
                flat_m.extend([s] * grid)
                spans.append((i, ts))
            fv = np.asarray(fld.eval_edges(mesh, cam, flat_e, flat_t,
                                           snaxels=flat_m), dtype=np.float64)
            for k, (i, ts) in enumerate(spans):
                seg = np.abs(fv[k * grid:(k + 1) * grid])
                below = np.flatnonzero(seg < eps_f)
                if len(below):
                    members[i].t = float(ts[below[0]])
                    snapped += 1
    return snapped


def step(state: EvolutionState) -> IterationReport:
    """Advance one full iteration: move, fan out, collide, clean up."""
    snax, f, delta = _gather_field_values(state)
    return _apply_iteration(state, snax, f, delta)


def _apply_iteration(state, snax, f, delta) -> IterationReport:
    report = IterationReport(iteration=state.iteration)
    if len(snax):
        report.moved_max = float(np.max(np.abs(delta)))
        report.residual_max = float(np.max(np.abs(f)))
    _apply_movement(state, snax, f, delta)
    _run_fanout_pass(state, report)
    resolve_collisions(state, report)
    # the cleanup rules depend only on loop structure, which movement alone
    # cannot change, so they need a pass only after structural activity
    if (state._cleanup_pending or report.created_total
            or report.removed_total or report.collisions):
        cleanup(state, report)
        state._cleanup_pending = False
    for s in state.alive_snaxels():
        s.t_prev = s.t
    report.snaxel_count = len(state.snaxels)
    report.front_count = len(state.alive_fronts())
    state.iteration += 1
    state.reports.append(report)
    if state.trace_dir is not None:
        _write_trace(state)
    return report


def evolve(state: EvolutionState, max_iters=None,
           detect_oscillation=False, polish=None) -> ConvergedContours:
    """Iterate until both the displacement and residual criteria hold.

    The convergence test runs before applying a step, so a state that is
    already settled is returned unchanged.  With ``detect_oscillation``
    a repeated global configuration also terminates the run (used by the
    image-space interaction mode, where pushed snaxels hover).

    ``polish`` controls the event-free finishing mode, where members are
    placed by root-finding instead of creeping toward their stop point.
    It defaults to on for continuation runs, whose loops already track a
    previously settled structure, and off for first runs, which keep the
    raw dynamics to the end.
    """
    cfg = state.config
    limit = cfg.resolve_max_iters(state.mesh.n_faces) if max_iters is None else int(max_iters)
    if polish is None:
        polish = state.iteration > 0
    seen = {} if detect_oscillation else None
    start_iter = state.iteration
    contact = False
    quiet = 0
    _restabilize_orients(state)
    while True:
        if state.pre_iteration is not None:
            state.pre_iteration()
        snax, f, delta = _gather_field_values(state)
        if not len(snax):
            break
        if (np.max(np.abs(delta)) < cfg.eps_move
                and np.max(np.abs(f)) < cfg.eps_f):
            break
        if seen is not None:
            sig = hash(tuple((s.edge, round(s.t / 1e-9)) for s in snax))
            if sig in seen:
                contact = True
                break
            seen[sig] = state.iteration
        if state.iteration - start_iter >= limit:
            raise ConvergenceError(
                f"no convergence after {limit} iterations "
                f"(moved={np.max(np.abs(delta)):.3g}, "
                f"residual={np.max(np.abs(f)):.3g})",
                reports=state.reports[-10:],
            )
        rep = _apply_iteration(state, snax, f, delta)
        if rep.created_total or rep.removed_total or rep.collisions:
            quiet = 0
        else:
            quiet += 1
            if polish and quiet >= 1:
                _snap_to_edge_zeros(state)
    return _collect(state, start_iter, contact)


def _collect(state: EvolutionState, start_iter: int, contact: bool):
    fronts = state.alive_fronts()
    polylines = {}
    loops = {}
    for fr in fronts:
        mem = fr.members()
        loops[fr.fid] = [s.sid for s in mem]
        polylines[fr.fid] = state.mesh.points_on_edges(
            [s.edge for s in mem], [s.t for s in mem]
        )
    return ConvergedContours(
        fronts=fronts,
        polylines=polylines,
        loops=loops,
        visited={k: v.copy() for k, v in state.visited.items()},
        iterations=state.iteration - start_iter,
        reports=state.reports,
        contact=contact,
    )


def compute_front_energy(state: EvolutionState, front: Front) -> float:
    """Mean absolute field value over the members of one front."""
    mem = front.members()
    if not mem:
        return 0.0
    vals = front.field.eval_edges(
        state.mesh, state.camera,
        [s.edge for s in mem], [s.t for s in mem], snaxels=mem,
    )
    return float(np.mean(np.abs(vals)))


def extract_contours(mesh: Mesh, camera: Camera, field: ContourField,
                     config: EngineConfig | None = None) -> ConvergedContours:
    """Seed and evolve fronts for one field; the one-call entry point."""
    state = EvolutionState(mesh, camera, field, config)
    init_fronts(state)
    return evolve(state)


# -- diagnostics -----------------------------------------------------------


def check_invariants(state: EvolutionState):
    """Raise AssertionError when a structural invariant is broken."""
    mesh = state.mesh
    seen = set()
    for front in state.alive_fronts():
        assert front.size >= 3, f"front {front.fid} has size {front.size}"
        assert front.head is not None and front.head.alive
        mem = _walk(front.head)
        assert len(mem) == front.size, (
            f"front {front.fid} walk {len(mem)} != size {front.size}")
        for s in mem:
            assert s.alive and s.front is front
            assert s.sid in state.snaxels and not (s.sid in seen)
            seen.add(s.sid)
            assert -1e-12 <= s.t <= 1.0 + 1e-12, f"snaxel {s.sid} t={s.t}"
            assert s.next.prev is s and s.prev.next is s
            assert mesh.edges_share_face(s.edge, s.next.edge), (
                f"snaxels {s.sid},{s.next.sid} on non-adjacent edges")
            assert s.sid in state.edge_snax.get(s.edge, ()), "occupancy desync"
        for a, b in zip(mem, mem[1:]):
            assert not (a.edge == b.edge and a is not b.next and b is not a.next) or True
    assert seen == set(state.snaxels), "stray snaxels outside alive fronts"
    for eid, occ in state.edge_snax.items():
        for sid in occ:
            assert sid in state.snaxels and state.snaxels[sid].edge == eid


def _write_trace(state: EvolutionState):
    import os

    os.makedirs(state.trace_dir, exist_ok=True)
    path = os.path.join(
        state.trace_dir, f"frame{state.frame:03d}_iter{state.iteration:05d}.obj"
    )
    with open(path, "w", encoding="utf-8") as fh:
        base = 1
        for front in state.alive_fronts():
            mem = front.members()
            pts = state.mesh.points_on_edges([s.edge for s in mem],
                                             [s.t for s in mem])
            for p in pts:
                fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            idx = " ".join(str(base + i) for i in range(len(mem)))
            fh.write(f"l {idx} {base}\n")
            base += len(mem)
