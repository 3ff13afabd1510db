"""Episode pipeline: waypoints, connectivity graph, shortest path, smoothing,
arrow annotation and oracle transcription."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .render import CameraModel, HintQuery, find_hint
from .rng import substream_seed
from .scene import AGENT_RADIUS, GEOM_TOL, ArrowDir, Pose, SceneMap, line_of_sight, point_clearance, wrap_pi
from .sim import ActionId, apply_action

PATH_SPACING = 0.05
LOOKAHEAD = 0.5
DEADBAND = math.radians(7.5)
STOP_RADIUS = 0.5
STOP_HEADING = math.radians(45.0)
ARROW_RANGE = 3.0
ARROW_WINDOW = 2.0
ARROW_STRAIGHT_BAND = math.radians(20.0)


class EpisodeError(RuntimeError):
    pass


class NoPathError(EpisodeError):
    pass


class TranscriptionError(EpisodeError):
    pass


# -- waypoints -------------------------------------------------------------------------


def poisson_sample(scene: SceneMap, r: float, c_min: float, seed: int, k: int = 30) -> list[tuple[float, float]]:
    """Bridson dart throwing over cells whose clearance is at least ``c_min``.

    When the active list empties, any eligible cell centre still farther than ``r``
    from every sample seeds a new front, so disconnected regions get covered too.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    cs = scene.cell_size
    eligible = (scene.clearance >= c_min) & ~scene.occupancy
    if not eligible.any():
        raise EpisodeError(f"no free cell with clearance >= {c_min} m")
    rng = np.random.default_rng(seed)
    W, H = scene.size_m
    bg = r / math.sqrt(2.0)
    gw, gh = int(math.ceil(W / bg)) + 1, int(math.ceil(H / bg)) + 1
    grid = -np.ones((gh, gw), dtype=np.int64)
    samples: list[tuple[float, float]] = []
    active: list[int] = []

    def valid(x, y):
        i, j = int(math.floor(x / cs)), int(math.floor(y / cs))
        return 0 <= i < scene.width and 0 <= j < scene.height and bool(eligible[j, i])

    def far(x, y):
        gi, gj = int(x / bg), int(y / bg)
        for jj in range(max(gj - 2, 0), min(gj + 3, gh)):
            for ii in range(max(gi - 2, 0), min(gi + 3, gw)):
                s = grid[jj, ii]
                if s >= 0:
                    sx, sy = samples[s]
                    if (sx - x) ** 2 + (sy - y) ** 2 < r * r:
                        return False
        return True

    def add(x, y):
        samples.append((x, y))
        grid[int(y / bg), int(x / bg)] = len(samples) - 1
        active.append(len(samples) - 1)

    rows, cols = np.nonzero(eligible)
    centers = np.stack([(cols + 0.5) * cs, (rows + 0.5) * cs], axis=1)
    pick = int(rng.integers(0, len(rows)))
    add(float((cols[pick] + rng.random()) * cs), float((rows[pick] + rng.random()) * cs))
    while True:
        while active:
            ai = int(rng.integers(0, len(active)))
            qx, qy = samples[active[ai]]
            placed = False
            for _ in range(k):
                ang = 2.0 * math.pi * rng.random()
                d = r * math.sqrt(3.0 * rng.random() + 1.0)
                px, py = qx + d * math.cos(ang), qy + d * math.sin(ang)
                if 0.0 <= px < W and 0.0 <= py < H and valid(px, py) and far(px, py):
                    add(px, py)
                    placed = True
                    break
            if not placed:
                active[ai] = active[-1]
                active.pop()
        dist, _ = cKDTree(np.array(samples)).query(centers)
        uncovered = np.nonzero(dist >= r)[0]
        if uncovered.size == 0:
            return samples
        c = centers[uncovered[int(rng.integers(0, uncovered.size))]]
        add(float(c[0]), float(c[1]))


# -- graph -----------------------------------------------------------------------------


@dataclass
class NavGraph:
    vertices: list
    edges: list  # (i, j, length) with i < j
    goal_vertices: dict = field(default_factory=dict)

    def __post_init__(self):
        self.adj: list[list[tuple[int, float]]] = [[] for _ in self.vertices]
        for i, j, w in self.edges:
            self.adj[i].append((j, w))
            self.adj[j].append((i, w))
        for nbrs in self.adj:
            nbrs.sort()
        self._dist_cache: dict[int, list[float]] = {}

    def distances_from(self, src: int) -> list[float]:
        if src not in self._dist_cache:
            self._dist_cache[src] = dijkstra(self, src)
        return self._dist_cache[src]


def build_graph(scene: SceneMap, samples, r_edge: float, goal_vertices: dict | None = None) -> NavGraph:
    pts = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    edges = []
    n = len(pts)
    for i in range(n):
        d = np.hypot(pts[i + 1:, 0] - pts[i, 0], pts[i + 1:, 1] - pts[i, 1])
        for off in np.nonzero(d <= r_edge)[0]:
            j = i + 1 + int(off)
            if line_of_sight(scene, pts[i], pts[j], AGENT_RADIUS):
                edges.append((i, j, math.hypot(pts[j, 0] - pts[i, 0], pts[j, 1] - pts[i, 1])))
    return NavGraph([tuple(map(float, p)) for p in pts], edges, dict(goal_vertices or {}))


def build_scene_graph(
    scene: SceneMap, seed: int, r: float = 1.0, r_edge: float = 2.5, c_min: float = 0.4
) -> NavGraph:
    """Poisson waypoints plus every goal position as an extra vertex."""
    samples = poisson_sample(scene, r, c_min, seed)
    goal_vertices = {}
    for g in scene.goals:
        goal_vertices[g.goal_id] = len(samples)
        samples.append(tuple(g.position))
    return build_graph(scene, samples, r_edge, goal_vertices)


def dijkstra(graph: NavGraph, src: int) -> list[float]:
    dist = [math.inf] * len(graph.vertices)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in graph.adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(graph: NavGraph, s: int, t: int) -> list[int]:
    """Minimum-length vertex path; ties go to the lexicographically smallest index sequence."""
    n = len(graph.vertices)
    if not (0 <= s < n and 0 <= t < n):
        raise IndexError("vertex index out of range")
    to_t = graph.distances_from(t)
    if math.isinf(to_t[s]):
        raise NoPathError(f"vertex {t} unreachable from {s}")
    path = [s]
    u = s
    while u != t:
        tol = 1e-9 * max(1.0, to_t[u])
        nxt = min(v for v, w in graph.adj[u] if abs(w + to_t[v] - to_t[u]) <= tol and to_t[v] < to_t[u])
        path.append(nxt)
        u = nxt
    return path


def path_length(graph: NavGraph, path: list[int]) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += math.dist(graph.vertices[a], graph.vertices[b])
    return total


# -- smoothing -------------------------------------------------------------------------


@dataclass(eq=False)
class SmoothPath:
    points: np.ndarray  # (n, 2)
    tangents: np.ndarray  # (n, 2)
    fallback: tuple = ()

    @classmethod
    def from_points(cls, points, fallback=()) -> "SmoothPath":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(pts, finite_difference_tangents(pts), tuple(fallback))

    @property
    def arc(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    def nearest_index(self, p) -> int:
        d = np.hypot(self.points[:, 0] - p[0], self.points[:, 1] - p[1])
        return int(np.argmin(d))


def finite_difference_tangents(pts: np.ndarray) -> np.ndarray:
    n = len(pts)
    if n < 2:
        return np.tile([1.0, 0.0], (n, 1))
    d = np.empty_like(pts)
    d[0] = pts[1] - pts[0]
    d[-1] = pts[-1] - pts[-2]
    if n > 2:
        d[1:-1] = pts[2:] - pts[:-2]
    norm = np.hypot(d[:, 0], d[:, 1])[:, None]
    out = np.divide(d, norm, out=np.zeros_like(d), where=norm > 0)
    # zero-length differences inherit the neighbouring direction
    for i in range(n):
        if norm[i, 0] == 0.0:
            out[i] = out[i - 1] if i > 0 else np.array([1.0, 0.0])
    return out


def _catmull_rom_segment(p0, p1, p2, p3, n: int) -> np.ndarray:
    """Centripetal Catmull-Rom between p1 and p2 (Barry-Goldman form), n+1 samples."""

    def knot(ti, a, b):
        return ti + math.sqrt(math.dist(a, b))

    t0 = 0.0
    t1 = knot(t0, p0, p1)
    t2 = knot(t1, p1, p2)
    t3 = knot(t2, p2, p3)
    t = np.linspace(t1, t2, n + 1)[:, None]
    P = [np.asarray(v, dtype=np.float64) for v in (p0, p1, p2, p3)]

    def lerp(a, b, ta, tb):
        if tb == ta:
            return np.broadcast_to(b, (len(t), 2))
        return (tb - t) / (tb - ta) * a + (t - ta) / (tb - ta) * b

    A1 = lerp(P[0], P[1], t0, t1)
    A2 = lerp(P[1], P[2], t1, t2)
    A3 = lerp(P[2], P[3], t2, t3)
    B1 = lerp(A1, A2, t0, t2)
    B2 = lerp(A2, A3, t1, t3)
    return lerp(B1, B2, t1, t2)


def smooth_path(scene: SceneMap, waypoints, spacing: float = PATH_SPACING) -> SmoothPath:
    """Corner-cutting centripetal Catmull-Rom, resampled by arc length.

    Control points are the first waypoint, the midpoints of every leg and the last
    waypoint (endpoints duplicated), so the curve rounds each interior waypoint.
    A spline segment whose resampled points come closer than the agent radius to a
    wall falls back to the polyline through its waypoint.
    """
    wp = [tuple(map(float, w)) for w in waypoints]
    if len(wp) < 2:
        raise ValueError("need at least two waypoints")
    ctrl = [wp[0]]
    corner_of: list[tuple | None] = []
    for a, b in zip(wp, wp[1:]):
        ctrl.append(((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0))
    ctrl.append(wp[-1])
    # segment k joins ctrl[k] -> ctrl[k+1]; its polyline fallback passes through wp[k] if interior
    for k in range(len(ctrl) - 1):
        corner_of.append(wp[k] if 0 < k < len(wp) - 1 else None)
    ext = [ctrl[0]] + ctrl + [ctrl[-1]]
    fallback = [False] * (len(ctrl) - 1)
    while True:
        pieces = []
        for k in range(len(ctrl) - 1):
            a, b = ctrl[k], ctrl[k + 1]
            if fallback[k]:
                poly = [a] + ([corner_of[k]] if corner_of[k] is not None else []) + [b]
                seg = _densify(poly)
            else:
                chord = math.dist(a, b)
                n = max(16, int(math.ceil(chord / 0.005)))
                seg = _catmull_rom_segment(ext[k], ext[k + 1], ext[k + 2], ext[k + 3], n)
            pieces.append(seg)
        dense = [pieces[0]] + [p[1:] for p in pieces[1:]]
        seg_of_dense = np.concatenate([np.full(len(p), k) for k, p in enumerate(dense)])
        dense_pts = np.concatenate(dense)
        pts, src = _resample(dense_pts, seg_of_dense, spacing)
        bad = set()
        for p, k in zip(pts, src):
            if not fallback[k] and not line_of_sight(scene, p, p, AGENT_RADIUS):
                bad.add(int(k))
        if not bad:
            return SmoothPath.from_points(pts, fallback)
        for k in bad:
            fallback[k] = True


def _densify(poly) -> np.ndarray:
    out = [np.asarray(poly[0], dtype=np.float64)[None, :]]
    for a, b in zip(poly, poly[1:]):
        n = max(2, int(math.ceil(math.dist(a, b) / 0.005)))
        t = np.linspace(0.0, 1.0, n + 1)[1:, None]
        out.append(np.asarray(a) + t * (np.asarray(b) - np.asarray(a)))
    return np.concatenate(out)


def _resample(dense: np.ndarray, seg_of: np.ndarray, spacing: float):
    seglen = np.hypot(*np.diff(dense, axis=0).T)
    keep = np.concatenate([[True], seglen > 0])
    dense, seg_of = dense[keep], seg_of[keep]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(dense, axis=0).T))])
    total = s[-1]
    if total == 0.0:
        return np.array([dense[0], dense[0]]), np.array([seg_of[0], seg_of[0]])
    n = max(1, int(round(total / spacing)))
    q = np.linspace(0.0, total, n + 1)
    x = np.interp(q, s, dense[:, 0])
    y = np.interp(q, s, dense[:, 1])
    idx = np.clip(np.searchsorted(s, q, side="right") - 1, 0, len(s) - 1)
    return np.stack([x, y], axis=1), seg_of[idx]


# -- arrow annotation ------------------------------------------------------------------


def arrow_for(path: SmoothPath, p) -> tuple[ArrowDir, float]:
    """Arrow implied by the path's turn over the next 2 m after its point nearest ``p``."""
    i = path.nearest_index(p)
    arc = path.arc
    j = int(np.searchsorted(arc, arc[i] + ARROW_WINDOW, side="right") - 1)
    j = max(j, i)
    if j == i and i < len(arc) - 1:
        j = len(arc) - 1
    v = path.points[j] - path.points[i]
    if not v.any():
        return ArrowDir.STRAIGHT, 0.0
    tx, ty = path.tangents[i]
    delta = wrap_pi(math.atan2(v[1], v[0]) - math.atan2(ty, tx))
    if delta > ARROW_STRAIGHT_BAND:
        return ArrowDir.LEFT, delta
    if delta < -ARROW_STRAIGHT_BAND:
        return ArrowDir.RIGHT, delta
    return ArrowDir.STRAIGHT, delta


def annotate_signs(scene: SceneMap, path: SmoothPath, goal_id: str) -> dict[str, dict]:
    """``{sign_id: {goal_id: arrow}}`` for every sign within 3 m of the path."""
    scene.goal(goal_id)
    updates = {}
    for sign in scene.signs:
        d = np.hypot(path.points[:, 0] - sign.position[0], path.points[:, 1] - sign.position[1])
        if d.min() <= ARROW_RANGE:
            updates[sign.sign_id] = {goal_id: arrow_for(path, sign.position)[0]}
    return updates


# -- oracle ----------------------------------------------------------------------------


class PathFollower:
    """Greedy lookahead controller over a smooth path."""

    def __init__(self, path: SmoothPath, goal):
        self.path = path
        self.arc = path.arc
        self.goal = (float(goal[0]), float(goal[1]))
        self.progress = 0

    def action(self, pose: Pose) -> ActionId:
        pts = self.path.points
        hi = int(np.searchsorted(self.arc, self.arc[self.progress] + 3.0, side="right"))
        window = pts[self.progress:max(hi, self.progress + 1)]
        d = np.hypot(window[:, 0] - pose.x, window[:, 1] - pose.y)
        self.progress += int(np.argmin(d))
        far = int(np.searchsorted(self.arc, self.arc[self.progress] + LOOKAHEAD + 1e-12, side="right") - 1)
        tx, ty = pts[max(far, self.progress)]
        vx, vy = tx - pose.x, ty - pose.y
        err = 0.0 if math.hypot(vx, vy) < 1e-9 else wrap_pi(math.atan2(vy, vx) - pose.theta)
        if math.hypot(pose.x - self.goal[0], pose.y - self.goal[1]) <= STOP_RADIUS + 1e-9 and abs(err) <= STOP_HEADING:
            return ActionId.STOP
        if abs(err) > DEADBAND:
            return ActionId.LEFT if err > 0 else ActionId.RIGHT
        return ActionId.FORWARD


def step_bound(path: SmoothPath) -> int:
    return max(int(math.ceil(10.0 * path.length / 0.25)), 48)


def oracle_actions(scene: SceneMap, path: SmoothPath, goal, start: Pose | None = None) -> list[tuple[Pose, ActionId]]:
    """Transcribe the follower into (pose, action) pairs, ending with Stop."""
    if start is None:
        tx, ty = path.tangents[0]
        start = Pose(float(path.points[0, 0]), float(path.points[0, 1]), math.atan2(ty, tx))
    follower = PathFollower(path, goal)
    pose = start
    out = []
    for _ in range(step_bound(path)):
        a = follower.action(pose)
        out.append((pose, a))
        if a == ActionId.STOP:
            return out
        pose = apply_action(scene, pose, a)
    raise TranscriptionError(f"oracle exceeded {step_bound(path)} steps")


# -- episodes --------------------------------------------------------------------------


@dataclass
class Step:
    pose: Pose
    action: ActionId
    hint_dir: ArrowDir | None = None
    bbox: tuple | None = None
    executed: ActionId | None = None  # DAgger records: action actually taken
    source: str | None = None  # "expert" | "model"


@dataclass(eq=False)
class Episode:
    episode_id: str
    scene_id: str
    goal_id: str
    start: Pose
    gt_path: SmoothPath
    steps: list
    start_vertex: int = -1
    provenance: str = "expert"

    @property
    def actions(self) -> list[ActionId]:
        return [s.action for s in self.steps]

    def annotated_scene(self, scene: SceneMap) -> SceneMap:
        return scene.with_arrows(annotate_signs(scene, self.gt_path, self.goal_id))

    def dumps(self) -> str:
        header = {
            "episode_id": self.episode_id,
            "scene_id": self.scene_id,
            "goal_id": self.goal_id,
            "start": [self.start.x, self.start.y, self.start.theta],
            "gt_path": self.gt_path.points.tolist(),
            "fallback": list(self.gt_path.fallback),
            "start_vertex": self.start_vertex,
            "provenance": self.provenance,
        }
        lines = [json.dumps(header)]
        for t, s in enumerate(self.steps):
            rec = {
                "t": t,
                "pose": [s.pose.x, s.pose.y, s.pose.theta],
                "action": s.action.name.capitalize(),
                "hint_dir": s.hint_dir.value if s.hint_dir is not None else None,
                "bbox": list(s.bbox) if s.bbox is not None else None,
            }
            if s.executed is not None:
                rec["executed"] = s.executed.name.capitalize()
                rec["source"] = s.source
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Episode":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise EpisodeError("empty episode file")
        h = json.loads(lines[0])
        steps = []
        for ln in lines[1:]:
            r = json.loads(ln)
            steps.append(
                Step(
                    pose=Pose(*r["pose"]),
                    action=ActionId[r["action"].upper()],
                    hint_dir=ArrowDir(r["hint_dir"]) if r.get("hint_dir") else None,
                    bbox=tuple(r["bbox"]) if r.get("bbox") is not None else None,
                    executed=ActionId[r["executed"].upper()] if r.get("executed") else None,
                    source=r.get("source"),
                )
            )
        return cls(
            episode_id=h["episode_id"],
            scene_id=h["scene_id"],
            goal_id=h["goal_id"],
            start=Pose(*h["start"]),
            gt_path=SmoothPath.from_points(h["gt_path"], h.get("fallback", ())),
            steps=steps,
            start_vertex=int(h.get("start_vertex", -1)),
            provenance=h.get("provenance", "expert"),
        )


def record_hints(scene: SceneMap, goal_id: str, poses, cam: CameraModel, query: HintQuery | None = None):
    query = query or HintQuery(goal_id)
    out = []
    for pose in poses:
        found = find_hint(scene, pose, cam, query)
        if found is None:
            out.append((None, None))
        else:
            sign, box, _ = found
            out.append((sign.arrows[goal_id], tuple(int(v) for v in box)))
    return out


def generate_episode(
    scene: SceneMap,
    graph: NavGraph,
    seed: int,
    min_geodesic: float = 5.0,
    episode_id: str = "ep",
    exclude=frozenset(),
    cam: CameraModel | None = None,
    max_rejections: int = 100,
) -> Episode:
    if not graph.vertices:
        raise EpisodeError("empty graph")
    if not graph.goal_vertices:
        raise EpisodeError("graph has no goal vertices")
    cam = cam or CameraModel()
    rng = np.random.default_rng(seed)
    goal_ids = sorted(graph.goal_vertices)
    for _ in range(max_rejections):
        goal_id = goal_ids[int(rng.integers(0, len(goal_ids)))]
        gv = graph.goal_vertices[goal_id]
        sv = int(rng.integers(0, len(graph.vertices)))
        if sv == gv or (sv, goal_id) in exclude:
            continue
        geodesic = graph.distances_from(gv)[sv]
        if math.isinf(geodesic) or geodesic < min_geodesic:
            continue
        verts = shortest_path(graph, sv, gv)
        path = smooth_path(scene, [graph.vertices[v] for v in verts])
        ep_scene = scene.with_arrows(annotate_signs(scene, path, goal_id))
        try:
            pairs = oracle_actions(ep_scene, path, scene.goal(goal_id).position)
        except TranscriptionError:
            continue
        hints = record_hints(ep_scene, goal_id, [p for p, _ in pairs], cam)
        steps = [Step(p, a, hd, bb) for (p, a), (hd, bb) in zip(pairs, hints)]
        return Episode(episode_id, scene.scene_id, goal_id, pairs[0][0], path, steps, sv)
    raise EpisodeError(f"no valid start/goal pair after {max_rejections} rejections")


def replay(scene: SceneMap, episode: Episode) -> list[Pose]:
    poses = [episode.start]
    for s in episode.steps[:-1]:
        poses.append(apply_action(scene, poses[-1], s.executed if s.executed is not None else s.action))
    return poses


@dataclass
class SplitPlan:
    train: list
    val_seen: list
    val_unseen: list


def split_scenes(scenes: list, counts: dict) -> SplitPlan:
    n_unseen_eps = counts.get("val_unseen", 0)
    if n_unseen_eps > 0:
        if len(scenes) < 2:
            raise EpisodeError("insufficient scenes: val_unseen needs at least 2 scenes")
        n_unseen = max(1, int(round(len(scenes) / 5)))
        seen, unseen = scenes[:-n_unseen], scenes[-n_unseen:]
    else:
        seen, unseen = list(scenes), []
    if (counts.get("train", 0) or counts.get("val_seen", 0)) and not seen:
        raise EpisodeError("insufficient scenes for the train split")
    return SplitPlan(seen, seen, unseen)


SPLITS = ("train", "val_seen", "val_unseen")


def generate_splits(
    scenes: list,
    counts: dict,
    seed: int,
    graph_params: dict | None = None,
    min_geodesic: float = 5.0,
    cam: CameraModel | None = None,
) -> dict[str, list[Episode]]:
    """Episodes per split. ``val_seen`` reuses training scenes with fresh start/goal pairs."""
    plan = split_scenes(list(scenes), counts)
    gp = dict(graph_params or {})
    graphs = {}
    for sc in scenes:
        graphs[sc.scene_id] = build_scene_graph(sc, substream_seed(seed, "graph:" + sc.scene_id), **gp)
    used: dict[str, set] = {}
    out: dict[str, list[Episode]] = {}
    for split in SPLITS:
        pool = getattr(plan, split)
        eps = []
        for i in range(counts.get(split, 0)):
            sc = pool[i % len(pool)]
            exclude = used.get(sc.scene_id, set()) if split == "val_seen" else frozenset()
            ep = generate_episode(
                sc,
                graphs[sc.scene_id],
                substream_seed(seed, split, i),
                min_geodesic,
                episode_id=f"{split}_{i:05d}",
                exclude=exclude,
                cam=cam,
            )
            if split == "train":
                used.setdefault(sc.scene_id, set()).add((ep.start_vertex, ep.goal_id))
            eps.append(ep)
        out[split] = eps
    return out


class OraclePolicy:
    """Follows the episode's ground-truth path from the agent's current pose."""

    needs_frame = False

    def __init__(self, scene: SceneMap, episode: Episode):
        self.path = episode.gt_path
        self.goal = scene.goal(episode.goal_id).position
        self.reset()

    def reset(self) -> None:
        self.follower = PathFollower(self.path, self.goal)

    def act(self, result) -> ActionId:
        return self.follower.action(result.state.pose)
