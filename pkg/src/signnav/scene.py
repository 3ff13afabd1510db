"""Occupancy-grid world: signs, goals, clearance, visibility, procedural floorplans."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

TAU = 2.0 * math.pi
AGENT_RADIUS = 0.2
GEOM_TOL = 1e-9


class SceneError(ValueError):
    """Invalid scene data or infeasible generation parameters."""


class ArrowDir(str, enum.Enum):
    LEFT = "Left"
    STRAIGHT = "Straight"
    RIGHT = "Right"


# 9x9 glyphs as drawn on screen (row 0 at the top of the image).
_UP = [
    "....#....",
    "...###...",
    "..#####..",
    ".#######.",
    "###.#.###",
    "....#....",
    "....#....",
    "....#....",
    "....#....",
]
_GLYPH_UP = np.array([[c == "#" for c in row] for row in _UP], dtype=bool)
GLYPHS: dict[ArrowDir, np.ndarray] = {
    ArrowDir.STRAIGHT: _GLYPH_UP,
    ArrowDir.LEFT: np.rot90(_GLYPH_UP, 1).copy(),
    ArrowDir.RIGHT: np.rot90(_GLYPH_UP, -1).copy(),
}
for _g in GLYPHS.values():
    _g.setflags(write=False)


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TAU)
    if t < 0.0:
        t += TAU
    if t >= TAU or t == 0.0:
        t = 0.0
    return t


def wrap_pi(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TAU)
    if a <= 0.0:
        a += TAU
    return a - math.pi


def r9(v: float) -> float:
    return float(f"{v:.9g}")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Goal:
    goal_id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class Sign:
    sign_id: str
    position: tuple[float, float]
    normal: float
    arrows: dict = field(default_factory=dict)
    quad_width: float = 0.5
    mount_height_frac: float = 0.6

    @property
    def normal_vec(self) -> tuple[float, float]:
        return (math.cos(self.normal), math.sin(self.normal))


@dataclass(frozen=True, eq=False)
class SceneMap:
    """Closed 2D world. ``occupancy[row, col]`` with row = y index, col = x index."""

    occupancy: np.ndarray
    cell_size: float = 0.1
    signs: tuple = ()
    goals: tuple = ()
    scene_id: str = "scene"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=bool)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "signs", tuple(self.signs))
        object.__setattr__(self, "goals", tuple(self.goals))

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def size_m(self) -> tuple[float, float]:
        return (self.width * self.cell_size, self.height * self.cell_size)

    def goal(self, goal_id: str) -> Goal:
        for g in self.goals:
            if g.goal_id == goal_id:
                return g
        raise KeyError(f"unknown goal_id {goal_id!r}")

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing the point."""
        return int(math.floor(x / self.cell_size)), int(math.floor(y / self.cell_size))

    def in_bounds(self, x: float, y: float) -> bool:
        w, h = self.size_m
        return 0.0 <= x <= w and 0.0 <= y <= h

    def is_free_point(self, x: float, y: float) -> bool:
        i, j = self.cell_of(x, y)
        if not (0 <= i < self.width and 0 <= j < self.height):
            return False
        return not self.occupancy[j, i]

    @property
    def clearance(self) -> np.ndarray:
        if "clearance" not in self._cache:
            self._cache["clearance"] = clearance_field(self)
        return self._cache["clearance"]

    def with_arrows(self, updates: dict[str, dict]) -> "SceneMap":
        """New scene whose signs' arrow maps are merged with ``updates[sign_id]``."""
        signs = []
        for s in self.signs:
            if s.sign_id in updates:
                arrows = dict(s.arrows)
                arrows.update(updates[s.sign_id])
                s = replace(s, arrows=arrows)
            signs.append(s)
        return SceneMap(self.occupancy, self.cell_size, tuple(signs), self.goals, self.scene_id)

    # -- validation / serialization -------------------------------------------------

    def validate(self) -> None:
        occ = self.occupancy
        if occ.ndim != 2 or occ.size == 0:
            raise SceneError("occupancy: must be a non-empty 2D grid")
        if not self.cell_size > 0:
            raise SceneError("cell_size: must be positive")
        if not (occ[0, :].all() and occ[-1, :].all() and occ[:, 0].all() and occ[:, -1].all()):
            raise SceneError("occupancy: border cells must all be occupied")
        goal_ids = set()
        for k, g in enumerate(self.goals):
            if g.goal_id in goal_ids:
                raise SceneError(f"goals[{k}].goal_id: duplicate {g.goal_id!r}")
            goal_ids.add(g.goal_id)
            if not self.in_bounds(*g.position) or not self.is_free_point(*g.position):
                raise SceneError(f"goals[{k}].position: not in free space")
            if point_clearance(self, g.position) < AGENT_RADIUS - GEOM_TOL:
                raise SceneError(f"goals[{k}].position: clearance below agent radius")
        sign_ids = set()
        eps = 0.25 * self.cell_size
        for k, s in enumerate(self.signs):
            if s.sign_id in sign_ids:
                raise SceneError(f"signs[{k}].sign_id: duplicate {s.sign_id!r}")
            sign_ids.add(s.sign_id)
            if not s.quad_width > 0:
                raise SceneError(f"signs[{k}].quad_width: must be positive")
            if not 0.0 <= s.mount_height_frac <= 1.0:
                raise SceneError(f"signs[{k}].mount_height_frac: must be in [0, 1]")
            nx, ny = s.normal_vec
            px, py = s.position
            if not self.is_free_point(px + eps * nx, py + eps * ny):
                raise SceneError(f"signs[{k}].normal: does not point into free space")
            if self.is_free_point(px - eps * nx, py - eps * ny):
                raise SceneError(f"signs[{k}].position: not on a wall face")
            for gid, arrow in s.arrows.items():
                if gid not in goal_ids:
                    raise SceneError(f"signs[{k}].arrows: unknown goal_id {gid!r}")
                if not isinstance(arrow, ArrowDir):
                    raise SceneError(f"signs[{k}].arrows: bad arrow {arrow!r}")

    def to_dict(self) -> dict:
        rows = ["".join("#" if c else "." for c in row) for row in self.occupancy]
        return {
            "scene_id": self.scene_id,
            "cell_size": r9(self.cell_size),
            "width": self.width,
            "height": self.height,
            "occupancy": rows,
            "signs": [
                {
                    "sign_id": s.sign_id,
                    "position": [r9(s.position[0]), r9(s.position[1])],
                    "normal": r9(s.normal),
                    "arrows": {gid: a.value for gid, a in sorted(s.arrows.items())},
                    "quad_width": r9(s.quad_width),
                    "mount_height_frac": r9(s.mount_height_frac),
                }
                for s in self.signs
            ],
            "goals": [
                {"goal_id": g.goal_id, "position": [r9(g.position[0]), r9(g.position[1])]}
                for g in self.goals
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SceneMap":
        def need(obj, key, where):
            if key not in obj:
                raise SceneError(f"{where}{key}: missing")
            return obj[key]

        try:
            width = int(need(d, "width", ""))
            height = int(need(d, "height", ""))
            rows = need(d, "occupancy", "")
            if len(rows) != height or any(len(r) != width for r in rows):
                raise SceneError("occupancy: shape does not match width/height")
            if any(set(r) - {"#", "."} for r in rows):
                raise SceneError("occupancy: only '#' and '.' allowed")
            occ = np.array([[c == "#" for c in r] for r in rows], dtype=bool).reshape(height, width)
            goals = tuple(
                Goal(str(need(g, "goal_id", f"goals[{k}].")), _pair(need(g, "position", f"goals[{k}].")))
                for k, g in enumerate(d.get("goals", []))
            )
            signs = []
            for k, s in enumerate(d.get("signs", [])):
                where = f"signs[{k}]."
                try:
                    arrows = {gid: ArrowDir(a) for gid, a in s.get("arrows", {}).items()}
                except ValueError as exc:
                    raise SceneError(f"{where}arrows: {exc}") from None
                signs.append(
                    Sign(
                        sign_id=str(need(s, "sign_id", where)),
                        position=_pair(need(s, "position", where)),
                        normal=float(need(s, "normal", where)),
                        arrows=arrows,
                        quad_width=float(s.get("quad_width", 0.5)),
                        mount_height_frac=float(s.get("mount_height_frac", 0.6)),
                    )
                )
            scene = cls(
                occupancy=occ,
                cell_size=float(need(d, "cell_size", "")),
                signs=tuple(signs),
                goals=goals,
                scene_id=str(need(d, "scene_id", "")),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SceneError):
                raise
            raise SceneError(f"malformed scene: {exc}") from None
        scene.validate()
        return scene

    @classmethod
    def loads(cls, text: str) -> "SceneMap":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "SceneMap":
        return cls.loads(Path(path).read_text())


def _pair(v) -> tuple[float, float]:
    x, y = v
    return (float(x), float(y))


# -- geometry ---------------------------------------------------------------------------


def clearance_field(scene: SceneMap) -> np.ndarray:
    """Distance (m) from each free cell centre to the nearest occupied cell centre."""
    occ = scene.occupancy
    if occ.all():
        return np.zeros(occ.shape)
    if not occ.any():
        return np.full(occ.shape, np.inf)
    return ndimage.distance_transform_edt(~occ) * scene.cell_size


def _segment_box_distance(ax, ay, bx, by, x0, y0, x1, y1):
    """Distance from segment a-b to each closed axis-aligned box (vectorized over boxes)."""
    dx, dy = bx - ax, by - ay
    tmin = np.zeros_like(x0)
    tmax = np.ones_like(x0)
    hit = np.ones(x0.shape, dtype=bool)
    for a, d, lo, hi in ((ax, dx, x0, x1), (ay, dy, y0, y1)):
        if d == 0.0:
            hit &= (a >= lo) & (a <= hi)
        else:
            t1 = (lo - a) / d
            t2 = (hi - a) / d
            tmin = np.maximum(tmin, np.minimum(t1, t2))
            tmax = np.minimum(tmax, np.maximum(t1, t2))
    hit &= tmin <= tmax

    def point_box(px, py):
        ex = np.maximum(np.maximum(x0 - px, 0.0), px - x1)
        ey = np.maximum(np.maximum(y0 - py, 0.0), py - y1)
        return np.hypot(ex, ey)

    best = np.minimum(point_box(ax, ay), point_box(bx, by))
    seg2 = dx * dx + dy * dy
    for cx, cy in ((x0, y0), (x0, y1), (x1, y0), (x1, y1)):
        if seg2 > 0.0:
            t = np.clip(((cx - ax) * dx + (cy - ay) * dy) / seg2, 0.0, 1.0)
            d = np.hypot(ax + t * dx - cx, ay + t * dy - cy)
        else:
            d = np.hypot(ax - cx, ay - cy)
        best = np.minimum(best, d)
    return np.where(hit, 0.0, best)


def _occupied_boxes(scene: SceneMap, xlo, ylo, xhi, yhi):
    cs = scene.cell_size
    i0 = max(int(math.floor(xlo / cs)) - 1, 0)
    j0 = max(int(math.floor(ylo / cs)) - 1, 0)
    i1 = min(int(math.floor(xhi / cs)) + 2, scene.width)
    j1 = min(int(math.floor(yhi / cs)) + 2, scene.height)
    if i0 >= i1 or j0 >= j1:
        return None
    rows, cols = np.nonzero(scene.occupancy[j0:j1, i0:i1])
    if rows.size == 0:
        return None
    x0 = (cols + i0) * cs
    y0 = (rows + j0) * cs
    return x0, y0, x0 + cs, y0 + cs


def segment_obstacle_distance(scene: SceneMap, a, b, reach: float) -> float:
    """Minimum distance from segment a-b to occupied cells within ``reach`` (inf if none)."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    boxes = _occupied_boxes(
        scene, min(ax, bx) - reach, min(ay, by) - reach, max(ax, bx) + reach, max(ay, by) + reach
    )
    if boxes is None:
        return math.inf
    return float(_segment_box_distance(ax, ay, bx, by, *boxes).min())


def _clear_lower_bound(scene: SceneMap, a, b) -> float:
    """Cheap lower bound on the obstacle distance of segment a-b, from the clearance field."""
    i, j = scene.cell_of(float(a[0]), float(a[1]))
    if not (0 <= i < scene.width and 0 <= j < scene.height):
        return -math.inf
    length = math.hypot(float(b[0]) - float(a[0]), float(b[1]) - float(a[1]))
    return float(scene.clearance[j, i]) - math.sqrt(2.0) * scene.cell_size - length


def line_of_sight(scene: SceneMap, a, b, radius: float = 0.0) -> bool:
    """True iff the capsule of ``radius`` around segment a-b touches no occupied cell.

    With ``radius == 0`` any contact with a closed occupied cell blocks (supercover).
    For ``radius > 0`` contact exactly at distance ``radius`` is allowed.
    """
    if _clear_lower_bound(scene, a, b) > max(radius, 0.0):
        return True
    d = segment_obstacle_distance(scene, a, b, max(radius, 0.0))
    if radius <= 0.0:
        return d > 0.0
    return d >= radius - GEOM_TOL


def point_clearance(scene: SceneMap, p) -> float:
    """Exact distance from a point to the nearest occupied cell square."""
    x, y = float(p[0]), float(p[1])
    i, j = scene.cell_of(x, y)
    if not (0 <= i < scene.width and 0 <= j < scene.height) or scene.occupancy[j, i]:
        return 0.0
    reach = float(scene.clearance[j, i]) + 2.0 * scene.cell_size
    if not math.isfinite(reach):
        return math.inf
    return segment_obstacle_distance(scene, (x, y), (x, y), reach)


# -- procedural floorplans -------------------------------------------------------------


@dataclass(frozen=True)
class FloorplanParams:
    extent: float = 20.0
    corridor_width: float = 1.6
    room_count: tuple = (2, 4)
    room_size: tuple = (3.0, 4.5)
    door_width: float = 1.0
    wall_thickness: float = 0.2
    branch_count: tuple = (2, 3)
    loop_prob: float = 0.5
    cell_size: float = 0.1


@dataclass
class _Rect:
    x0: int
    y0: int
    x1: int
    y1: int
    horizontal: bool = True

    def overlap(self, other: "_Rect"):
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x0 < x1 and y0 < y1:
            return _Rect(x0, y0, x1, y1)
        return None


def check_floorplan_params(p: FloorplanParams) -> None:
    if p.cell_size <= 0:
        raise SceneError("cell_size: must be positive")
    if p.corridor_width + 2 * p.cell_size > p.extent:
        raise SceneError("corridor_width: corridor does not fit in extent")
    if p.extent < 10.0:
        raise SceneError("extent: must be at least 10 m")
    if p.corridor_width < 3 * 2 * AGENT_RADIUS - GEOM_TOL:
        raise SceneError("corridor_width: must be at least 3 agent diameters (1.2 m)")
    lo, hi = p.room_count
    if lo < 2 or hi < lo:
        raise SceneError("room_count: need 2 <= min <= max (two goals in distinct rooms)")
    smin, smax = p.room_size
    if smin < 2 * AGENT_RADIUS + 2 * p.cell_size or smax < smin:
        raise SceneError("room_size: invalid range")
    if smin + p.corridor_width + 2 * p.wall_thickness + 4 * p.cell_size > p.extent / 2:
        raise SceneError("room_size: rooms cannot fit beside the corridors")
    if p.door_width < 2 * AGENT_RADIUS + 2 * p.cell_size or p.door_width > smin:
        raise SceneError("door_width: must exceed the agent diameter and fit the room")
    blo, bhi = p.branch_count
    if blo < 1 or bhi < blo:
        raise SceneError("branch_count: need 1 <= min <= max")


def gen_floorplan(seed: int, params: FloorplanParams | None = None, scene_id: str | None = None) -> SceneMap:
    """Corridor skeleton (main hall + T branches, optional loop) with attached rooms."""
    p = params or FloorplanParams()
    check_floorplan_params(p)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cs = p.cell_size
    n = int(round(p.extent / cs))
    w = int(round(p.corridor_width / cs))
    t = max(1, int(round(p.wall_thickness / cs)))
    occ = np.ones((n, n), dtype=bool)
    corridors: list[_Rect] = []

    def carve(r: _Rect):
        occ[r.y0:r.y1, r.x0:r.x1] = False

    # main horizontal hall
    margin = 3
    y0 = int(rng.integers(n // 3, max(n // 3 + 1, 2 * n // 3 - w)))
    main = _Rect(margin, y0, n - margin, y0 + w, True)
    corridors.append(main)

    nb = int(rng.integers(p.branch_count[0], p.branch_count[1] + 1))
    span = main.x1 - main.x0
    bin_w = span // nb
    if bin_w < 3 * w:
        nb = max(1, span // (3 * w))
        bin_w = span // nb
    min_len = int(round(3.0 / cs))
    branches = []
    for k in range(nb):
        lo = main.x0 + k * bin_w + w
        hi = main.x0 + (k + 1) * bin_w - 2 * w
        bx = int(rng.integers(lo, max(lo + 1, hi)))
        up = bool(rng.integers(0, 2))
        if up:
            room = n - margin - main.y1
            length = int(rng.integers(min(min_len, room), room + 1))
            r = _Rect(bx, main.y0, bx + w, main.y1 + length, False)
        else:
            room = main.y0 - margin
            length = int(rng.integers(min(min_len, room), room + 1))
            r = _Rect(bx, main.y0 - length, bx + w, main.y1, False)
        branches.append((r, up))

    # optional loop between two neighbouring branches on the same side
    if len(branches) >= 2 and rng.random() < p.loop_prob:
        pairs = [
            k for k in range(len(branches) - 1)
            if branches[k][1] == branches[k + 1][1]
        ]
        if pairs:
            k = pairs[int(rng.integers(0, len(pairs)))]
            (a, up), (b, _) = branches[k], branches[k + 1]
            if up:
                top = min(a.y1, b.y1)
                a.y1 = b.y1 = top
                connector = _Rect(a.x0, top - w, b.x1, top, True)
            else:
                bot = max(a.y0, b.y0)
                a.y0 = b.y0 = bot
                connector = _Rect(a.x0, bot, b.x1, bot + w, True)
            corridors.append(connector)
    corridors.extend(r for r, _ in branches)
    for r in corridors:
        carve(r)

    # rooms attached to corridors through a door in a wall of thickness t
    smin, smax = (int(round(s / cs)) for s in p.room_size)
    dw = int(round(p.door_width / cs))
    target = int(rng.integers(p.room_count[0], p.room_count[1] + 1))
    rooms: list[_Rect] = []
    doors: list[tuple[_Rect, _Rect, str]] = []
    for _ in range(400):
        if len(rooms) >= target:
            break
        c = corridors[int(rng.integers(0, len(corridors)))]
        rw = int(rng.integers(smin, smax + 1))
        rh = int(rng.integers(smin, smax + 1))
        side = int(rng.integers(0, 4)) if not c.horizontal else int(rng.integers(0, 2))
        if c.horizontal:
            if c.x1 - c.x0 < rw:
                continue
            rx = int(rng.integers(c.x0, c.x1 - rw + 1))
            if side == 0:
                room = _Rect(rx, c.y1 + t, rx + rw, c.y1 + t + rh)
                wall_side = "N"
            else:
                room = _Rect(rx, c.y0 - t - rh, rx + rw, c.y0 - t)
                wall_side = "S"
        else:
            if c.y1 - c.y0 < rh:
                continue
            ry = int(rng.integers(c.y0, c.y1 - rh + 1))
            if side % 2 == 0:
                room = _Rect(c.x1 + t, ry, c.x1 + t + rw, ry + rh)
                wall_side = "E"
            else:
                room = _Rect(c.x0 - t - rw, ry, c.x0 - t, ry + rh)
                wall_side = "W"
        ex = _Rect(room.x0 - t, room.y0 - t, room.x1 + t, room.y1 + t)
        if ex.x0 < 1 or ex.y0 < 1 or ex.x1 > n - 1 or ex.y1 > n - 1:
            continue
        if not occ[ex.y0:ex.y1, ex.x0:ex.x1].all():
            continue
        # door overlapping both the room side and the corridor side
        if wall_side in "NS":
            lo, hi = max(room.x0, c.x0) + 1, min(room.x1, c.x1) - 1 - dw
            if hi < lo:
                continue
            dx = int(rng.integers(lo, hi + 1))
            door = (
                _Rect(dx, c.y1, dx + dw, room.y0) if wall_side == "N" else _Rect(dx, room.y1, dx + dw, c.y0)
            )
        else:
            lo, hi = max(room.y0, c.y0) + 1, min(room.y1, c.y1) - 1 - dw
            if hi < lo:
                continue
            dy = int(rng.integers(lo, hi + 1))
            door = (
                _Rect(c.x1, dy, room.x0, dy + dw) if wall_side == "E" else _Rect(room.x1, dy, c.x0, dy + dw)
            )
        carve(room)
        carve(door)
        rooms.append(room)
        doors.append((door, c, wall_side))
    if len(rooms) < p.room_count[0]:
        raise SceneError(
            f"room_count: rooms cannot fit (placed {len(rooms)} of minimum {p.room_count[0]})"
        )

    _, ncomp = ndimage.label(~occ)
    if ncomp != 1:
        raise SceneError(f"generation produced {ncomp} disconnected free regions")

    goals = tuple(
        Goal(f"goal_{k}", (r9((r.x0 + r.x1) / 2 * cs), r9((r.y0 + r.y1) / 2 * cs)))
        for k, r in enumerate(rooms)
    )
    signs = _place_signs(occ, corridors, doors, cs)
    scene = SceneMap(occ, cs, tuple(signs), goals, scene_id or f"fp{int(seed)}")
    scene.validate()
    return scene


_DIRS = {"W": (-1, 0), "E": (1, 0), "S": (0, -1), "N": (0, 1)}
_OPP = {"W": "E", "E": "W", "S": "N", "N": "S"}
_NORMAL = {"W": math.pi, "E": 0.0, "S": 1.5 * math.pi, "N": 0.5 * math.pi}


def _side_cells(occ, r: _Rect, side: str):
    n_rows, n_cols = occ.shape
    if side == "W":
        x = r.x0 - 1
        return occ[r.y0:r.y1, x] if x >= 0 else None
    if side == "E":
        return occ[r.y0:r.y1, r.x1] if r.x1 < n_cols else None
    if side == "S":
        y = r.y0 - 1
        return occ[y, r.x0:r.x1] if y >= 0 else None
    return occ[r.y1, r.x0:r.x1] if r.y1 < n_rows else None


def _wall_point(r: _Rect, side: str, cs: float) -> tuple[float, float]:
    cx = (r.x0 + r.x1) / 2 * cs
    cy = (r.y0 + r.y1) / 2 * cs
    return {
        "W": (r.x0 * cs, cy),
        "E": (r.x1 * cs, cy),
        "S": (cx, r.y0 * cs),
        "N": (cx, r.y1 * cs),
    }[side]


def _place_signs(occ, corridors, doors, cs) -> list[Sign]:
    """Signs at junctions/corners on walls facing each arriving arm, plus at doors."""
    placed: dict[tuple, Sign] = {}

    def add(pos, side_arm):
        key = (round(pos[0], 6), round(pos[1], 6))
        if key in placed:
            return
        placed[key] = Sign(
            sign_id=f"sign_{len(placed)}",
            position=(r9(pos[0]), r9(pos[1])),
            normal=r9(_NORMAL[side_arm]),
        )

    horiz = [c for c in corridors if c.horizontal]
    vert = [c for c in corridors if not c.horizontal]
    for h in horiz:
        for v in vert:
            j = h.overlap(v)
            if j is None:
                continue
            sides = {s: _side_cells(occ, j, s) for s in _DIRS}
            arms = [s for s, cells in sides.items() if cells is not None and not cells.any()]
            perpendicular = any(a in "WE" for a in arms) and any(a in "NS" for a in arms)
            if len(arms) < 2 or not perpendicular:
                continue
            for arm in arms:
                opp = sides[_OPP[arm]]
                if opp is not None and opp.all():
                    add(_wall_point(j, _OPP[arm], cs), arm)
    for door, c, wall_side in doors:
        # the corridor wall across from the door, facing the door
        across = _OPP[wall_side]
        if wall_side in "NS":
            r = _Rect(door.x0, c.y0, door.x1, c.y1)
        else:
            r = _Rect(c.x0, door.y0, c.x1, door.y1)
        cells = _side_cells(occ, r, across)
        if cells is not None and cells.all():
            add(_wall_point(r, across, cs), wall_side)
    return list(placed.values())
