"""Egocentric 2.5D column raycaster with sign projection and hint crops."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import GLYPHS, ArrowDir, Pose, SceneMap, Sign, line_of_sight

HINT_CROP = 16
SENTINEL_BBOX = (-1, -1, -1, -1)

# uint8 levels so frames can be cached as bytes without changing values
WALL_PALETTE = np.array(
    [
        [178, 76, 64],  # face looking -x
        [64, 140, 178],  # face looking +x
        [96, 170, 90],  # face looking -y
        [204, 170, 64],  # face looking +y
    ],
    dtype=np.float64,
) / 255.0
FLOOR = 64 / 255.0
CEILING = 191 / 255.0


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    image_width: int = 64
    image_height: int = 64
    hfov: float = math.pi / 2
    wall_height: float = 2.5
    eye_height: float = 1.25
    max_depth: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi:
            raise ValueError("hfov must lie in (0, pi)")
        for name in ("image_width", "image_height", "wall_height", "eye_height", "max_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def focal(self) -> float:
        """Vertical focal length in pixels."""
        return self.image_width / (2.0 * math.tan(self.hfov / 2.0))

    def column_angles(self, theta: float) -> np.ndarray:
        c = np.arange(self.image_width, dtype=np.float64)
        return theta + self.hfov * (0.5 - (c + 0.5) / self.image_width)


@dataclass(frozen=True)
class HintQuery:
    goal_id: str
    max_hint_distance: float = 5.0
    max_face_angle: float = math.pi / 3

    def __post_init__(self):
        if not (self.max_hint_distance > 0 and self.max_face_angle > 0):
            raise ValueError("hint thresholds must be positive")


@dataclass(frozen=True)
class Hint:
    crop: np.ndarray  # (16, 16, 3)
    bbox: tuple[int, int, int, int]
    dir: ArrowDir


@dataclass(frozen=True, eq=False)
class Frame:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W, 1) metres
    hint: Hint | None = None


def cast_columns(scene: SceneMap, pose: Pose, cam: CameraModel):
    """Per-column DDA. Returns (perpendicular depth, wall face index, hit mask)."""
    cs = scene.cell_size
    angles = cam.column_angles(pose.theta)
    dx = np.cos(angles)
    dy = np.sin(angles)
    ox, oy = pose.x / cs, pose.y / cs
    mx = np.full(angles.shape, math.floor(ox), dtype=np.int64)
    my = np.full(angles.shape, math.floor(oy), dtype=np.int64)
    with np.errstate(divide="ignore"):
        ddx = np.where(dx == 0.0, np.inf, np.abs(1.0 / dx))
        ddy = np.where(dy == 0.0, np.inf, np.abs(1.0 / dy))
    step_x = np.where(dx < 0, -1, 1)
    step_y = np.where(dy < 0, -1, 1)
    side_x = np.where(dx < 0, (ox - mx) * ddx, (mx + 1.0 - ox) * ddx)
    side_y = np.where(dy < 0, (oy - my) * ddy, (my + 1.0 - oy) * ddy)
    side_x = np.where(np.isnan(side_x), np.inf, side_x)
    side_y = np.where(np.isnan(side_y), np.inf, side_y)

    n = angles.shape[0]
    dist = np.full(n, np.inf)
    face = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    cosr = np.cos(angles - pose.theta)
    limit = cam.max_depth / cs
    occ = scene.occupancy
    h, w = occ.shape
    while active.any():
        idx = np.nonzero(active)[0]
        go_x = side_x[idx] < side_y[idx]
        ix, iy = idx[go_x], idx[~go_x]
        travelled = np.empty(idx.shape)
        travelled[go_x] = side_x[ix]
        travelled[~go_x] = side_y[iy]
        side_x[ix] += ddx[ix]
        mx[ix] += step_x[ix]
        side_y[iy] += ddy[iy]
        my[iy] += step_y[iy]
        out = (mx[idx] < 0) | (mx[idx] >= w) | (my[idx] < 0) | (my[idx] >= h)
        hit = np.zeros(idx.shape, dtype=bool)
        inside = ~out
        hit[inside] = occ[my[idx][inside], mx[idx][inside]]
        hit |= out
        too_far = travelled * cosr[idx] > limit
        done_hit = hit & ~too_far
        hit_idx = idx[done_hit]
        dist[hit_idx] = travelled[done_hit]
        # face orientation: stepping +x hits a face looking -x, etc.
        fx = go_x[done_hit]
        face[hit_idx] = np.where(
            fx,
            np.where(step_x[hit_idx] > 0, 0, 1),
            np.where(step_y[hit_idx] > 0, 2, 3),
        )
        active[idx[hit | too_far]] = False
    perp = dist * cs * cosr
    hit_mask = np.isfinite(perp) & (perp <= cam.max_depth)
    depth = np.where(hit_mask, np.clip(perp, 0.0, cam.max_depth), cam.max_depth)
    return depth, face, hit_mask


def render(scene: SceneMap, pose: Pose, cam: CameraModel | None = None) -> Frame:
    cam = cam or CameraModel()
    if not scene.is_free_point(pose.x, pose.y):
        raise RenderError(f"pose ({pose.x}, {pose.y}) is inside an occupied cell")
    depth_cols, face, hit = cast_columns(scene, pose, cam)
    H, W = cam.image_height, cam.image_width
    rows = np.arange(H, dtype=np.float64)[:, None] + 0.5
    d = np.maximum(depth_cols, 1e-9)[None, :]
    top = H / 2.0 - cam.focal * (cam.wall_height - cam.eye_height) / d
    bottom = H / 2.0 + cam.focal * cam.eye_height / d
    wall = (rows >= top) & (rows < bottom) & hit[None, :]
    rgb = np.empty((H, W, 3))
    rgb[:] = CEILING
    rgb[rows[:, 0] >= H / 2.0] = FLOOR
    colors = WALL_PALETTE[face]  # (W, 3)
    rgb = np.where(wall[:, :, None], colors[None, :, :], rgb)
    depth = np.broadcast_to(depth_cols[None, :, None], (H, W, 1)).copy()
    return Frame(rgb=rgb, depth=depth)


def _sign_corners(sign: Sign, cam: CameraModel) -> np.ndarray:
    nx, ny = sign.normal_vec
    tx, ty = -ny, nx
    half = sign.quad_width / 2.0
    zc = sign.mount_height_frac * cam.wall_height
    px, py = sign.position
    pts = []
    for s in (-half, half):
        for dz in (-half, half):
            pts.append((px + s * tx, py + s * ty, zc + dz))
    return np.array(pts)


def _project_raw(pose: Pose, cam: CameraModel, pts: np.ndarray):
    fx, fy = math.cos(pose.theta), math.sin(pose.theta)
    rx = pts[:, 0] - pose.x
    ry = pts[:, 1] - pose.y
    zc = rx * fx + ry * fy
    xl = -rx * fy + ry * fx
    if (zc <= 1e-6).any():
        return None
    u = cam.image_width * (0.5 - np.arctan2(xl, zc) / cam.hfov)
    v = cam.image_height / 2.0 - cam.focal * (pts[:, 2] - cam.eye_height) / zc
    return u, v


def project_sign(
    scene: SceneMap,
    pose: Pose,
    cam: CameraModel,
    sign: Sign,
    query: HintQuery | None = None,
):
    """Clipped pixel bbox ``(x_min, y_min, x_max, y_max)`` of a visible sign, else None."""
    box = _visible_box(scene, pose, cam, sign, query)
    return None if box is None else box[0]


def _visible_box(scene, pose, cam, sign, query):
    max_dist = query.max_hint_distance if query else 5.0
    max_face = query.max_face_angle if query else math.pi / 3
    sx, sy = sign.position
    vx, vy = pose.x - sx, pose.y - sy
    dist = math.hypot(vx, vy)
    if dist > max_dist or dist == 0.0:
        return None
    fx, fy = math.cos(pose.theta), math.sin(pose.theta)
    zc = -vx * fx - vy * fy
    xl = vx * fy - vy * fx
    if abs(math.atan2(xl, zc)) > cam.hfov / 2.0:
        return None
    nx, ny = sign.normal_vec
    cos_face = (nx * vx + ny * vy) / dist
    if math.acos(max(-1.0, min(1.0, cos_face))) > max_face:
        return None
    eps = 1e-4
    if not line_of_sight(scene, pose.xy, (sx + eps * nx, sy + eps * ny), 0.0):
        return None
    proj = _project_raw(pose, cam, _sign_corners(sign, cam))
    if proj is None:
        return None
    u, v = proj
    raw = (
        int(math.floor(u.min())),
        int(math.floor(v.min())),
        int(math.ceil(u.max())),
        int(math.ceil(v.max())),
    )
    W, H = cam.image_width, cam.image_height
    box = (max(raw[0], 0), max(raw[1], 0), min(raw[2], W), min(raw[3], H))
    if not (box[0] < box[2] and box[1] < box[3]):
        return None
    return box, raw


def find_hint(scene: SceneMap, pose: Pose, cam: CameraModel, query: HintQuery):
    """Nearest visible sign carrying ``query.goal_id``: (sign, bbox, raw_box) or None."""
    if not any(g.goal_id == query.goal_id for g in scene.goals):
        raise RenderError(f"unknown goal_id {query.goal_id!r}")
    best = None
    for sign in scene.signs:
        if query.goal_id not in sign.arrows:
            continue
        boxes = _visible_box(scene, pose, cam, sign, query)
        if boxes is None:
            continue
        d = math.hypot(pose.x - sign.position[0], pose.y - sign.position[1])
        if best is None or d < best[0]:
            best = (d, sign, boxes)
    if best is None:
        return None
    _, sign, (box, raw) = best
    return sign, box, raw


def resample_crop(rgb: np.ndarray, bbox) -> np.ndarray:
    x0, y0, x1, y1 = bbox
    i = np.arange(HINT_CROP)
    rows = y0 + np.floor((i + 0.5) * (y1 - y0) / HINT_CROP).astype(np.int64)
    cols = x0 + np.floor((i + 0.5) * (x1 - x0) / HINT_CROP).astype(np.int64)
    return rgb[np.ix_(rows, cols)].copy()


def render_with_hint(scene: SceneMap, pose: Pose, cam: CameraModel, query: HintQuery) -> Frame:
    found = find_hint(scene, pose, cam, query)
    frame = render(scene, pose, cam)
    if found is None:
        return frame
    sign, box, raw = found
    arrow = sign.arrows[query.goal_id]
    glyph = GLYPHS[arrow]
    x0, y0, x1, y1 = box
    rw, rh = raw[2] - raw[0], raw[3] - raw[1]
    rows = np.arange(y0, y1)
    cols = np.arange(x0, x1)
    gr = np.clip(np.floor((rows - raw[1] + 0.5) * 9 / rh).astype(np.int64), 0, 8)
    gc = np.clip(np.floor((cols - raw[0] + 0.5) * 9 / rw).astype(np.int64), 0, 8)
    ink = glyph[np.ix_(gr, gc)]
    rgb = frame.rgb.copy()
    rgb[y0:y1, x0:x1] = np.where(ink[:, :, None], 0.0, 1.0)
    crop = resample_crop(rgb, box)
    return Frame(rgb=rgb, depth=frame.depth, hint=Hint(crop=crop, bbox=box, dir=arrow))


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    data = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def write_pgm16(path, depth: np.ndarray) -> None:
    """Depth in millimetres as 16-bit big-endian PGM."""
    d = depth[:, :, 0] if depth.ndim == 3 else depth
    h, w = d.shape
    mm = np.clip(np.rint(d * 1000.0), 0, 65535).astype(">u2")
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + mm.tobytes())


def read_pnm(path) -> np.ndarray:
    """Minimal reader for the two formats written above."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    magic, dims, maxval, body = parts
    w, h = (int(v) for v in dims.split())
    if magic == b"P6":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    if magic == b"P5" and int(maxval) > 255:
        return np.frombuffer(body, dtype=">u2").reshape(h, w)
    raise ValueError(f"unsupported pixmap {magic!r}")
