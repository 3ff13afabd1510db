"""SR / nDTW / SDTW / RMSE and the evaluation harness."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .episodes import Episode, SmoothPath
from .scene import Pose, SceneMap
from .sim import Outcome, SignNavEnv, run_policy

REFERENCE_SPACING = 0.25
COLUMNS = ("SR", "NDTW", "SDTW", "RMSE", "steps")


def dtw(r, q) -> float:
    """Classic DTW with Euclidean point cost, boundary matched."""
    r = np.asarray(r, dtype=np.float64).reshape(-1, 2)
    q = np.asarray(q, dtype=np.float64).reshape(-1, 2)
    if len(r) == 0 or len(q) == 0:
        raise ValueError("trajectories must be non-empty")
    cost = np.hypot(r[:, None, 0] - q[None, :, 0], r[:, None, 1] - q[None, :, 1])
    n, m = cost.shape
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        ci = cost[i - 1]
        prev = D[i - 1]
        row = D[i]
        for j in range(1, m + 1):
            best = min(prev[j - 1], prev[j], row[j - 1])
            row[j] = best + ci[j - 1]
    return float(D[n, m])


def ndtw(r, q, d_th: float = 1.0) -> float:
    if d_th <= 0:
        raise ValueError("d_th must be positive")
    n = len(np.asarray(r).reshape(-1, 2))
    return math.exp(-dtw(r, q) / (n * d_th))


def sdtw(success: int, ndtw_value: float) -> float:
    return float(ndtw_value) if success else 0.0


def rmse(agent, gt_path) -> float:
    """Root mean square of each agent point's distance to the nearest path point."""
    a = np.asarray(agent, dtype=np.float64).reshape(-1, 2)
    g = gt_path.points if isinstance(gt_path, SmoothPath) else np.asarray(gt_path, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(g) == 0:
        raise ValueError("trajectories must be non-empty")
    d2 = (a[:, None, 0] - g[None, :, 0]) ** 2 + (a[:, None, 1] - g[None, :, 1]) ** 2
    return math.sqrt(float(d2.min(axis=1).mean()))


def resample_polyline(points, spacing: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    if s[-1] == 0.0:
        return pts[:1].copy()
    n = max(1, int(round(s[-1] / spacing)))
    q = np.linspace(0.0, s[-1], n + 1)
    return np.stack([np.interp(q, s, pts[:, 0]), np.interp(q, s, pts[:, 1])], axis=1)


def agent_trajectory(poses) -> np.ndarray:
    """Visited positions with in-place turns collapsed."""
    pts = [(poses[0].x, poses[0].y)]
    for p in poses[1:]:
        if (p.x, p.y) != pts[-1]:
            pts.append((p.x, p.y))
    return np.array(pts)


@dataclass
class EpisodeResult:
    episode_id: str
    success: int
    ndtw: float
    sdtw: float
    rmse: float
    steps: int
    trajectory: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "SR": self.success,
            "NDTW": self.ndtw,
            "SDTW": self.sdtw,
            "RMSE": self.rmse,
            "steps": self.steps,
        }


@dataclass
class EvalReport:
    episodes: list
    policy: str = ""
    split: str = ""
    oracle_assisted: bool = False

    @property
    def aggregates(self) -> dict:
        if not self.episodes:
            return {c: 0.0 for c in COLUMNS}
        n = len(self.episodes)
        return {
            "SR": sum(e.success for e in self.episodes) / n,
            "NDTW": sum(e.ndtw for e in self.episodes) / n,
            "SDTW": sum(e.sdtw for e in self.episodes) / n,
            "RMSE": sum(e.rmse for e in self.episodes) / n,
            "steps": sum(e.steps for e in self.episodes) / n,
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "policy": self.policy,
                "split": self.split,
                "oracle_assisted": self.oracle_assisted,
                "columns": list(COLUMNS),
                "aggregates": self.aggregates,
                "episodes": [e.row() for e in self.episodes],
            },
            indent=1,
        )

    def to_text(self) -> str:
        head = f"{'episode':<16}" + "".join(f"{c:>9}" for c in COLUMNS)
        lines = [f"# policy={self.policy} split={self.split}" + (" (oracle-assisted stop)" if self.oracle_assisted else ""), head]
        for e in self.episodes:
            lines.append(
                f"{e.episode_id:<16}{e.success:>9d}{e.ndtw:>9.4f}{e.sdtw:>9.4f}{e.rmse:>9.4f}{e.steps:>9d}"
            )
        a = self.aggregates
        lines.append(
            f"{'mean':<16}{a['SR']:>9.2f}{a['NDTW']:>9.4f}{a['SDTW']:>9.4f}{a['RMSE']:>9.4f}{a['steps']:>9.1f}"
        )
        return "\n".join(lines) + "\n"


def score_episode(episode: Episode, poses: list[Pose], outcome: Outcome, d_th: float = 1.0) -> EpisodeResult:
    traj = agent_trajectory(poses)
    ref = resample_polyline(episode.gt_path.points, REFERENCE_SPACING)
    success = int(outcome == Outcome.SUCCESS)
    nd = ndtw(ref, traj, d_th)
    return EpisodeResult(
        episode_id=episode.episode_id,
        success=success,
        ndtw=nd,
        sdtw=sdtw(success, nd),
        rmse=rmse(traj, episode.gt_path),
        steps=len(poses) - 1,
        trajectory=traj,
    )


def evaluate(policy_factory, episodes, scenes: dict[str, SceneMap], env: SignNavEnv | None = None,
             max_steps: int = 500, name: str = "", split: str = "") -> EvalReport:
    """Roll ``policy_factory(scene, episode)`` on every episode and score it.

    ``scenes`` maps scene_id to the raw scene; each episode runs in its own
    arrow-annotated copy.
    """
    env = env or SignNavEnv()
    results = []
    assisted = False
    for ep in episodes:
        if ep.scene_id not in scenes:
            raise KeyError(f"scene {ep.scene_id!r} for episode {ep.episode_id!r} not loaded")
        scene = ep.annotated_scene(scenes[ep.scene_id])
        policy = policy_factory(scene, ep)
        assisted = assisted or bool(getattr(policy, "oracle_assisted", False))
        ro = run_policy(env, policy, scene, ep.goal_id, ep.start, max_steps)
        results.append(score_episode(ep, ro.poses, ro.outcome))
    return EvalReport(results, policy=name, split=split, oracle_assisted=assisted)


def trajectory_svg(scene: SceneMap, episode: Episode, agent_xy, scale: float = 20.0) -> str:
    """Overlay of occupancy, ground-truth path, agent path and signs."""
    W, H = scene.size_m
    cs = scene.cell_size

    def tx(x):
        return f"{x * scale:.2f}"

    def ty(y):
        return f"{(H - y) * scale:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W * scale:.0f}" height="{H * scale:.0f}" '
        f'viewBox="0 0 {W * scale:.0f} {H * scale:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    occ = scene.occupancy
    for j in range(scene.height):
        row = occ[j]
        i = 0
        while i < scene.width:
            if row[i]:
                k = i
                while k < scene.width and row[k]:
                    k += 1
                parts.append(
                    f'<rect x="{tx(i * cs)}" y="{ty((j + 1) * cs)}" width="{(k - i) * cs * scale:.2f}" '
                    f'height="{cs * scale:.2f}" fill="#555"/>'
                )
                i = k
            else:
                i += 1

    def polyline(pts, color, width):
        coords = " ".join(f"{tx(x)},{ty(y)}" for x, y in pts)
        return f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>'

    parts.append(polyline(episode.gt_path.points, "#2a9d2a", 3))
    parts.append(polyline(np.asarray(agent_xy).reshape(-1, 2), "#d62728", 2))
    for s in scene.signs:
        parts.append(f'<circle cx="{tx(s.position[0])}" cy="{ty(s.position[1])}" r="4" fill="#1f77b4"/>')
    g = scene.goal(episode.goal_id).position
    parts.append(f'<circle cx="{tx(g[0])}" cy="{ty(g[1])}" r="6" fill="none" stroke="#ff7f0e" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
