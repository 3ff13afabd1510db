"""Inflection-weighted teacher forcing, Adam, and DAgger aggregation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .episodes import (
    Episode,
    EpisodeError,
    NavGraph,
    PathFollower,
    Step,
    build_scene_graph,
    record_hints,
    shortest_path,
    smooth_path,
    step_bound,
)
from .model import N_ACTIONS, ObsBatch, StartModel, StartPolicy, greedy, pack_frames
from .nn import Param, cross_entropy_weighted
from .render import CameraModel, HintQuery, render_with_hint
from .rng import substream, substream_seed
from .scene import AGENT_RADIUS, Pose, SceneMap, line_of_sight
from .sim import ActionId, SignNavEnv

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
OFF_PLAN = 0.35  # metres from the current plan before the expert replans


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 200
    dagger_iterations: int = 3
    dagger_epochs: int = 5
    dagger_episodes: int = 0  # rollouts per iteration; 0 = one per training episode
    beta0: float = 0.75
    seed: int = 42
    target_accuracy: float = 0.0  # stop a stage early once epoch accuracy reaches this (0 = never)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.lr > 0 and self.batch_size > 0 and self.epochs >= 0):
            raise TrainingError("lr and batch_size must be positive and epochs non-negative")
        if self.dagger_iterations < 0 or self.dagger_epochs < 0 or self.dagger_episodes < 0:
            raise TrainingError("dagger counts must be non-negative")
        if not (0.0 < self.beta0 <= 1.0):
            raise TrainingError(f"beta0 must lie in (0, 1], got {self.beta0}")
        if not (0.0 <= self.target_accuracy <= 1.0):
            raise TrainingError("target_accuracy must lie in [0, 1]")


# -- loss pieces -------------------------------------------------------------------------------


def inflection_mask(actions) -> np.ndarray:
    a = np.asarray([int(x) for x in actions])
    m = np.ones(len(a), dtype=bool)
    m[1:] = a[1:] != a[:-1]
    return m


def inflection_ratio(sequences) -> float:
    """Total inflections over total steps across a dataset."""
    n_inf = sum(int(inflection_mask(s).sum()) for s in sequences)
    n = sum(len(s) for s in sequences)
    if n == 0:
        raise TrainingError("cannot compute the inflection ratio of an empty dataset")
    return n_inf / n


def inflection_weights(actions, rho: float) -> np.ndarray:
    """1/rho at inflection steps (t = 0 or an action change), 1 elsewhere, rescaled to mean 1."""
    if not (0.0 < rho <= 1.0):
        raise TrainingError(f"rho must lie in (0, 1], got {rho}")
    if len(actions) == 0:
        raise TrainingError("empty action sequence")
    raw = np.where(inflection_mask(actions), 1.0 / rho, 1.0)
    return raw * (len(raw) / raw.sum())


def weighted_nll(p_seq, targets, weights, floor: float = PROB_FLOOR) -> float:
    """-sum_t w_t log p_t[a*_t] for explicit distributions, with the log argument floored."""
    p = np.asarray(p_seq, dtype=np.float64).reshape(-1, N_ACTIONS)
    t = np.asarray([int(a) for a in targets])
    w = np.asarray(weights, dtype=np.float64)
    if not (len(p) == len(t) == len(w)):
        raise TrainingError("distributions, targets and weights must have equal length")
    pt = p[np.arange(len(t)), t]
    n_floor = int((pt < floor).sum())
    if n_floor:
        log.warning("%d target probabilities below %g were floored", n_floor, floor)
    return float(-(w * np.log(np.maximum(pt, floor))).sum())


class Adam:
    def __init__(self, params: list[Param], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        """One bias-corrected Adam update from the accumulated grads, then zero them."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def optimizer_step(opt: Adam) -> None:
    opt.step()


# -- observation cache ---------------------------------------------------------------------------


class ObservationCache:
    """Rendered, network-ready observations per episode (keyed by episode id)."""

    def __init__(self, scenes: dict[str, SceneMap], cam: CameraModel | None = None, max_depth: float = 20.0):
        self.scenes = scenes
        self.cam = cam or CameraModel()
        self.max_depth = max_depth
        self._obs: dict[str, ObsBatch] = {}

    def get(self, ep: Episode) -> ObsBatch:
        if ep.episode_id not in self._obs:
            scene = ep.annotated_scene(self.scenes[ep.scene_id])
            q = HintQuery(ep.goal_id)
            frames = [render_with_hint(scene, s.pose, self.cam, q) for s in ep.steps]
            self._obs[ep.episode_id] = pack_frames(frames, self.max_depth)
        return self._obs[ep.episode_id]


def history_actions(ep: Episode) -> np.ndarray:
    """Actions fed to later steps' history: the executed action when recorded, else the label."""
    return np.array([int(s.executed if s.executed is not None else s.action) for s in ep.steps])


def label_actions(ep: Episode) -> np.ndarray:
    return np.array([int(s.action) for s in ep.steps])


def batch_loss(model: StartModel, batch: list[Episode], cache: ObservationCache, rho: float):
    """Eq.-13 loss averaged over the batch's sequences, plus (weighted nll sum, correct, steps)."""
    obs = ObsBatch.concat([cache.get(ep) for ep in batch])
    hist = np.concatenate([history_actions(ep) for ep in batch])
    labels = np.concatenate([label_actions(ep) for ep in batch])
    weights = np.concatenate([inflection_weights(label_actions(ep), rho) for ep in batch])
    logits = model.sequence_logits(obs, hist, [len(ep.steps) for ep in batch])
    loss = cross_entropy_weighted(logits, labels, weights, PROB_FLOOR) * (1.0 / len(batch))
    lg = logits.data
    pred = np.array([greedy(row) for row in lg])
    return loss, float(loss.data) * len(batch), int((pred == labels).sum()), len(labels)


@dataclass
class LogRecord:
    stage: str
    epoch: int
    iteration: int
    loss: float
    accuracy: float
    dataset_size: int
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def train_teacher_forcing(
    model: StartModel,
    dataset: list[Episode],
    cache: ObservationCache,
    cfg: TrainConfig,
    epochs: int | None = None,
    stage: str = "tf",
    iteration: int = 0,
    opt: Adam | None = None,
    log_fn=None,
) -> list[LogRecord]:
    """Teacher-forced training; one Adam step per batch of episodes.

    The logged loss is the weighted negative log-likelihood per step (the
    uniform distribution scores ln 4); accuracy is greedy per-step agreement
    with the labels, measured on the forward pass of each batch.
    """
    if not dataset:
        raise TrainingError("empty training set")
    epochs = cfg.epochs if epochs is None else epochs
    opt = opt or Adam(model.parameters(), cfg.lr)
    rho = inflection_ratio([label_actions(ep) for ep in dataset])
    records = []
    t0 = time.perf_counter()
    for epoch in range(epochs):
        rng = substream(cfg.seed, f"shuffle:{stage}:{iteration}", epoch)
        order = rng.permutation(len(dataset))
        total, correct, steps = 0.0, 0, 0
        for b in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[b:b + cfg.batch_size]]
            loss, nll, c, n = batch_loss(model, batch, cache, rho)
            loss.backward()
            opt.step()
            total += nll
            correct += c
            steps += n
        rec = LogRecord(stage, epoch, iteration, total / steps, correct / steps, len(dataset), time.perf_counter() - t0)
        records.append(rec)
        if log_fn is not None:
            log_fn(rec)
        log.info("%s it=%d epoch=%d loss=%.4f acc=%.4f", stage, iteration, epoch, rec.loss, rec.accuracy)
        if cfg.target_accuracy > 0 and rec.accuracy >= cfg.target_accuracy:
            break
    return records


def smoothed(values, window: int = 10) -> np.ndarray:
    """Trailing moving average (valid part only)."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy() if len(v) == 0 else np.array([v.mean()])
    c = np.cumsum(np.concatenate([[0.0], v]))
    return (c[window:] - c[:-window]) / window


# -- DAgger ---------------------------------------------------------------------------------------


class Expert:
    """Oracle labels from arbitrary poses: follow the current plan, replanning when off it."""

    def __init__(self, scene: SceneMap, graph: NavGraph, goal_id: str, path):
        self.scene = scene
        self.graph = graph
        self.goal_id = goal_id
        self.goal = scene.goal(goal_id).position
        self.follower = PathFollower(path, self.goal)
        self.replans = 0

    def _off_plan(self, pose: Pose) -> bool:
        pts = self.follower.path.points
        return float(np.hypot(pts[:, 0] - pose.x, pts[:, 1] - pose.y).min()) > OFF_PLAN

    def replan(self, pose: Pose) -> None:
        g = self.graph
        gv = g.goal_vertices[self.goal_id]
        to_goal = g.distances_from(gv)
        best, best_cost = None, math.inf
        for v, (vx, vy) in enumerate(g.vertices):
            if math.isinf(to_goal[v]):
                continue
            d = math.hypot(vx - pose.x, vy - pose.y)
            cost = d + to_goal[v]
            if cost < best_cost - 1e-12 and line_of_sight(self.scene, (pose.x, pose.y), (vx, vy), AGENT_RADIUS):
                best, best_cost = v, cost
        if best is None:
            raise EpisodeError(f"goal {self.goal_id!r} unreachable from ({pose.x:.3f}, {pose.y:.3f})")
        verts = shortest_path(g, best, gv)
        wps = [(pose.x, pose.y)] + [g.vertices[v] for v in verts]
        if math.dist(wps[0], wps[1]) < 1e-9:
            wps = wps[1:]
        if len(wps) < 2:
            wps = [(pose.x, pose.y), tuple(self.goal)]
        self.follower = PathFollower(smooth_path(self.scene, wps), self.goal)
        self.replans += 1

    def label(self, pose: Pose) -> ActionId:
        if self._off_plan(pose):
            self.replan(pose)
        return self.follower.action(pose)


@dataclass
class AggregatedDataset:
    episodes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def extend(self, new) -> None:
        self.episodes.extend(new)

    def provenance_counts(self) -> dict:
        out: dict[str, int] = {}
        for ep in self.episodes:
            out[ep.provenance] = out.get(ep.provenance, 0) + 1
        return out


@dataclass
class DaggerStats:
    iteration: int
    beta: float
    steps: int = 0
    expert_steps: int = 0
    agree_steps: int = 0
    truncated: int = 0

    @property
    def expert_fraction(self) -> float:
        return self.expert_steps / self.steps if self.steps else 0.0

    @property
    def agreement(self) -> float:
        return self.agree_steps / self.steps if self.steps else 0.0


def dagger_rollout(
    model: StartModel,
    ep: Episode,
    scene: SceneMap,
    graph: NavGraph,
    beta: float,
    rng: np.random.Generator,
    iteration: int,
    env: SignNavEnv | None = None,
    stats: DaggerStats | None = None,
) -> Episode:
    """Mixture rollout: expert action with probability beta, else a model sample; every
    visited state is labeled with the expert action."""
    env = env or SignNavEnv()
    ep_scene = ep.annotated_scene(scene)
    expert = Expert(ep_scene, graph, ep.goal_id, ep.gt_path)
    policy = StartPolicy(model, mode="sample", rng=rng)
    policy.reset()
    result = env.reset(ep_scene, ep.goal_id, ep.start, max_steps=step_bound(ep.gt_path))
    steps: list[Step] = []
    while not result.state.done:
        pose = result.state.pose
        try:
            label = expert.label(pose)
        except EpisodeError:
            if stats is not None:
                stats.truncated += 1
            break
        use_expert = bool(rng.random() < beta)
        if use_expert:
            executed = policy.step(result.frame, forced_action=label).action
        else:
            executed = policy.step(result.frame).action
        steps.append(Step(pose, label, executed=executed, source="expert" if use_expert else "model"))
        if stats is not None:
            stats.steps += 1
            stats.expert_steps += int(use_expert)
            stats.agree_steps += int(executed == label)
        result = env.step(executed)
    hints = record_hints(ep_scene, ep.goal_id, [s.pose for s in steps], env.cam)
    for s, (hd, bb) in zip(steps, hints):
        s.hint_dir, s.bbox = hd, bb
    return Episode(
        f"{ep.episode_id}_dagger{iteration}",
        ep.scene_id,
        ep.goal_id,
        ep.start,
        ep.gt_path,
        steps,
        ep.start_vertex,
        provenance=f"dagger_iter{iteration}",
    )


def scene_graphs(scenes: dict[str, SceneMap], seed: int, graph_params: dict | None = None) -> dict[str, NavGraph]:
    """Same graphs the dataset generator builds for ``seed``."""
    gp = dict(graph_params or {})
    return {sid: build_scene_graph(sc, substream_seed(seed, "graph:" + sid), **gp) for sid, sc in scenes.items()}


def dagger_iterate(
    model: StartModel,
    base: list[Episode],
    aggregate: AggregatedDataset,
    scenes: dict[str, SceneMap],
    graphs: dict[str, NavGraph],
    cache: ObservationCache,
    cfg: TrainConfig,
    iteration: int,
    opt: Adam | None = None,
    log_fn=None,
) -> tuple[DaggerStats, list[LogRecord]]:
    """Roll out the beta-mixture, append relabeled trajectories, retrain on the whole aggregate."""
    beta = cfg.beta0 ** iteration
    stats = DaggerStats(iteration, beta)
    n = cfg.dagger_episodes or len(base)
    pick = substream(cfg.seed, "dagger:pick", iteration).permutation(len(base))
    new = []
    for j in range(n):
        ep = base[int(pick[j % len(base)])]
        rng = substream(cfg.seed, f"dagger:roll:{iteration}", j)
        ro = dagger_rollout(model, ep, scenes[ep.scene_id], graphs[ep.scene_id], beta, rng, iteration, stats=stats)
        if j >= len(base):
            ro.episode_id += f"_{j}"
        if ro.steps:
            new.append(ro)
    if not new:
        raise TrainingError(f"DAgger iteration {iteration} produced no usable rollouts")
    aggregate.extend(new)
    records = train_teacher_forcing(
        model, aggregate.episodes, cache, cfg, epochs=cfg.dagger_epochs, stage="dagger",
        iteration=iteration, opt=opt, log_fn=log_fn,
    )
    return stats, records


def train_two_stage(model, train_eps, scenes, cfg: TrainConfig, graph_seed: int, graph_params=None,
                    cache=None, log_fn=None):
    """Teacher forcing, then cfg.dagger_iterations rounds of DAgger. Returns (records, stats)."""
    cache = cache or ObservationCache(scenes, max_depth=model.config.max_depth)
    opt = Adam(model.parameters(), cfg.lr)
    records = train_teacher_forcing(model, train_eps, cache, cfg, opt=opt, log_fn=log_fn)
    graphs = scene_graphs(scenes, graph_seed, graph_params)
    agg = AggregatedDataset(list(train_eps))
    stats = []
    for i in range(1, cfg.dagger_iterations + 1):
        st, rec = dagger_iterate(model, train_eps, agg, scenes, graphs, cache, cfg, i, opt, log_fn)
        stats.append(st)
        records += rec
    return records, stats, agg
