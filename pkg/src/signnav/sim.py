"""Deterministic agent dynamics, the navigation environment and the reactive baseline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .render import CameraModel, Frame, HintQuery, render, render_with_hint
from .scene import AGENT_RADIUS, ArrowDir, Pose, SceneMap, line_of_sight, point_clearance

FORWARD_STEP = 0.25
TURN_ANGLE = math.pi / 12
SUCCESS_RADIUS = 1.0


class ActionId(enum.IntEnum):
    FORWARD = 0
    LEFT = 1
    RIGHT = 2
    STOP = 3


class Outcome(str, enum.Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    STOP_FAILURE = "StopFailure"
    TIMEOUT = "Timeout"


class EnvError(RuntimeError):
    pass


def is_pose_free(scene: SceneMap, x: float, y: float) -> bool:
    return scene.is_free_point(x, y) and point_clearance(scene, (x, y)) >= AGENT_RADIUS - 1e-9


def apply_action(scene: SceneMap, pose: Pose, action: ActionId) -> Pose:
    """Successor pose. Forward is blocked (pose unchanged) if the swept disk hits a wall."""
    if action == ActionId.FORWARD:
        nx = pose.x + FORWARD_STEP * math.cos(pose.theta)
        ny = pose.y + FORWARD_STEP * math.sin(pose.theta)
        if line_of_sight(scene, (pose.x, pose.y), (nx, ny), AGENT_RADIUS):
            return Pose(nx, ny, pose.theta)
        return pose
    if action == ActionId.LEFT:
        return Pose(pose.x, pose.y, pose.theta + TURN_ANGLE)
    if action == ActionId.RIGHT:
        return Pose(pose.x, pose.y, pose.theta - TURN_ANGLE)
    return pose


@dataclass
class EnvState:
    scene: SceneMap
    goal_id: str
    pose: Pose
    step_count: int = 0
    max_steps: int = 500
    outcome: Outcome = Outcome.RUNNING

    @property
    def done(self) -> bool:
        return self.outcome != Outcome.RUNNING

    def snapshot(self) -> "EnvState":
        return EnvState(self.scene, self.goal_id, self.pose, self.step_count, self.max_steps, self.outcome)


class StepResult:
    """Post-action state; the frame is rendered lazily on first access."""

    def __init__(self, state: EnvState, cam: CameraModel, query: HintQuery):
        self.state = state
        self._cam = cam
        self._query = query
        self._frame: Frame | None = None

    @property
    def frame(self) -> Frame:
        if self._frame is None:
            self._frame = render_with_hint(self.state.scene, self.state.pose, self._cam, self._query)
        return self._frame


class SignNavEnv:
    def __init__(self, cam: CameraModel | None = None, query: HintQuery | None = None):
        self.cam = cam or CameraModel()
        self._query_template = query
        self.state: EnvState | None = None

    def _query(self, goal_id: str) -> HintQuery:
        q = self._query_template
        if q is None:
            return HintQuery(goal_id)
        return HintQuery(goal_id, q.max_hint_distance, q.max_face_angle)

    def reset(self, scene: SceneMap, goal_id: str, start: Pose, max_steps: int = 500) -> StepResult:
        scene.goal(goal_id)
        if not is_pose_free(scene, start.x, start.y):
            raise EnvError(f"start pose ({start.x}, {start.y}) collides with the scene")
        self.state = EnvState(scene, goal_id, start, 0, max_steps)
        return StepResult(self.state.snapshot(), self.cam, self._query(goal_id))

    def step(self, action: ActionId) -> StepResult:
        st = self.state
        if st is None or st.done:
            raise EnvError("step() called on a finished or unreset environment")
        action = ActionId(action)
        st.pose = apply_action(st.scene, st.pose, action)
        st.step_count += 1
        if action == ActionId.STOP:
            gx, gy = st.scene.goal(st.goal_id).position
            d = math.hypot(st.pose.x - gx, st.pose.y - gy)
            st.outcome = Outcome.SUCCESS if d <= SUCCESS_RADIUS else Outcome.STOP_FAILURE
        elif st.step_count >= st.max_steps:
            st.outcome = Outcome.TIMEOUT
        return StepResult(st.snapshot(), self.cam, self._query(st.goal_id))


@dataclass
class RuleMemory:
    last_dir: ArrowDir | None = None
    steps_since_seen: int = 0


def rule_policy(frame: Frame, memory: RuleMemory, goal_distance: float | None = None) -> ActionId:
    """Reactive baseline. ``goal_distance`` is privileged (oracle-assisted stop)."""
    if goal_distance is not None and goal_distance <= SUCCESS_RADIUS:
        return ActionId.STOP
    W = frame.rgb.shape[1]
    if frame.hint is not None:
        memory.last_dir = frame.hint.dir
        memory.steps_since_seen = 0
        if frame.hint.dir == ArrowDir.STRAIGHT:
            return ActionId.FORWARD
        x0, _, x1, _ = frame.hint.bbox
        center = 0.5 * (x0 + x1)
        if W / 3.0 <= center <= 2.0 * W / 3.0:
            return ActionId.LEFT if frame.hint.dir == ArrowDir.LEFT else ActionId.RIGHT
        return ActionId.FORWARD
    memory.steps_since_seen += 1
    depth = frame.depth[:, :, 0]
    mid = W // 2
    center_depth = float(depth[depth.shape[0] // 2, mid])
    if center_depth > SUCCESS_RADIUS:
        return ActionId.FORWARD
    left = float(depth[:, :mid].mean())
    right = float(depth[:, mid:].mean())
    return ActionId.LEFT if left >= right else ActionId.RIGHT


class RulePolicy:
    oracle_assisted = True
    needs_frame = True

    def __init__(self, scene: SceneMap, goal_id: str):
        self.goal = scene.goal(goal_id).position
        self.memory = RuleMemory()

    def reset(self) -> None:
        self.memory = RuleMemory()

    def act(self, result: StepResult) -> ActionId:
        p = result.state.pose
        d = math.hypot(p.x - self.goal[0], p.y - self.goal[1])
        return rule_policy(result.frame, self.memory, goal_distance=d)


class StopPolicy:
    """Stops immediately; a lower bound for every metric."""

    needs_frame = False

    def reset(self) -> None:
        pass

    def act(self, result: StepResult) -> ActionId:
        return ActionId.STOP


@dataclass
class Rollout:
    poses: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    outcome: Outcome = Outcome.RUNNING


def run_policy(env: SignNavEnv, policy, scene: SceneMap, goal_id: str, start: Pose, max_steps: int = 500) -> Rollout:
    result = env.reset(scene, goal_id, start, max_steps)
    policy.reset()
    out = Rollout(poses=[result.state.pose])
    while not result.state.done:
        a = ActionId(policy.act(result))
        out.actions.append(a)
        result = env.step(a)
        out.poses.append(result.state.pose)
    out.outcome = result.state.outcome
    return out


def random_actions(rng: np.random.Generator, n: int) -> list[ActionId]:
    return [ActionId(int(a)) for a in rng.integers(0, 3, size=n)]
