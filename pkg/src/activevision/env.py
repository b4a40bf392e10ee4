"""Episodic head-control environment.

Each episode drops the robot, the ball and the head at random, asks the
planner for the best viewpoint from the true pose, and then lets an agent
nudge the head in fixed steps until it reaches that viewpoint, loses the
ball, or runs out of time.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from .belief import GaussianBelief, RangeBearingNoise, UkfParams
from .camera import (PAN_LIMITS, TILT_LIMITS, CameraIntrinsics, CameraPosition, VisibilityThresholds,
                     ball_visible, render, visible_mask)
from .errors import ConfigurationError, ResetError, UsageError
from .field import FieldModel, build_field
from .geometry import Pose2D
from .planner import PlanResult, ViewpointGrid, best_viewpoint

# keeps clamped joints strictly inside the open joint-limit intervals
JOINT_MARGIN = 1e-6


class Action(enum.IntEnum):
    PanPlus = 0
    PanMinus = 1
    TiltPlus = 2
    TiltMinus = 3


class DiagonalAction(enum.IntEnum):
    PanPlusTiltPlus = 4
    PanPlusTiltMinus = 5
    PanMinusTiltPlus = 6
    PanMinusTiltMinus = 7


_DIRECTIONS = {
    0: (1, 0), 1: (-1, 0), 2: (0, 1), 3: (0, -1),
    4: (1, 1), 5: (1, -1), 6: (-1, 1), 7: (-1, -1),
}

ACTION_NAMES = [a.name for a in Action] + [a.name for a in DiagonalAction]


class Outcome(enum.Enum):
    Running = "Running"
    Success = "Success"
    BallLost = "BallLost"
    Timeout = "Timeout"


@dataclass(frozen=True)
class EnvConfig:
    step_size: float = math.pi / 60
    success_tolerance: float | None = None  # defaults to step_size
    stack: int = 1
    diagonal_actions: bool = False
    max_steps: int = 20
    initial_sigma_xy: float = 0.1
    initial_sigma_theta: float = 0.1
    ball_margin: float = 2.0
    render_noise: float = 0.0
    max_reset_attempts: int = 1000

    @property
    def tolerance(self):
        return self.step_size if self.success_tolerance is None else self.success_tolerance

    def validate(self):
        if not self.step_size > 0:
            raise ConfigurationError("step_size", "must be > 0")
        if not self.tolerance > 0:
            raise ConfigurationError("success_tolerance", "must be > 0")
        if self.stack < 1:
            raise ConfigurationError("stack", "must be >= 1")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps", "must be >= 1")
        if not (self.initial_sigma_xy > 0 and self.initial_sigma_theta > 0):
            raise ConfigurationError("initial_sigma_xy", "initial belief sigmas must be > 0")
        if self.max_reset_attempts < 1:
            raise ConfigurationError("max_reset_attempts", "must be >= 1")


def action_count(cfg: EnvConfig | None = None) -> int:
    cfg = EnvConfig() if cfg is None else cfg
    return 8 if cfg.diagonal_actions else 4


def goal_distance(cam: CameraPosition, goal: CameraPosition) -> float:
    """Euclidean distance in (pan, tilt) joint space, radians."""
    return math.hypot(cam.pan - goal.pan, cam.tilt - goal.tilt)


def clamp_camera(pan, tilt) -> CameraPosition:
    pan = min(max(pan, PAN_LIMITS[0] + JOINT_MARGIN), PAN_LIMITS[1] - JOINT_MARGIN)
    tilt = min(max(tilt, TILT_LIMITS[0] + JOINT_MARGIN), TILT_LIMITS[1] - JOINT_MARGIN)
    return CameraPosition(pan, tilt)


@dataclass(frozen=True)
class EnvState:
    robot: Pose2D
    ball: tuple[float, float]
    cam: CameraPosition
    goal: CameraPosition
    t: int
    frame_stack: tuple[np.ndarray, ...] = dc_field(repr=False, compare=False)
    rng_seed: int | None = None


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray  # (stack, H, W) uint8, oldest frame first
    reward: float
    done: bool
    outcome: Outcome
    info: dict


class HeadControlEnv:
    def __init__(self, field: FieldModel | None = None, intr: CameraIntrinsics | None = None,
                 thr: VisibilityThresholds | None = None, grid: ViewpointGrid | None = None,
                 ukf_params: UkfParams | None = None, noise: RangeBearingNoise | None = None,
                 cfg: EnvConfig | None = None, seed=None):
        self.field = build_field() if field is None else field
        self.intr = CameraIntrinsics() if intr is None else intr
        self.thr = VisibilityThresholds() if thr is None else thr
        self.grid = ViewpointGrid() if grid is None else grid
        self.ukf_params = UkfParams() if ukf_params is None else ukf_params
        self.noise = RangeBearingNoise() if noise is None else noise
        self.cfg = EnvConfig() if cfg is None else cfg
        self.cfg.validate()
        self.rng = np.random.default_rng(seed)
        self.n_actions = action_count(self.cfg)
        self.state: EnvState | None = None
        self.plan: PlanResult | None = None
        self.done = True
        self.outcome = Outcome.Running
        self.reset_rejections = 0
        self._frames: deque = deque(maxlen=self.cfg.stack)
        self._seen_mask = None

    # -- helpers --------------------------------------------------------
    def plan_for(self, belief: GaussianBelief, ball) -> PlanResult:
        return best_viewpoint(belief, ball, self.field, self.grid, self.thr, self.intr,
                              self.ukf_params, self.noise, self.cfg.ball_margin)

    def initial_belief(self, pose: Pose2D) -> GaussianBelief:
        return GaussianBelief.around(pose, self.cfg.initial_sigma_xy, self.cfg.initial_sigma_theta)

    def ball_in_view(self, cam: CameraPosition, robot: Pose2D | None = None, ball=None) -> bool:
        robot = robot or self.state.robot
        ball = self.state.ball if ball is None else ball
        return ball_visible(robot, cam, self.intr, ball, self.field.ball_radius, self.cfg.ball_margin)

    def _frame(self, robot, cam, ball):
        seed = int(self.rng.integers(2 ** 63))
        return render(robot, cam, self.intr, self.field, ball, self.cfg.render_noise, seed).pixels

    def next_camera(self, action, cam: CameraPosition | None = None) -> CameraPosition:
        """Head position after ``action``, clamped to the joint limits."""
        cam = cam or self.state.cam
        dpan, dtilt = _DIRECTIONS[int(action)]
        return clamp_camera(cam.pan + dpan * self.cfg.step_size, cam.tilt + dtilt * self.cfg.step_size)

    def observation(self) -> np.ndarray:
        return np.stack(self._frames)

    def visible_ids(self, cam: CameraPosition | None = None) -> frozenset[int]:
        cam = cam or self.state.cam
        mask = visible_mask(self.state.robot, cam, self.intr, self.field, self.thr)
        return frozenset(self.field.landmarks[i].id for i in np.flatnonzero(mask))

    def desired_ids(self) -> frozenset[int]:
        return self.visible_ids(self.state.goal)

    def cumulative_ids(self) -> frozenset[int]:
        return frozenset(self.field.landmarks[i].id for i in np.flatnonzero(self._seen_mask))

    def _mark_seen(self):
        self._seen_mask |= visible_mask(self.state.robot, self.state.cam, self.intr, self.field, self.thr)

    # -- episode API ----------------------------------------------------
    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        d = self.field.dims
        hx, hy = d.length / 2, d.width / 2
        for attempt in range(self.cfg.max_reset_attempts):
            robot = Pose2D(self.rng.uniform(-hx, hx), self.rng.uniform(-hy, hy),
                           self.rng.uniform(-math.pi, math.pi))
            ball = (float(self.rng.uniform(-hx, hx)), float(self.rng.uniform(-hy, hy)))
            cam = CameraPosition(self.rng.uniform(*PAN_LIMITS), self.rng.uniform(*TILT_LIMITS))
            if not self.ball_in_view(cam, robot, ball):
                continue
            plan = self.plan_for(self.initial_belief(robot), ball)
            if plan.fallback:
                continue
            self.reset_rejections = attempt
            break
        else:
            raise ResetError(f"no admissible start after {self.cfg.max_reset_attempts} attempts; "
                             "check visibility/camera configuration")
        self.plan = plan
        self._frames.clear()
        first = self._frame(robot, cam, ball)
        for _ in range(self.cfg.stack):
            self._frames.append(first)
        self.state = EnvState(robot, ball, cam, plan.best, 0, tuple(self._frames), seed)
        self._seen_mask = np.zeros(len(self.field), dtype=bool)
        self._mark_seen()
        self.done = False
        self.outcome = Outcome.Running
        return self.observation()

    def step(self, action) -> StepResult:
        if self.state is None or self.done:
            raise UsageError("step() called on a finished episode; call reset() first")
        a = int(action)
        if not 0 <= a < self.n_actions:
            raise UsageError(f"action {a} outside [0, {self.n_actions})")
        s = self.state
        D = goal_distance(s.cam, s.goal)
        cam = self.next_camera(a)
        D2 = goal_distance(cam, s.goal)
        t = s.t + 1
        seen = self.ball_in_view(cam)
        tol = self.cfg.tolerance
        if not seen:
            reward, outcome = -2.0, Outcome.BallLost
        else:
            reward = float(np.sign(D - D2))
            if abs(cam.pan - s.goal.pan) <= tol and abs(cam.tilt - s.goal.tilt) <= tol:
                outcome = Outcome.Success
            elif t >= self.cfg.max_steps:
                outcome = Outcome.Timeout
            else:
                outcome = Outcome.Running
        self._frames.append(self._frame(s.robot, cam, s.ball))
        self.state = EnvState(s.robot, s.ball, cam, s.goal, t, tuple(self._frames), s.rng_seed)
        self._mark_seen()
        self.outcome = outcome
        self.done = outcome is not Outcome.Running
        return StepResult(self.observation(), reward, self.done, outcome,
                          {"D": D, "D_next": D2, "t": t})
