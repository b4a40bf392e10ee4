"""Policy evaluation and the localisation-error sweep.

Two controllers share the same seeded episodes:

* ``LearnedPolicy`` acts greedily on rendered frames and never looks at
  the pose belief.
* ``EntropyPlannerPolicy`` re-plans the best viewpoint from a belief whose
  mean is the true pose plus Gaussian noise of scale sigma (x, y in
  metres, heading in radians), then moves one step toward it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dqn.agent import greedy_action
from .env import HeadControlEnv, goal_distance
from .geometry import Pose2D
from .metrics import EpisodeRecord, episode_record, write_rows
from .seeding import stream, stream_seed

METHODS = ("EntropyPlanner", "LearnedPolicy")


class LearnedPolicy:
    name = "LearnedPolicy"

    def __init__(self, params):
        self.params = params

    def reset(self, env: HeadControlEnv):
        pass

    def act(self, env: HeadControlEnv, obs) -> int:
        return greedy_action(self.params, obs)


class RandomPolicy:
    name = "Random"

    def __init__(self, rng):
        self.rng = rng

    def reset(self, env):
        pass

    def act(self, env, obs):
        return int(self.rng.integers(env.n_actions))


def step_toward(env: HeadControlEnv, goal) -> int:
    """Action whose (clamped) result lands closest to ``goal``; ties to the lowest index."""
    best_a, best_d = 0, math.inf
    for a in range(env.n_actions):
        d = goal_distance(env.next_camera(a), goal)
        if d < best_d:
            best_a, best_d = a, d
    return best_a


class EntropyPlannerPolicy:
    """Greedy head control toward the plan of a corrupted belief."""

    name = "EntropyPlanner"

    def __init__(self, sigma: float, rng, replan: str = "every_step"):
        if replan not in ("every_step", "once"):
            raise ValueError(f"unknown replan mode {replan!r}")
        self.sigma = sigma
        self.rng = rng
        self.replan = replan
        self.goal = None

    def corrupted_pose(self, env: HeadControlEnv) -> Pose2D:
        true = env.state.robot
        dx, dy, dth = self.rng.normal(0.0, 1.0, 3) * self.sigma
        return Pose2D(true.x + dx, true.y + dy, true.theta + dth)

    def plan(self, env: HeadControlEnv):
        belief = env.initial_belief(self.corrupted_pose(env))
        return env.plan_for(belief, env.state.ball).best

    def reset(self, env: HeadControlEnv):
        self.goal = self.plan(env) if self.replan == "once" else None

    def act(self, env: HeadControlEnv, obs) -> int:
        goal = self.plan(env) if self.replan == "every_step" else self.goal
        return step_toward(env, goal)


class OraclePolicy:
    """Greedy moves toward the true goal; an upper reference for the task."""

    name = "Oracle"

    def reset(self, env):
        pass

    def act(self, env, obs):
        return step_toward(env, env.state.goal)


def episode_seed(seed, i):
    return stream_seed(seed, "eval", i)


def run_episode(env: HeadControlEnv, policy, reset_seed, episode=0, step_offset=0, log=None) -> EpisodeRecord:
    obs = env.reset(seed=reset_seed)
    policy.reset(env)
    total = 0.0
    while True:
        a = policy.act(env, obs)
        res = env.step(a)
        total += res.reward
        if log is not None:
            s = env.state
            log.append((episode, s.t, a, res.reward, s.cam.pan, s.cam.tilt, s.goal.pan, s.goal.tilt,
                        res.outcome.value))
        obs = res.observation
        if res.done:
            return episode_record(env, episode, step_offset + env.state.t - 1, total)


def evaluate(env: HeadControlEnv, policy, n_episodes: int, seed: int, log=None) -> list[EpisodeRecord]:
    """``n_episodes`` episodes whose start states depend only on (seed, episode index)."""
    records, offset = [], 0
    for i in range(n_episodes):
        rec = run_episode(env, policy, episode_seed(seed, i), i, offset, log)
        offset = rec.terminal_step + 1
        records.append(rec)
    return records


EPISODE_LOG_HEADER = ("episode", "t", "action", "reward", "pan", "tilt", "goal_pan", "goal_tilt", "outcome")


@dataclass(frozen=True)
class CurvePoint:
    sigma: float
    method: str
    mean_success_rate: float
    n: int
    stderr: float


@dataclass(frozen=True)
class RobustnessCurve:
    points: tuple[CurvePoint, ...]
    success: dict  # (sigma, method) -> per-episode success rates

    @property
    def error_levels(self):
        return sorted({p.sigma for p in self.points})

    def values(self, method):
        return [p.mean_success_rate for p in self.points if p.method == method]

    def point(self, sigma, method) -> CurvePoint:
        for p in self.points:
            if p.sigma == sigma and p.method == method:
                return p
        raise KeyError((sigma, method))

    def write_csv(self, path):
        return write_rows(path, ("sigma", "method", "mean_success_rate", "n", "stderr"),
                          ((p.sigma, p.method, p.mean_success_rate, p.n, p.stderr) for p in self.points))

    def to_json(self):
        return {
            "error_levels": self.error_levels,
            "methods": {m: {"mean_success_rate": self.values(m),
                            "stderr": [p.stderr for p in self.points if p.method == m]}
                        for m in METHODS if any(p.method == m for p in self.points)},
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return Path(path)


def _point(sigma, method, rates):
    rates = np.asarray(rates, dtype=float)
    n = len(rates)
    se = float(rates.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CurvePoint(float(sigma), method, float(rates.mean()), n, se)


def run_robustness(env: HeadControlEnv, params, sigmas, episodes: int, seed: int,
                   replan: str = "every_step", progress=None) -> RobustnessCurve:
    """Mean success rate per (sigma, method) on shared seeded episodes.

    ``params`` are the learned policy's network weights; pass None to run
    the planner arm alone.
    """
    points, success = [], {}
    for li, sigma in enumerate(sigmas):
        arms = [EntropyPlannerPolicy(sigma, stream(seed, "noise", li), replan)]
        if params is not None:
            arms.append(LearnedPolicy(params))
        for policy in arms:
            recs = evaluate(env, policy, episodes, seed)
            rates = [r.success_rate for r in recs]
            success[(float(sigma), policy.name)] = rates
            points.append(_point(sigma, policy.name, rates))
            if progress is not None:
                progress(points[-1])
    return RobustnessCurve(tuple(points), success)
