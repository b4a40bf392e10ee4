import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activevision.belief import GaussianBelief
from activevision.camera import PAN_LIMITS, TILT_LIMITS, CameraPosition, ball_visible
from activevision.dqn.network import Architecture, init_params, q_forward
from activevision.env import (JOINT_MARGIN, Action, EnvConfig, EnvState, HeadControlEnv, Outcome, action_count,
                              goal_distance)
from activevision.errors import ConfigurationError, UsageError
from activevision.geometry import Pose2D
from activevision.planner import best_viewpoint

STEP = math.pi / 60


@pytest.fixture(scope="module")
def env():
    return HeadControlEnv(seed=0)


def _place(env, robot, ball, cam, goal, t=0):
    """Put the environment into a hand-built running state."""
    env.reset(seed=0)
    env.state = EnvState(robot, ball, cam, goal, t, env.state.frame_stack, None)
    env.done, env.outcome = False, Outcome.Running


class TestGoalDistance:
    def test_zero(self):
        c = CameraPosition(0.1, 0.5)
        assert goal_distance(c, c) == 0.0

    def test_one_step(self):
        assert goal_distance(CameraPosition(STEP, 0.5), CameraPosition(0.0, 0.5)) == pytest.approx(math.pi / 60)

    def test_three_four_five(self):
        d = goal_distance(CameraPosition(math.radians(3), 0.5), CameraPosition(0.0, 0.5 + math.radians(4)))
        assert d == pytest.approx(math.radians(5), abs=1e-12)
        assert d == pytest.approx(0.08727, abs=1e-5)


class TestActions:
    def test_counts(self):
        assert action_count() == 4
        assert action_count(EnvConfig(diagonal_actions=True)) == 8
        assert len(Action) == 4

    def test_matches_network_width(self):
        env = HeadControlEnv(cfg=EnvConfig(diagonal_actions=True))
        arch = Architecture(120, 160, 1, env.n_actions)
        q = q_forward(init_params(arch, np.random.default_rng(0)), np.zeros((1, 120, 160), np.uint8))
        assert q.shape == (env.n_actions,)

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            HeadControlEnv(cfg=EnvConfig(step_size=0.0))


class TestReset:
    def test_same_seed_same_state(self, env):
        a = env.reset(seed=42)
        sa = env.state
        b = env.reset(seed=42)
        assert env.state == sa
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("seed", range(5))
    def test_admissible_start(self, env, seed):
        obs = env.reset(seed=seed)
        s = env.state
        assert obs.shape == (1, 120, 160) and obs.dtype == np.uint8
        assert ball_visible(s.robot, s.cam, env.intr, s.ball, env.field.ball_radius)
        plan = best_viewpoint(GaussianBelief.around(s.robot, 0.1, 0.1), s.ball, env.field)
        assert s.goal == plan.best and s.t == 0

    def test_frame_stack(self):
        env = HeadControlEnv(cfg=EnvConfig(stack=3), seed=1)
        obs = env.reset(seed=3)
        assert obs.shape == (3, 120, 160)
        assert np.array_equal(obs[0], obs[2])
        res = env.step(Action.TiltPlus)
        assert np.array_equal(res.observation[:2], obs[1:])


class TestStep:
    def test_toward_goal_rewards_one(self, env):
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(0.0, 0.5), CameraPosition(0.3, 0.5))
        res = env.step(Action.PanPlus)
        assert res.reward == 1.0 and res.outcome is Outcome.Running
        assert env.state.cam.pan == pytest.approx(STEP)

    def test_away_from_goal_penalised(self, env):
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(0.0, 0.5), CameraPosition(0.3, 0.5))
        assert env.step(Action.PanMinus).reward == -1.0

    def test_clamped_boundary_gives_zero(self, env):
        cam = CameraPosition(PAN_LIMITS[1] - JOINT_MARGIN, 0.5)
        ball = (0.0, 1.2)
        assert ball_visible(Pose2D(0, 0, 0), cam, env.intr, ball)
        _place(env, Pose2D(0, 0, 0), ball, cam, CameraPosition(0.0, 0.5))
        res = env.step(Action.PanPlus)
        assert res.info["D"] == res.info["D_next"]
        assert res.reward == 0.0

    def test_losing_ball(self, env):
        env.reset(seed=11)
        while True:
            res = env.step(Action.PanPlus)
            if res.outcome is Outcome.BallLost or res.done:
                break
        if res.outcome is Outcome.BallLost:
            assert res.reward == -2.0 and res.done
        else:
            pytest.skip("ball never left the frame on this seed")

    def test_success_within_one_step(self, env):
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(0.0, 0.5), CameraPosition(STEP * 1.5, 0.5))
        res = env.step(Action.PanPlus)
        assert res.outcome is Outcome.Success and res.done and res.reward == 1.0

    def test_timeout_at_twenty(self, env):
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(0.0, 0.5), CameraPosition(0.4, 0.5), t=19)
        res = env.step(Action.PanMinus)
        assert res.outcome is Outcome.Timeout and res.done and env.state.t == 20

    def test_ball_lost_beats_success(self, env):
        # the goal sits just past the pan where the ball leaves the frame
        pan = next(p for p in np.arange(0.0, 1.5, 0.01)
                   if not ball_visible(Pose2D(0, 0, 0), CameraPosition(p + STEP, 0.5), env.intr, (1.5, 0.0)))
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(pan, 0.5), CameraPosition(pan + STEP, 0.5))
        res = env.step(Action.PanPlus)
        assert res.outcome is Outcome.BallLost and res.reward == -2.0

    def test_step_after_done(self, env):
        _place(env, Pose2D(0, 0, 0), (1.5, 0.0), CameraPosition(0.0, 0.5), CameraPosition(STEP, 0.5))
        env.step(Action.PanPlus)
        with pytest.raises(UsageError):
            env.step(Action.PanPlus)

    def test_bad_action(self, env):
        env.reset(seed=1)
        with pytest.raises(UsageError):
            env.step(4)


class TestEnvProperties:
    @settings(max_examples=15)
    @given(seed=st.integers(0, 2 ** 32 - 1), actions=st.lists(st.integers(0, 3), min_size=25, max_size=25))
    def test_episode_invariants(self, seed, actions):
        env = HeadControlEnv()
        env.reset(seed=seed)
        trace = []
        for a in actions:
            res = env.step(a)
            cam = env.state.cam
            assert res.reward in (-2.0, -1.0, 0.0, 1.0)
            assert PAN_LIMITS[0] < cam.pan < PAN_LIMITS[1] and TILT_LIMITS[0] < cam.tilt < TILT_LIMITS[1]
            assert env.state.t <= 20
            assert res.done == (res.outcome is not Outcome.Running)
            trace.append((res.reward, res.outcome, cam))
            if res.done:
                break
        assert res.done
        if res.outcome is Outcome.Success:
            assert goal_distance(env.state.cam, env.state.goal) <= env.cfg.tolerance * math.sqrt(2) + 1e-12
        with pytest.raises(UsageError):
            env.step(0)
        # same seed and actions replay the same trajectory
        env.reset(seed=seed)
        again = []
        for a in actions[:len(trace)]:
            res = env.step(a)
            again.append((res.reward, res.outcome, env.state.cam))
        assert again == trace
