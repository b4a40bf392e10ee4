"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test records a one-line verdict; the lines are printed together in
the terminal summary. The training run behind criteria 7 and 8 is cached
in the pytest cache under a key derived from the package source and the
run arguments, so an unchanged tree reuses it (``--cache-clear`` retrains).
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import activevision
from activevision.camera import PAN_LIMITS, CameraPosition
from activevision.cli import main
from activevision.dqn.agent import ddqn_target_from_q
from activevision.config import RunConfig
from activevision.env import JOINT_MARGIN, Action, EnvState, HeadControlEnv, Outcome
from activevision.geometry import Pose2D
from activevision.metrics import read_csv_columns, read_records_csv
from activevision.selftest import gradient_check, run_checks
from activevision.dqn.network import Architecture

RESULTS = {}

DESK = ["--set", "image_width=80", "--set", "image_height=60"]
SEED = 0
SIGMAS = "0,0.25,0.5,1.0"
RANDOM_MARGIN = 0.25
TARGET_RATE = 0.60
TRAIN_BUDGET_S = 4 * 3600

# EntropyPlanner mean success at sigma 0, 0.25, 0.5, 1.0 (100 episodes, seed 0),
# frozen after the first verified run of the harness
PLANNER_CURVE_GOLDEN = [0.9540189563618356, 0.8431955508371917, 0.7862651074845347, 0.6782119752023003]


def report(number, title, passed, detail):
    RESULTS[number] = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"


def run(*argv):
    return main([str(a) for a in argv])


def _source_key(*args):
    h = hashlib.sha256()
    root = Path(activevision.__file__).parent
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    h.update(repr(args).encode())
    return h.hexdigest()[:16]


@pytest.fixture(scope="module")
def trained(request):
    """Desk-scale training run (80 x 60 input, default trainer settings)."""
    args = ("train", "--seed", SEED, *DESK)
    out = Path(request.config.cache.mkdir("acceptance")) / _source_key(*args)
    done = out / "train_seconds"
    if not done.is_file():
        t0 = time.perf_counter()
        assert run(*args, "--out", out) == 0
        done.write_text(f"{time.perf_counter() - t0:.1f}\n")
    return out


@pytest.fixture(scope="module")
def random_baseline(trained):
    out = trained / "random_eval"
    if not (out / "eval_summary.json").is_file():
        assert run("eval", "--policy", "random", "--seed", SEED, *DESK, "--out", out) == 0
    return json.loads((out / "eval_summary.json").read_text())["mean_success_rate"]


@pytest.fixture(scope="module")
def robustness(trained):
    out = trained / "robustness"
    if not (out / "robustness.json").is_file():
        assert run("robustness", "--checkpoint", trained / "checkpoint.avqn", "--sigmas", SIGMAS,
                   "--episodes", 100, "--seed", SEED, *DESK, "--out", out) == 0
    return json.loads((out / "robustness.json").read_text())


def test_criterion_1_planner_oracle():
    t0 = time.perf_counter()
    (res,) = run_checks(["planner"], seed=SEED)
    secs = time.perf_counter() - t0
    ok = res.passed and secs < 60 and "100 configurations" in res.detail
    report(1, "planner vs brute force", ok, f"{res.detail}; {secs:.1f}s (limit 60s)")
    assert ok, res.detail


def test_criterion_2_ukf():
    t0 = time.perf_counter()
    lin, mc = run_checks(["ukf_linear", "ukf_monte_carlo"], seed=SEED)
    secs = time.perf_counter() - t0
    ok = lin.passed and mc.passed and secs < 120
    report(2, "UKF correctness", ok, f"linear: {lin.detail}; Monte Carlo: {mc.detail}; {secs:.1f}s (limit 120s)")
    assert lin.passed, lin.detail
    assert mc.passed, mc.detail
    assert secs < 120


def test_criterion_3_entropy():
    (res,) = run_checks(["entropy"], seed=SEED)
    report(3, "entropy identities", res.passed, res.detail)
    assert res.passed, res.detail


def test_criterion_4_targets_and_rewards():
    y = ddqn_target_from_q([-2.0, 1.0, 0.0, -1.0], [True, False, False, False],
                           [[0, 0, 0, 0], [0.1, 0.0, 0.9, 0.2], [1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 0.0, 3.0]],
                           [[5, 5, 5, 5], [9.0, 9.0, 0.5, 9.0], [4.0, -1.0, 7.0, 7.0], [2.0, 2.0, 2.0, 2.0]],
                           0.99)
    want = [-2.0, 1.495, 0.0 + 0.99 * -1.0, -1.0 + 0.99 * 2.0]
    targets_ok = y.tolist() == want

    env = HeadControlEnv(seed=0)
    step = math.pi / 60
    rewards = []

    def place(cam, goal, ball=(1.5, 0.0)):
        env.reset(seed=0)
        env.state = EnvState(Pose2D(0, 0, 0), ball, cam, goal, 0, env.state.frame_stack, None)
        env.done, env.outcome = False, Outcome.Running

    place(CameraPosition(0.0, 0.5), CameraPosition(0.3, 0.5))
    rewards.append(env.step(Action.PanPlus).reward)                # toward the goal
    place(CameraPosition(0.0, 0.5), CameraPosition(0.3, 0.5))
    rewards.append(env.step(Action.PanMinus).reward)               # away from it
    place(CameraPosition(PAN_LIMITS[1] - JOINT_MARGIN, 0.5), CameraPosition(0.3, 0.5), ball=(0.0, 1.2))
    rewards.append(env.step(Action.PanPlus).reward)                # clamped, D' = D
    pan = next(p for p in np.arange(0.0, 1.5, 0.01) if not env.ball_in_view(
        CameraPosition(p + step, 0.5), Pose2D(0, 0, 0), (1.5, 0.0)))
    place(CameraPosition(pan, 0.5), CameraPosition(0.0, 0.5))
    rewards.append(env.step(Action.PanPlus).reward)                # ball leaves the frame
    rewards_ok = rewards == [1.0, -1.0, 0.0, -2.0]

    ok = targets_ok and rewards_ok
    report(4, "DDQN targets and step rewards", ok, f"targets {y.tolist()} (want {want}); rewards {rewards} "
                                                   f"(want [1.0, -1.0, 0.0, -2.0])")
    assert targets_ok
    assert rewards_ok


def test_criterion_5_per_law():
    (res,) = run_checks(["per"], seed=SEED)
    report(5, "PER sampling law", res.passed, res.detail)
    assert res.passed, res.detail


def test_criterion_6_gradients():
    worst = gradient_check(np.random.default_rng(SEED), per_tensor=4, arch=Architecture(60, 80, 1, 4))
    m = max(worst.values())
    ok = m < 1e-4 and len(worst) == 10
    report(6, "gradient check", ok, f"max relative error {m:.1e} over {len(worst)} tensors (limit 1e-4)")
    assert ok, worst


@pytest.mark.slow
def test_criterion_7_desk_training(trained, random_baseline):
    secs = float((trained / "train_seconds").read_text())
    epochs = read_csv_columns(trained / "epochs.csv")
    rates = [float(v) for v in epochs["mean_success_rate"] if v != ""]
    final5 = float(np.mean(rates[-5:]))
    records = read_records_csv(trained / "episodes.csv")
    total = RunConfig().total_steps
    first = [r.ball_loss_duration for r in records if r.terminal_step < total / 4]
    last = [r.ball_loss_duration for r in records if r.terminal_step >= 3 * total / 4]
    q1, q4 = float(np.mean(first)), float(np.mean(last))
    margin_ok = final5 >= random_baseline + RANDOM_MARGIN
    rate_ok = final5 >= TARGET_RATE
    trend_ok = q4 > q1
    time_ok = secs <= TRAIN_BUDGET_S
    ok = margin_ok and rate_ok and trend_ok and time_ok
    report(7, "desk-scale training", ok,
           f"final-5-epoch success {final5:.3f} vs random {random_baseline:.3f} "
           f"(+{final5 - random_baseline:.3f}, need +{RANDOM_MARGIN}; need >= {TARGET_RATE}); "
           f"ball-loss duration Q1 {q1:.2f} -> Q4 {q4:.2f}; trained in {secs / 60:.0f} min")
    assert margin_ok
    assert rate_ok
    assert trend_ok
    assert time_ok


@pytest.mark.slow
def test_criterion_8_robustness(robustness):
    levels = robustness["error_levels"]
    learned = robustness["methods"]["LearnedPolicy"]["mean_success_rate"]
    planner = robustness["methods"]["EntropyPlanner"]
    flat = len(set(learned)) == 1
    i0, i1 = levels.index(0.0), levels.index(1.0)
    m0, s0 = planner["mean_success_rate"][i0], planner["stderr"][i0]
    m1, s1 = planner["mean_success_rate"][i1], planner["stderr"][i1]
    separated = m1 + 2 * s1 < m0 - 2 * s0
    ok = flat and separated
    report(8, "robustness sweep", ok,
           f"learned {[round(v, 4) for v in learned]} (flat={flat}); planner sigma 0: {m0:.3f} +/- {2 * s0:.3f}, "
           f"sigma 1: {m1:.3f} +/- {2 * s1:.3f}")
    assert flat
    assert separated


@pytest.mark.slow
def test_planner_curve_regression(robustness):
    got = robustness["methods"]["EntropyPlanner"]["mean_success_rate"]
    assert got == pytest.approx(PLANNER_CURVE_GOLDEN, abs=1e-12)


def test_criterion_9_determinism(tmp_path):
    short = [*DESK, "--set", "total_steps=400", "--set", "learning_starts=100", "--set", "epoch_steps=100"]
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert run("train", "--seed", 11, *short, "--out", out) == 0
        assert run("eval", "--checkpoint", out / "checkpoint.avqn", "--episodes", 10, "--seed", 11, *short,
                   "--out", out) == 0
        outs.append(out)
    files = ("metrics.csv", "episodes.csv", "epochs.csv", "eval_episodes.csv", "episode_log.csv")
    same = {f: (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files}
    ok = all(same.values())
    report(9, "train/eval determinism", ok, ", ".join(f"{f} {'identical' if v else 'DIFFERS'}"
                                                      for f, v in same.items()))
    assert ok, same
