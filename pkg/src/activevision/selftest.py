"""Oracle-equivalence checks runnable from the command line.

Every check pairs a production routine with its counterpart in
``oracles`` and reports pass/fail with a short diagnostic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracles as O
from .belief import (GaussianBelief, LandmarkObservation, RangeBearingNoise, UkfParams, entropy,
                     expected_observations, ukf_update, unscented_update)
from .camera import (BALL_INTENSITY, PAN_LIMITS, TILT_LIMITS, CameraIntrinsics, CameraPosition,
                     VisibilityThresholds, ball_visible, project, render, visible_mask)
from .dqn.agent import Adam, act_epsilon_greedy, ddqn_target_from_q, greedy_action, loss_and_grads
from .dqn.network import PARAM_ORDER, Architecture, init_params, layer_shapes, q_forward
from .dqn.replay import Experience, PrioritizedBuffer
from .field import Landmark, LandmarkType, build_field
from .geometry import Pose2D
from .env import HeadControlEnv
from .metrics import EpisodeRecord, epoch_aggregate
from .planner import ViewpointGrid, best_viewpoint, enumerate_viewpoints
from .robustness import EPISODE_LOG_HEADER, RandomPolicy, run_episode
from .seeding import stream


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22} {self.detail} ({self.seconds:.1f}s)"


def _intr_tuple(intr):
    return (intr.image_width, intr.image_height, intr.horizontal_fov, intr.mount_height,
            intr.mount_forward_offset)


def _random_pose(rng, field):
    hx, hy = field.dims.length / 2, field.dims.width / 2
    return Pose2D(rng.uniform(-hx, hx), rng.uniform(-hy, hy), rng.uniform(-math.pi, math.pi))


def _random_cam(rng):
    eps = 1e-3
    return CameraPosition(rng.uniform(PAN_LIMITS[0] + eps, PAN_LIMITS[1] - eps),
                          rng.uniform(TILT_LIMITS[0] + eps, TILT_LIMITS[1] - eps))


def random_prior(rng, sigma_xy=(0.02, 0.3), sigma_theta=(0.02, 0.3)):
    """Random pose covariance with per-axis sigmas in the given ranges and random correlation."""
    sig = np.array([rng.uniform(*sigma_xy), rng.uniform(*sigma_xy), rng.uniform(*sigma_theta)])
    A = rng.normal(size=(3, 3))
    C = A @ A.T + 3 * np.eye(3)
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    return C * np.outer(sig, sig)


def random_sighting(rng, field, min_distance=1.0):
    """Random pose and a landmark at least ``min_distance`` away from it."""
    while True:
        pose = _random_pose(rng, field)
        lm = field.landmarks[int(rng.integers(len(field)))]
        d = float(np.hypot(lm.position[0] - pose.x, lm.position[1] - pose.y))
        if d >= min_distance:
            return pose, lm, d


# -- individual checks ---------------------------------------------------

def check_field(rng):
    f = build_field()
    ref = O.enumerate_field(f.dims.length, f.dims.width, f.dims.goal_area_length, f.dims.goal_area_width,
                            f.dims.center_circle_radius, f.dims.line_sample_spacing)
    bad = []
    for k in LandmarkType:
        mine = sorted((round(x, 6) + 0.0, round(y, 6) + 0.0) for x, y in f.positions[f.kinds == int(k)])
        if mine != ref[k.name]:
            bad.append(k.name)
    counts = {k: len(v) for k, v in ref.items()}
    return not bad, f"counts {counts}" + (f"; mismatch in {bad}" if bad else "")


def check_projection(rng, n=500):
    intr = CameraIntrinsics()
    f = build_field()
    worst, disagree = 0.0, 0
    for _ in range(n):
        pose, cam = _random_pose(rng, f), _random_cam(rng)
        P = O.camera_matrix(pose.x, pose.y, pose.theta, cam.pan, cam.tilt, *_intr_tuple(intr))
        pt = (rng.uniform(-5, 5), rng.uniform(-3.5, 3.5))
        a = project(pose, cam, intr, pt)
        b = O.project_homogeneous(P, pt, intr.image_width, intr.image_height)
        if (a is None) != (b is None):
            disagree += 1
        elif a is not None:
            worst = max(worst, abs(a[0] - b[0]), abs(a[1] - b[1]))
    return disagree == 0 and worst < 1e-6, f"{n} points, max |dpx| {worst:.2e}, disagreements {disagree}"


def check_visibility(rng, n=200):
    intr, thr, f = CameraIntrinsics(), VisibilityThresholds(), build_field()
    pos = [tuple(p) for p in f.positions]
    kinds = [int(k) for k in f.kinds]
    bad = 0
    for _ in range(n):
        pose, cam = _random_pose(rng, f), _random_cam(rng)
        mine = list(np.flatnonzero(visible_mask(pose, cam, intr, f, thr)))
        ref = O.visible_ids(pose.as_array(), cam.pan, cam.tilt, pos, kinds, thr.as_array(), _intr_tuple(intr))
        bad += mine != ref
        bel = GaussianBelief.around(pose, 0.1, 0.1)
        obs = expected_observations(bel, cam, f, thr, intr)
        if [o.landmark_id for o in obs] != sorted(f.landmarks[i].id for i in ref):
            bad += 1
            continue
        for o in obs:
            lx, ly = f.by_id(o.landmark_id).position
            d = math.hypot(lx - pose.x, ly - pose.y)
            b = O.wrap(math.atan2(ly - pose.y, lx - pose.x) - pose.theta)
            if abs(o.distance - d) > 1e-12 or abs(O.wrap(o.bearing - b)) > 1e-12:
                bad += 1
                break
    return bad == 0, f"{n} poses, mismatching visible sets or observations {bad}"


def check_ball_sweep(rng):
    """Pan interval keeping a ball in view vs. the closed-form bearing bound."""
    intr = CameraIntrinsics(mount_forward_offset=0.0)
    radius, margin = 0.07, 2.0
    worst = 0.0
    for _ in range(10):
        rho = rng.uniform(1.5, 4.0)
        bearing = rng.uniform(-0.4, 0.4)
        tilt = math.atan2(intr.mount_height - radius, rho)  # ball on the horizontal midline at pan = bearing
        pose = Pose2D(0.0, 0.0, 0.0)
        ball = (rho * math.cos(bearing), rho * math.sin(bearing))
        pans = [math.radians(d) for d in range(-89, 90)]
        vis = [ball_visible(pose, CameraPosition(p, tilt), intr, ball, radius, margin) for p in pans]
        inside = [p for p, v in zip(pans, vis) if v]
        half = O.pan_visibility_boundary(rho, intr.mount_height - radius, tilt,
                                         intr.image_width / 2 - margin, intr.focal)
        lo, hi = bearing - half, bearing + half
        worst = max(worst, abs(min(inside) - lo), abs(max(inside) - hi))
    ok = worst <= math.radians(1.0)
    return ok, f"max endpoint error {math.degrees(worst):.3f} deg (limit 1 step)"


def check_render_disc(rng):
    """Rendered ball width against the pinhole size 2 f r / depth for a ball on the optical axis."""
    intr, f = CameraIntrinsics(), build_field()
    r = f.ball_radius
    level = int(round(BALL_INTENSITY * 255))
    worst = 0.0
    for tilt in np.linspace(0.35, 1.0, 8):
        s = (intr.mount_height - r) / math.sin(tilt)
        x = intr.mount_forward_offset + s * math.cos(tilt)
        img = render(Pose2D(0.0, 0.0, 0.0), CameraPosition(0.0, float(tilt)), intr, f, (x, 0.0)).pixels
        width = int(max(np.count_nonzero(row == level) for row in img))
        worst = max(worst, abs(width - 2 * intr.focal * r / s))
    return worst <= 1.0, f"max |width - analytic diameter| {worst:.2f} px (limit 1)"


def check_ukf_linear(rng, n=50):
    params = UkfParams()
    worst = 0.0
    for _ in range(n):
        A = rng.normal(size=(3, 3))
        P = A @ A.T + 0.1 * np.eye(3)
        mu = rng.normal(size=3) * 0.5
        H = rng.normal(size=(2, 3))
        R = np.diag(rng.uniform(0.01, 0.5, 2))
        z = H @ mu + rng.normal(size=2) * 0.3
        b = unscented_update(GaussianBelief(mu, P), z, lambda s: s @ H.T, R, params,
                             angular_state=(), angular_meas=())
        m_ref, P_ref = O.kalman_update(mu, P, H, R, z)
        worst = max(worst, float(np.abs(b.mean - m_ref).max()), float(np.abs(b.cov - P_ref).max()))
    return worst < 1e-8, f"{n} random linear updates, max deviation {worst:.2e} (limit 1e-8)"


def check_ukf_loop(rng, n=200):
    f = build_field()
    noise = RangeBearingNoise()
    worst = 0.0
    for _ in range(n):
        P = random_prior(rng)
        pose, lm, d = random_sighting(rng, f)
        d += rng.normal() * 0.05
        bearing = float(rng.uniform(-math.pi, math.pi))
        R = noise.covariance(max(d, 0.0))
        b = ukf_update(GaussianBelief(pose.as_array(), P), LandmarkObservation(lm.id, d, bearing, R), lm)
        m_ref, P_ref = O.loop_ukf_update(pose.as_array(), P, (d, bearing), lm.position, R)
        dm = np.abs(b.mean - m_ref)
        dm[2] = abs(O.wrap(b.mean[2] - m_ref[2]))
        worst = max(worst, float(dm.max()), float(np.abs(b.cov - P_ref).max()))
    return worst < 1e-8, f"{n} range-bearing updates vs loop implementation, max deviation {worst:.2e}"


MC_PRIOR = np.diag([0.25, 0.25, 0.1])
MC_LANDMARK = (2.0, 0.0)
MC_R = np.diag([0.04, 0.01])
MC_Z = (2.0, 0.0)


def ukf_vs_monte_carlo(rng, n_samples=1_000_000):
    """UKF posterior mean against an importance-sampled posterior; returns (ukf, mc, se, z-scores)."""
    lm = Landmark(0, LandmarkType.LCorner, MC_LANDMARK)
    prior = GaussianBelief(np.zeros(3), MC_PRIOR)
    post = ukf_update(prior, LandmarkObservation(0, MC_Z[0], MC_Z[1], MC_R), lm)
    m, cov, se = O.mc_posterior(np.zeros(3), MC_PRIOR, MC_LANDMARK, MC_Z, MC_R, n_samples, rng)
    zs = np.abs(post.mean - m) / se
    return post.mean, m, se, zs


def check_ukf_monte_carlo(rng):
    ukf, mc, se, zs = ukf_vs_monte_carlo(rng)
    detail = (f"ukf mean {np.round(ukf, 4).tolist()} mc mean {np.round(mc, 4).tolist()} "
              f"|diff|/se {np.round(zs, 1).tolist()} (limit 3)")
    return bool(np.all(zs <= 3.0)), detail


def check_entropy(rng, n=1000):
    h1 = entropy(np.eye(3))
    want = 1.5 * (1 + math.log(2 * math.pi))
    S = np.diag([0.25, 0.25, 0.1])
    shift = entropy(4 * S) - entropy(S)
    ok = abs(h1 - want) < 1e-9 and abs(shift - 3 * math.log(2)) < 1e-9
    ok &= abs(entropy(S) - O.det_entropy(S)) < 1e-12
    f = build_field()
    noise = RangeBearingNoise()
    violations = 0
    for _ in range(n):
        P = random_prior(rng)
        pose, lm, d = random_sighting(rng, f)
        z = LandmarkObservation(lm.id, d, float(rng.uniform(-math.pi, math.pi)), noise.covariance(d))
        post = ukf_update(GaussianBelief(pose.as_array(), P), z, lm)
        violations += np.linalg.det(post.cov) > np.linalg.det(P) + 1e-12
    ok &= violations == 0
    return ok, f"H(I3) err {abs(h1 - want):.1e}, 4x shift err {abs(shift - 3 * math.log(2)):.1e}, " \
               f"det increases {violations}/{n}"


def check_planner(rng, n=100):
    intr, thr, f = CameraIntrinsics(), VisibilityThresholds(), build_field()
    pos = [tuple(p) for p in f.positions]
    kinds = [int(k) for k in f.kinds]
    bad, fallbacks = 0, 0
    for _ in range(n):
        pose = _random_pose(rng, f)
        ball = (rng.uniform(-4.5, 4.5), rng.uniform(-3.0, 3.0))
        bel = GaussianBelief.around(pose, 0.1, 0.1)
        res = best_viewpoint(bel, ball, f, thr=thr, intr=intr)
        table, best, fb = O.brute_force_plan(bel.mean, bel.cov, ball, pos, kinds, thr.as_array(),
                                             _intr_tuple(intr), f.ball_radius, PAN_LIMITS, TILT_LIMITS)
        fallbacks += fb
        same = best == res.best_index and fb == res.fallback and len(table) == len(res.per_candidate)
        for row, c in zip(table, res.per_candidate):
            same &= (abs(row[0] - c.cam.pan) < 1e-12 and abs(row[1] - c.cam.tilt) < 1e-12
                     and row[4] == c.ball_visible and abs(row[3] - c.entropy) < 1e-9)
        bad += not same
    return bad == 0, f"{n} configurations ({fallbacks} fallback), mismatches {bad}"


def check_candidates(rng):
    grid = ViewpointGrid()
    cams = enumerate_viewpoints(grid)
    ref = [(p, t) for t in O.grid_cells(*grid.tilt_range, grid.tilt_points)
           for p in O.grid_cells(*grid.pan_range, grid.pan_points)]
    err = max(max(abs(c.pan - p), abs(c.tilt - t)) for c, (p, t) in zip(cams, ref))
    return len(cams) == len(ref) and err < 1e-12, f"{len(cams)} candidates, max deviation {err:.1e}"


def check_env_goal(rng, n=20):
    env = HeadControlEnv()
    bad = 0
    for _ in range(n):
        env.reset(seed=int(rng.integers(2 ** 63)))
        s = env.state
        plan = best_viewpoint(GaussianBelief.around(s.robot, 0.1, 0.1), s.ball, env.field)
        bad += plan.best != s.goal or not ball_visible(s.robot, s.cam, env.intr, s.ball, env.field.ball_radius)
    return bad == 0, f"{n} resets, goal or ball-visibility mismatches {bad}"


def check_success_log(rng, n=100):
    env = HeadControlEnv()
    policy = RandomPolicy(rng)
    f, thr, intr = env.field, env.thr, env.intr
    log, poses, records = [], {}, []
    for i in range(n):
        rec = run_episode(env, policy, int(rng.integers(2 ** 63)), i, 0, log)
        poses[i] = env.state.robot.as_array()
        records.append(rec)
    rows = [dict(zip(EPISODE_LOG_HEADER, r)) for r in log]
    ref = O.success_from_log(rows, poses, [tuple(p) for p in f.positions], [int(k) for k in f.kinds],
                             thr.as_array(), _intr_tuple(intr))
    diff = max(abs(ref[r.episode] - r.success_rate) for r in records)
    mean = float(np.mean([r.success_rate for r in records]))
    return diff < 1e-12, f"{n} random-policy episodes, mean success {mean:.3f}, max |diff| vs log replay {diff:.1e}"


def check_epochs(rng):
    """Epoch means against plain loops over a 10-episode fixture spanning an empty window."""
    steps = [12, 40, 77, 150, 299, 300, 318, 950, 960, 1199]
    recs = []
    for i, t in enumerate(steps):
        d = int(rng.integers(1, 21))
        recs.append(EpisodeRecord(i, t, "Timeout", d, float(rng.random()), d, int(rng.integers(1, 21)), 0.0))
    got = epoch_aggregate(recs, 300)
    ok = len(got) == 4 and got[2].empty
    for e in range(4):
        members = [r for r in recs if e * 300 <= r.terminal_step < (e + 1) * 300]
        if not members:
            continue
        total = 0.0
        for r in members:
            total += r.success_rate
        ok &= got[e].n_episodes == len(members) and abs(got[e].mean_success_rate - total / len(members)) < 1e-12
    return ok, f"{len(recs)} episodes into {len(got)} windows"


def check_regression(rng, steps=400):
    """One stored transition, repeated updates: Q(s, a) must settle on the fixed target."""
    arch = Architecture(16, 16, 1, 4)
    params = init_params(arch, rng, np.float64)
    s = rng.random((1, 1, 16, 16))
    a, y = np.array([2]), np.array([1.495])
    adam = Adam(params)
    for _ in range(steps):
        _, grads, _ = loss_and_grads(params, s, a, y, np.ones(1))
        adam.step(params, grads, 1e-3)
    err = abs(float(q_forward(params, s)[0, 2]) - y[0])
    return err < 1e-3, f"|Q(s,a) - Y| after {steps} updates {err:.1e} (limit 1e-3)"


def check_epsilon(rng, draws=100_000):
    arch = Architecture(16, 16, 1, 4)
    params = init_params(arch, rng, np.float64)
    state = rng.random((1, 16, 16))
    best = greedy_action(params, state)
    uniform = np.array([act_epsilon_greedy(params, state, 1.0, rng) for _ in range(draws)])
    freq = np.bincount(uniform, minlength=4) / draws
    worst = float(np.max(np.abs(freq - 0.25) / 0.25))
    half = np.array([act_epsilon_greedy(params, state, 0.5, rng) for _ in range(draws)])
    law = 0.5 + 0.5 / 4
    worst = max(worst, abs(float(np.mean(half == best)) - law) / law)
    return worst < 0.02, f"max relative action-frequency error {worst:.3f} (limit 0.02)"


def check_network(rng):
    arch = Architecture(20, 24, 2, 4)
    params = init_params(arch, rng, np.float64)
    params = {k: v + (rng.normal(size=v.shape) * 0.05 if k.endswith(".b") else 0) for k, v in params.items()}
    x = rng.random((2, 20, 24))
    q = q_forward(params, x)
    ref = O.naive_q(params, x)
    shapes_ok = all(
        tuple(layer_shapes(init_params(Architecture(h, w, k, a), rng), np.zeros((1, k, h, w)))[i])
        == O.shape_chain(h, w, k, a)[i]
        for h, w, k, a in ((120, 160, 1, 4), (60, 80, 1, 4), (37, 51, 3, 8)) for i in range(7))
    err = float(np.abs(q - ref).max())
    return err < 1e-10 and shapes_ok, f"max |dQ| vs direct convolution {err:.1e}, shape chains ok={shapes_ok}"


def gradient_check(rng, per_tensor=3, arch=None):
    """Relative errors between backprop and central differences on sampled weights of every tensor."""
    arch = Architecture(20, 24, 1, 4) if arch is None else arch
    params = init_params(arch, rng, np.float64)
    params = {k: v + (rng.normal(size=v.shape) * 0.05 if k.endswith(".b") else 0) for k, v in params.items()}
    n = 6
    s = rng.random((n, arch.stack, arch.height, arch.width))
    a = rng.integers(arch.n_actions, size=n)
    y = rng.normal(size=n) * 0.3
    w = rng.uniform(0.2, 1.0, n)
    _, grads, _ = loss_and_grads(params, s, a, y, w)

    def f(p):
        return loss_and_grads(p, s, a, y, w)[0]

    worst = {}
    for name in PARAM_ORDER:
        errs = []
        for _ in range(per_tensor):
            idx = tuple(int(rng.integers(d)) for d in params[name].shape)
            fd = O.finite_difference(f, params, name, idx)
            g = float(grads[name][idx])
            scale = max(abs(g), abs(fd), 1e-7)
            errs.append(abs(g - fd) / scale)
        worst[name] = max(errs)
    return worst


def check_gradients(rng):
    worst = gradient_check(rng)
    m = max(worst.values())
    return m < 1e-4, f"max relative error {m:.1e} over {len(worst)} tensors (limit 1e-4)"


def per_frequencies(priorities, alpha, draws, rng):
    buf = PrioritizedBuffer(len(priorities), alpha=alpha, eps=1e-12)
    z = np.zeros((1, 1, 1), np.uint8)
    for _ in priorities:
        buf.add(Experience(z, 0, 0.0, z, False))
    buf.update_priorities(np.arange(len(priorities)), np.asarray(priorities) - 1e-12)
    ids, _ = buf.draw(draws, rng)
    return np.bincount(ids, minlength=len(priorities)) / draws, O.priority_law(priorities, alpha)


def check_per(rng):
    worst = 0.0
    for alpha in (0.6, 1.0):
        for pr in ((1.0, 2.0, 4.0), (1.0, 1.0, 2.0), (3.0, 3.0, 3.0, 3.0)):
            emp, law = per_frequencies(pr, alpha, 100_000, rng)
            worst = max(worst, float(np.max(np.abs(emp - law) / law)))
    buf = PrioritizedBuffer(257, alpha=0.6)
    z = np.zeros((1, 1, 1), np.uint8)
    for _ in range(300):
        buf.add(Experience(z, 0, 0.0, z, False))
    for _ in range(10_000):
        ids = rng.integers(buf.next_id - len(buf), buf.next_id, size=4)
        buf.update_priorities(ids, rng.normal(size=4) * 3)
    drift = abs(buf.tree.total - float(np.sum(buf.priorities() ** 0.6)))
    u = rng.random(200)
    lin = O.linear_scan_draw(buf.priorities(), 0.6, u)
    tree = buf.tree.find(u * buf.tree.total)
    agree = int(np.sum(np.asarray(lin) == tree))
    ok = worst < 0.02 and drift < 1e-6 and agree == len(u)
    return ok, f"max relative frequency error {worst:.3f} (limit 0.02), tree drift {drift:.1e}, " \
               f"scan agreement {agree}/{len(u)}"


def check_ddqn(rng):
    y = ddqn_target_from_q([1.0, -2.0], [False, True], [[0.1, 0.0, 0.9, 0.2], [5, 5, 5, 5]],
                           [[9.0, 9.0, 0.5, 9.0], [7, 7, 7, 7]], 0.99)
    q = rng.normal(size=(50, 4))
    r = rng.choice([-2.0, -1.0, 0.0, 1.0], size=50)
    d = rng.random(50) < 0.3
    same = ddqn_target_from_q(r, d, q, q, 0.9)
    vanilla = np.where(d, r, r + 0.9 * q.max(axis=1))
    ok = y[0] == 1 + 0.99 * 0.5 and y[1] == -2.0 and np.array_equal(same, vanilla)
    return ok, f"fixture targets {y.tolist()}, shared-network case equals max target: {np.array_equal(same, vanilla)}"


CHECKS = {
    "field": check_field,
    "projection": check_projection,
    "visibility": check_visibility,
    "ball_sweep": check_ball_sweep,
    "render_disc": check_render_disc,
    "ukf_linear": check_ukf_linear,
    "ukf_loop": check_ukf_loop,
    "ukf_monte_carlo": check_ukf_monte_carlo,
    "entropy": check_entropy,
    "planner": check_planner,
    "candidates": check_candidates,
    "env_goal": check_env_goal,
    "success_log": check_success_log,
    "epochs": check_epochs,
    "network": check_network,
    "gradients": check_gradients,
    "per": check_per,
    "ddqn": check_ddqn,
    "regression": check_regression,
    "epsilon": check_epsilon,
}


def run_checks(names=None, seed=0, emit=None):
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    out = []
    order = list(CHECKS)
    for name in names:
        rng = stream(seed, "selftest", order.index(name))
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name](rng)
        except Exception as e:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(e).__name__}: {e}"
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
        out.append(res)
        if emit is not None:
            emit(res)
    return out
