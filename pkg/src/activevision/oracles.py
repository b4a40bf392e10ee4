"""Independent reference implementations used by the test suite and ``selftest``.

Everything here is written from scratch in a different style from the
production code (homogeneous matrices instead of axis rows, explicit loops
instead of vectorised kernels, determinants instead of Cholesky), so
agreement between the two is evidence rather than tautology. Nothing in
the package imports this module except the self-test.
"""

from __future__ import annotations

import math

import numpy as np

# -- field enumeration -----------------------------------------------------


def _field_lines(length, width, goal_len, goal_w):
    hx, hy, gy = length / 2, width / 2, goal_w / 2
    boundary = [((-hx, -hy), (hx, -hy)), ((hx, -hy), (hx, hy)),
                ((hx, hy), (-hx, hy)), ((-hx, hy), (-hx, -hy))]
    interior = [((0.0, -hy), (0.0, hy))]
    for s in (-1, 1):
        fx = s * (hx - goal_len)
        interior += [((s * hx, -gy), (fx, -gy)), ((s * hx, gy), (fx, gy)), ((fx, -gy), (fx, gy))]
    return boundary, interior


def _on_segment(p, seg, tol=1e-9):
    """None if off the segment, else 'end' or 'inner'."""
    (x0, y0), (x1, y1) = seg
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = ((p[0] - x0) * dx + (p[1] - y0) * dy) / L2
    qx, qy = x0 + t * dx, y0 + t * dy
    if math.hypot(p[0] - qx, p[1] - qy) > tol or t < -tol or t > 1 + tol:
        return None
    L = math.sqrt(L2)
    return "end" if min(t, 1 - t) * L < tol else "inner"


def _seg_intersection(a, b):
    (x1, y1), (x2, y2) = a
    (x3, y3), (x4, y4) = b
    den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4)
    if abs(den) < 1e-12:
        # parallel: only shared endpoints count
        return [p for p in (a[0], a[1]) if _on_segment(p, b)]
    t = ((x1 - x3) * (y3 - y4) - (y1 - y3) * (x3 - x4)) / den
    u = -((x1 - x2) * (y1 - y3) - (y1 - y2) * (x1 - x3)) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return [(x1 + t * (x2 - x1), y1 + t * (y2 - y1))]
    return []


def enumerate_field(length=9.0, width=6.0, goal_len=1.0, goal_w=3.0, radius=0.75, spacing=0.5):
    """Classify every landmark by counting line arms at each junction.

    Returns {kind name: sorted list of (x, y)}. Two arms meeting at an
    endpoint make an L, three arms make a T, a line crossing the centre
    circle is filed with the Ls.
    """
    boundary, interior = _field_lines(length, width, goal_len, goal_w)
    lines = boundary + interior
    key = lambda p: (round(p[0], 6) + 0.0, round(p[1], 6) + 0.0)
    junctions = {}
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            for p in _seg_intersection(lines[i], lines[j]):
                arms = 0
                for seg in lines:
                    where = _on_segment(p, seg)
                    arms += {None: 0, "end": 1, "inner": 2}[where]
                junctions[key(p)] = "LCorner" if arms == 2 else "TJunction" if arms == 3 else "X"
    # circle against every straight line: solve |p0 + t d| = r
    for seg in lines:
        (x0, y0), (x1, y1) = seg
        dx, dy = x1 - x0, y1 - y0
        a = dx * dx + dy * dy
        b = 2 * (x0 * dx + y0 * dy)
        c = x0 * x0 + y0 * y0 - radius * radius
        disc = b * b - 4 * a * c
        if disc < 0:
            continue
        for t in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)):
            if 0 <= t <= 1:
                junctions[key((x0 + t * dx, y0 + t * dy))] = "LCorner"

    out = {"LCorner": set(), "TJunction": set(), "LinePoint": set(), "BoundaryPoint": set()}
    for k, kind in junctions.items():
        out[kind if kind != "X" else "LCorner"].add(k)

    def samples(seg):
        (x0, y0), (x1, y1) = seg
        L = math.hypot(x1 - x0, y1 - y0)
        pts = [(x0, y0), (x1, y1)]
        k = 0
        # walk outward from the midpoint in whole spacings
        while k * spacing <= L / 2 + 1e-9:
            for s in ((1, -1) if k else (1,)):
                f = 0.5 + s * k * spacing / L
                pts.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
            k += 1
        return pts

    taken = set(junctions)
    for seg in interior:
        for p in samples(seg):
            if key(p) not in taken:
                out["LinePoint"].add(key(p))
    n = 2 * max(2, math.ceil(math.pi * radius / spacing))
    for i in range(n):
        p = (radius * math.cos(2 * math.pi * i / n), radius * math.sin(2 * math.pi * i / n))
        if key(p) not in taken:
            out["LinePoint"].add(key(p))
    taken |= out["LinePoint"]
    for seg in boundary:
        for p in samples(seg):
            if key(p) not in taken:
                out["BoundaryPoint"].add(key(p))
    return {k: sorted(v) for k, v in out.items()}


# -- camera ------------------------------------------------------------


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1.0]])


def _trans(x, y, z):
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


def camera_matrix(x, y, theta, pan, tilt, width, height, hfov, mount_h, mount_fwd):
    """3x4 projection matrix P = K [I | 0] T_cam_world, pixel centres at +0.5."""
    world_from_robot = _trans(x, y, 0.0) @ _rot_z(theta)
    robot_from_head = _rot_z(pan) @ _trans(mount_fwd, 0.0, mount_h) @ _rot_y(tilt)
    # optical frame (x right, y down, z forward) inside the head frame (x fwd, y left, z up)
    head_from_optical = np.array([[0, 0, 1, 0], [-1, 0, 0, 0], [0, -1, 0, 0], [0, 0, 0, 1.0]])
    world_from_optical = world_from_robot @ robot_from_head @ head_from_optical
    optical_from_world = np.linalg.inv(world_from_optical)
    f = (width / 2) / math.tan(hfov / 2)
    K = np.array([[f, 0, width / 2], [0, f, height / 2], [0, 0, 1.0]])
    return K @ optical_from_world[:3, :]


def project_homogeneous(P, point, width, height, margin=0.0, near=1e-3):
    X = np.array([point[0], point[1], point[2] if len(point) > 2 else 0.0, 1.0])
    u, v, w = P @ X
    if w <= near:
        return None
    u, v = u / w, v / w
    if margin <= u < width - margin and margin <= v < height - margin:
        return u, v
    return None


def visible_ids(pose, pan, tilt, positions, kinds, thresholds, intr_tuple):
    """Brute-force visible set: both predicates checked landmark by landmark."""
    width, height = intr_tuple[0], intr_tuple[1]
    P = camera_matrix(*pose, pan, tilt, *intr_tuple)
    out = []
    for i, (p, k) in enumerate(zip(positions, kinds)):
        if math.hypot(p[0] - pose[0], p[1] - pose[1]) > thresholds[k]:
            continue
        if project_homogeneous(P, p, width, height) is not None:
            out.append(i)
    return out


def ball_in_image(pose, pan, tilt, ball, ball_radius, intr_tuple, margin=2.0):
    P = camera_matrix(*pose, pan, tilt, *intr_tuple)
    return project_homogeneous(P, (ball[0], ball[1], ball_radius), intr_tuple[0], intr_tuple[1], margin) is not None


def pan_visibility_boundary(rho, delta_h, tilt, half_width_px, focal):
    """Largest |pan offset| (rad) keeping a point at the horizontal image edge.

    Point at ground range ``rho`` and ``delta_h`` below a camera with no
    forward offset; solves rho sin(phi) = k (rho cos(phi) cos(t) + dh sin(t)).
    """
    k = half_width_px / focal
    A, B, C = rho, k * rho * math.cos(tilt), k * delta_h * math.sin(tilt)
    return math.atan2(B, A) + math.asin(C / math.hypot(A, B))


# -- beliefs -------------------------------------------------------------


def wrap(a):
    """Angle in (-pi, pi]."""
    r = math.remainder(a, 2 * math.pi)
    return math.pi if r == -math.pi else r


def kalman_update(mu, P, H, R, z):
    """Closed-form linear Kalman measurement update."""
    mu, P, H, R, z = (np.asarray(v, dtype=float) for v in (mu, P, H, R, z))
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    return mu + K @ (z - H @ mu), (np.eye(len(mu)) - K @ H) @ P


def loop_ukf_update(mu, P, z, landmark, R, alpha=0.1, beta=2.0, kappa=0.0):
    """Range-bearing unscented update written out with plain loops."""
    n = 3
    lam = alpha * alpha * (n + kappa) - n
    L = np.linalg.cholesky((n + lam) * np.asarray(P, dtype=float))
    pts = [np.array(mu, dtype=float)]
    for i in range(n):
        pts.append(pts[0] + L[:, i])
    for i in range(n):
        pts.append(pts[0] - L[:, i])
    wm = [lam / (n + lam)] + [1 / (2 * (n + lam))] * (2 * n)
    wc = [wm[0] + 1 - alpha * alpha + beta] + wm[1:]

    def h(s):
        dx, dy = landmark[0] - s[0], landmark[1] - s[1]
        return np.array([math.hypot(dx, dy), wrap(math.atan2(dy, dx) - s[2])])

    Z = [h(s) for s in pts]
    zr = sum(w * zz[0] for w, zz in zip(wm, Z))
    zb = Z[0][1] + sum(w * wrap(zz[1] - Z[0][1]) for w, zz in zip(wm, Z))
    zhat = np.array([zr, zb])
    Pzz = np.array(R, dtype=float)
    Pxz = np.zeros((3, 2))
    for w, s, zz in zip(wc, pts, Z):
        dz = np.array([zz[0] - zhat[0], wrap(zz[1] - zhat[1])])
        dx = s - mu
        dx[2] = wrap(dx[2])
        Pzz = Pzz + w * np.outer(dz, dz)
        Pxz = Pxz + w * np.outer(dx, dz)
    K = Pxz @ np.linalg.inv(Pzz)
    nu = np.array([z[0] - zhat[0], wrap(z[1] - zhat[1])])
    new_mu = np.asarray(mu, dtype=float) + K @ nu
    new_mu[2] = wrap(new_mu[2])
    new_P = np.asarray(P, dtype=float) - K @ Pzz @ K.T
    return new_mu, 0.5 * (new_P + new_P.T)


def det_entropy(P):
    P = np.asarray(P, dtype=float)
    return 0.5 * math.log(np.linalg.det(2 * math.pi * math.e * P))


def mc_posterior(mu, P, landmark, z, R, n_samples, rng, chunk=250_000):
    """Self-normalised importance sampling of the range-bearing posterior.

    Samples from the prior, weights by the Gaussian likelihood. Returns
    (mean, cov, standard error of each mean component).
    """
    mu = np.asarray(mu, dtype=float)
    Rinv = np.linalg.inv(np.asarray(R, dtype=float))
    xs, ls = [], []
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        x = rng.multivariate_normal(mu, P, size=m)
        dx, dy = landmark[0] - x[:, 0], landmark[1] - x[:, 1]
        r = np.hypot(dx, dy)
        b = np.arctan2(dy, dx) - x[:, 2]
        e = np.column_stack([z[0] - r, (z[1] - b + np.pi) % (2 * np.pi) - np.pi])
        ls.append(-0.5 * np.einsum("ij,jk,ik->i", e, Rinv, e))
        xs.append(x)
        done += m
    x = np.vstack(xs)
    logw = np.concatenate(ls)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = w @ x
    d = x - mean
    cov = (d * w[:, None]).T @ d
    se = np.sqrt(np.sum((w[:, None] * d) ** 2, axis=0))
    return mean, cov, se


# -- planner -------------------------------------------------------------


def grid_cells(lo, hi, n):
    return [lo + (hi - lo) * (2 * i + 1) / (2 * n) for i in range(n)]


def brute_force_plan(mean, cov, ball, positions, kinds, thresholds, intr_tuple, ball_radius,
                     pan_range, tilt_range, pan_points=10, tilt_points=4,
                     ukf=(0.1, 2.0, 0.0), noise=(0.1, math.radians(2.0), 0.01), ball_margin=2.0):
    """Exhaustive best-viewpoint search. Returns (table, best_index, fallback).

    ``table`` rows are (pan, tilt, visible landmark indices, entropy, ball_visible).
    """
    mean = np.asarray(mean, dtype=float)
    table = []
    for tilt in grid_cells(*tilt_range, tilt_points):
        for pan in grid_cells(*pan_range, pan_points):
            ids = visible_ids(mean, pan, tilt, positions, kinds, thresholds, intr_tuple)
            mu, P = mean.copy(), np.array(cov, dtype=float)
            for i in sorted(ids):
                lm = positions[i]
                d = math.hypot(lm[0] - mean[0], lm[1] - mean[1])
                b = wrap(math.atan2(lm[1] - mean[1], lm[0] - mean[0]) - mean[2])
                sr = max(noise[0] * d, noise[2])
                R = np.diag([sr * sr, noise[1] ** 2])
                mu, P = loop_ukf_update(mu, P, (d, b), lm, R, *ukf)
            seen = ball_in_image(mean, pan, tilt, ball, ball_radius, intr_tuple, ball_margin)
            table.append((pan, tilt, ids, det_entropy(P), seen))
    best, best_h = -1, math.inf
    for i, row in enumerate(table):
        if row[4] and row[3] < best_h:
            best, best_h = i, row[3]
    if best >= 0:
        return table, best, False
    # fallback: smallest angle between optical axis and the ball
    angles = []
    for pan, tilt, *_ in table:
        P = camera_matrix(*mean, pan, tilt, *intr_tuple)
        M = P[:, :3]
        centre = -np.linalg.solve(M, P[:, 3])
        axis = M[2] / np.linalg.norm(M[2])
        d = np.array([ball[0], ball[1], ball_radius]) - centre
        angles.append(math.acos(max(-1.0, min(1.0, axis @ d / np.linalg.norm(d)))))
    return table, int(np.argmin(angles)), True


# -- network -------------------------------------------------------------


def shape_chain(height, width, stack, n_actions):
    """Activation shapes (H, W, C) per stage, by ceil division."""
    c = lambda n, s: math.ceil(n / s)
    h1, w1 = c(height, 2), c(width, 2)
    h2, w2 = c(h1, 2), c(w1, 2)
    h3, w3 = c(h2, 2), c(w2, 2)
    h4, w4 = c(h3, 2), c(w3, 2)
    return [(h1, w1, 32), (h2, w2, 32), (h3, w3, 64), (h4, w4, 64), (h4 * w4 * 64,), (512,), (n_actions,)]


def naive_conv(x, w, b, stride):
    """Direct convolution, x (C, H, W), w (K, K, C, F), "same" padding, loops over outputs."""
    c, h, wd = x.shape
    k = w.shape[0]
    f = w.shape[3]
    oh, ow = math.ceil(h / stride), math.ceil(wd / stride)
    ph = max((oh - 1) * stride + k - h, 0)
    pw = max((ow - 1) * stride + k - wd, 0)
    xp = np.zeros((c, h + ph, wd + pw))
    xp[:, ph // 2:ph // 2 + h, pw // 2:pw // 2 + wd] = x
    out = np.zeros((f, oh, ow))
    for fi in range(f):
        for i in range(oh):
            for j in range(ow):
                acc = b[fi]
                for di in range(k):
                    for dj in range(k):
                        acc += float(xp[:, i * stride + di, j * stride + dj] @ w[di, dj, :, fi])
                out[fi, i, j] = acc
    return out


def naive_pool(x):
    c, h, w = x.shape
    oh, ow = math.ceil(h / 2), math.ceil(w / 2)
    out = np.full((c, oh, ow), -np.inf)
    for i in range(h):
        for j in range(w):
            out[:, i // 2, j // 2] = np.maximum(out[:, i // 2, j // 2], x[:, i, j])
    return out


def naive_q(params, x):
    """Q-vector for one (C, H, W) input with float64 arithmetic throughout."""
    p = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    relu = lambda a: np.maximum(a, 0.0)
    a = relu(naive_conv(np.asarray(x, dtype=np.float64), p["conv1.w"], p["conv1.b"], 2))
    a = naive_pool(a)
    a = relu(naive_conv(a, p["conv2.w"], p["conv2.b"], 2))
    a = relu(naive_conv(a, p["conv3.w"], p["conv3.b"], 2))
    flat = a.transpose(1, 2, 0).reshape(-1)  # (H, W, C) order
    hdn = relu(flat @ p["fc1.w"] + p["fc1.b"])
    return hdn @ p["out.w"] + p["out.b"]


def finite_difference(f, params, name, index, h=1e-6):
    """Central difference of scalar ``f(params)`` w.r.t. one weight."""
    orig = params[name][index]
    params[name][index] = orig + h
    up = f(params)
    params[name][index] = orig - h
    down = f(params)
    params[name][index] = orig
    return (up - down) / (2 * h)


# -- replay --------------------------------------------------------------


def linear_scan_draw(priorities, alpha, u):
    """Index selected by each uniform ``u`` in [0, 1) under p_i^alpha, via a cumulative scan."""
    p = [float(q) ** alpha for q in priorities]
    total = sum(p)
    out = []
    for x in np.atleast_1d(u):
        target, acc = x * total, 0.0
        chosen = len(p) - 1
        for i, q in enumerate(p):
            acc += q
            if target < acc:
                chosen = i
                break
        out.append(chosen)
    return out


def priority_law(priorities, alpha):
    p = np.asarray(priorities, dtype=float) ** alpha
    return p / p.sum()


# -- episode logs --------------------------------------------------------


def success_from_log(rows, reset_poses, positions, kinds, thresholds, intr_tuple):
    """Recompute per-episode success rates from episode-log rows.

    ``rows`` are dicts with the episode-log columns; ``reset_poses`` maps an
    episode to its true robot pose (x, y, theta).
    """
    last = {}
    for r in rows:
        last[int(r["episode"])] = r
    out = {}
    for ep, r in sorted(last.items()):
        pose = reset_poses[ep]
        seen = set(visible_ids(pose, float(r["pan"]), float(r["tilt"]), positions, kinds, thresholds, intr_tuple))
        want = set(visible_ids(pose, float(r["goal_pan"]), float(r["goal_tilt"]), positions, kinds,
                               thresholds, intr_tuple))
        out[ep] = 1.0 if not want else len(seen & want) / len(want)
    return out
