"""Pan-tilt pinhole head camera.

Chain: field frame -> robot frame (pose) -> head (pan about the vertical
axis through the robot centre, camera ``mount_forward_offset`` ahead of
that axis at ``mount_height``) -> camera (tilt down) -> pixels.

Camera axes follow the usual vision convention: x right, y down, z along
the optical axis. Pixel ``(u, v)`` has its centre at ``(col + 0.5, row + 0.5)``
so the optical axis lands on ``(W/2, H/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigurationError
from .field import FieldModel, Landmark, LandmarkType
from .geometry import Pose2D

PAN_LIMITS = (-math.pi / 2, math.pi / 2)
TILT_LIMITS = (math.pi / 36, 13 * math.pi / 36)

BACKGROUND = 0.2
LINE_INTENSITY = 1.0
BALL_INTENSITY = 0.75
NEAR_PLANE = 1e-3


@dataclass(frozen=True)
class CameraPosition:
    pan: float
    tilt: float

    def __post_init__(self):
        if not (PAN_LIMITS[0] < self.pan < PAN_LIMITS[1]):
            raise ConfigurationError("pan", f"{self.pan!r} outside joint limits {PAN_LIMITS}")
        if not (TILT_LIMITS[0] < self.tilt < TILT_LIMITS[1]):
            raise ConfigurationError("tilt", f"{self.tilt!r} outside joint limits {TILT_LIMITS}")


@dataclass(frozen=True)
class CameraIntrinsics:
    image_width: int = 160
    image_height: int = 120
    horizontal_fov: float = math.radians(60.0)
    mount_height: float = 0.55
    mount_forward_offset: float = 0.05

    def validate(self):
        if self.image_width <= 0:
            raise ConfigurationError("image_width", "must be > 0")
        if self.image_height <= 0:
            raise ConfigurationError("image_height", "must be > 0")
        if not 0 < self.horizontal_fov < math.pi:
            raise ConfigurationError("horizontal_fov", "must be in (0, pi)")
        if self.mount_height <= 0:
            raise ConfigurationError("mount_height", "must be > 0")
        if self.mount_forward_offset < 0:
            raise ConfigurationError("mount_forward_offset", "must be >= 0")

    @property
    def focal(self):
        return (self.image_width / 2) / math.tan(self.horizontal_fov / 2)

    @property
    def vertical_fov(self):
        return 2 * math.atan(self.image_height / 2 / self.focal)


@dataclass(frozen=True)
class VisibilityThresholds:
    """Maximum ground distance (m) at which each landmark type is detected."""

    lcorner: float = 4.0
    tjunction: float = 4.0
    linepoint: float = 3.0
    boundarypoint: float = 5.0

    def validate(self):
        for name in ("lcorner", "tjunction", "linepoint", "boundarypoint"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(name, "visibility threshold must be > 0")

    def for_kind(self, kind: LandmarkType) -> float:
        return self.as_array()[int(kind)]

    def as_array(self):
        return np.array([self.lcorner, self.tjunction, self.linepoint, self.boundarypoint])


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8, row-major

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width) or self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be a (height, width) uint8 array")

    def to_float(self):
        return self.pixels.astype(np.float32) / 255.0

    def write_pgm(self, path):
        path = Path(path)
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        path.write_bytes(header + np.ascontiguousarray(self.pixels).tobytes())
        return path

    @classmethod
    def read_pgm(cls, path):
        data = Path(path).read_bytes()
        tokens = []
        pos = 0
        while len(tokens) < 4:
            while data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
                continue
            end = pos
            while not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
        if tokens[0] != b"P5" or int(tokens[3]) != 255:
            raise ValueError(f"{path}: not an 8-bit binary graymap")
        w, h = int(tokens[1]), int(tokens[2])
        pix = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
        return cls(w, h, pix.copy())


def camera_frame(pose: Pose2D, cam: CameraPosition, intr: CameraIntrinsics):
    """Camera centre and world-frame (right, down, forward) axes as rows."""
    psi = pose.theta + cam.pan
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(cam.tilt), math.sin(cam.tilt)
    centre = np.array([pose.x + intr.mount_forward_offset * cp,
                       pose.y + intr.mount_forward_offset * sp,
                       intr.mount_height])
    axes = np.array([
        [sp, -cp, 0.0],
        [-st * cp, -st * sp, -ct],
        [ct * cp, ct * sp, -st],
    ])
    return centre, axes


def to_camera(pose, cam, intr, points):
    """Field points (N, 2) or (N, 3) -> camera-frame coordinates (N, 3)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] == 2:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    centre, axes = camera_frame(pose, cam, intr)
    return (pts - centre) @ axes.T


def project_points(pose, cam, intr, points, margin=0.0):
    """Vectorised projection. Returns (uv (N, 2), inside mask (N,))."""
    pc = to_camera(pose, cam, intr, points)
    depth = pc[:, 2]
    front = depth > NEAR_PLANE
    safe = np.where(front, depth, 1.0)
    f = intr.focal
    u = intr.image_width / 2 + f * pc[:, 0] / safe
    v = intr.image_height / 2 + f * pc[:, 1] / safe
    inside = (front & (u >= margin) & (u < intr.image_width - margin)
              & (v >= margin) & (v < intr.image_height - margin))
    return np.column_stack([u, v]), inside


def project(pose: Pose2D, cam: CameraPosition, intr: CameraIntrinsics, point):
    """Pixel coordinates of a ground point (or 3-D point), or None if not in the image."""
    uv, inside = project_points(pose, cam, intr, [point])
    if not inside[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def visible_mask(pose, cam, intr, field: FieldModel, thr: VisibilityThresholds):
    if len(field) == 0:
        return np.zeros(0, dtype=bool)
    _, inside = project_points(pose, cam, intr, field.positions)
    dist = np.hypot(field.positions[:, 0] - pose.x, field.positions[:, 1] - pose.y)
    return inside & (dist <= thr.as_array()[field.kinds])


def visible_landmarks(pose: Pose2D, cam: CameraPosition, field: FieldModel,
                      thr: VisibilityThresholds, intr: CameraIntrinsics | None = None) -> list[Landmark]:
    """Landmarks inside the image AND within their type's detection distance, by id."""
    intr = CameraIntrinsics() if intr is None else intr
    mask = visible_mask(pose, cam, intr, field, thr)
    return [lm for lm, m in zip(field.landmarks, mask) if m]


def ball_visible(pose: Pose2D, cam: CameraPosition, intr: CameraIntrinsics, ball,
                 ball_radius=0.07, margin=2.0) -> bool:
    """Ball centre projects inside the image shrunk by ``margin`` pixels."""
    centre = (float(ball[0]), float(ball[1]), ball_radius)
    _, inside = project_points(pose, cam, intr, [centre], margin=margin)
    return bool(inside[0])


def _clip_near(poly):
    """Clip a camera-frame polygon (M, 3) to depth >= NEAR_PLANE."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        a_in, b_in = a[2] >= NEAR_PLANE, b[2] >= NEAR_PLANE
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (NEAR_PLANE - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return np.array(out).reshape(-1, 3)


_SUBPIXEL_BITS = 4
_COORD_LIMIT = 2.0 ** 26


def render(pose: Pose2D, cam: CameraPosition, intr: CameraIntrinsics, field: FieldModel,
           ball, noise_sigma=0.0, seed=None) -> GrayImage:
    """Flat-shaded synthetic frame: dark carpet, white lines, bright ball disc."""
    w, h = intr.image_width, intr.image_height
    f = intr.focal
    img = np.full((h, w), BACKGROUND, dtype=np.float32)
    scale = 1 << _SUBPIXEL_BITS

    quads = field.strip_quads
    k = len(quads)
    pc = to_camera(pose, cam, intr, quads.reshape(-1, 2)).reshape(k, 4, 3)
    depth = pc[:, :, 2]
    mask = np.zeros((h, w), dtype=np.uint8)
    for i in range(k):
        if np.all(depth[i] < NEAR_PLANE):
            continue
        poly = pc[i] if np.all(depth[i] >= NEAR_PLANE) else _clip_near(pc[i])
        if len(poly) < 3:
            continue
        u = w / 2 + f * poly[:, 0] / poly[:, 2] - 0.5
        v = h / 2 + f * poly[:, 1] / poly[:, 2] - 0.5
        if u.max() < -1 or u.min() > w or v.max() < -1 or v.min() > h:
            continue
        # clamp far outside the image only to keep the fixed-point coordinates in int32
        u = np.clip(u, -_COORD_LIMIT, _COORD_LIMIT)
        v = np.clip(v, -_COORD_LIMIT, _COORD_LIMIT)
        pts = np.round(np.column_stack([u, v]) * scale).astype(np.int32)
        cv2.fillPoly(mask, [pts], 1, lineType=cv2.LINE_8, shift=_SUBPIXEL_BITS)
        cv2.polylines(mask, [pts], True, 1, thickness=1, lineType=cv2.LINE_8, shift=_SUBPIXEL_BITS)
    img[mask > 0] = LINE_INTENSITY

    bc = to_camera(pose, cam, intr, [(ball[0], ball[1], field.ball_radius)])[0]
    if bc[2] > NEAR_PLANE:
        bu = w / 2 + f * bc[0] / bc[2]
        bv = h / 2 + f * bc[1] / bc[2]
        br = f * field.ball_radius / bc[2]
        c0, c1 = max(int(math.floor(bu - br)), 0), min(int(math.ceil(bu + br)) + 1, w)
        r0, r1 = max(int(math.floor(bv - br)), 0), min(int(math.ceil(bv + br)) + 1, h)
        if c0 < c1 and r0 < r1:
            cols = np.arange(c0, c1) + 0.5
            rows = np.arange(r0, r1) + 0.5
            disc = (cols[None, :] - bu) ** 2 + (rows[:, None] - bv) ** 2 <= br * br
            img[r0:r1, c0:c1][disc] = BALL_INTENSITY

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape).astype(np.float32)
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return GrayImage(w, h, pixels)
