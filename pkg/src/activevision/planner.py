"""Best-viewpoint search over the discretised pan/tilt grid.

For every candidate head position the belief is copied, every landmark
expected to be visible from the belief mean is fused with an unscented
update, and the entropy of the result scores the viewpoint. The winner is
the lowest-entropy candidate from which the ball is visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import (GaussianBelief, RangeBearingNoise, UkfParams, entropy, expected_observations,
                     fold_observations)
from .camera import (PAN_LIMITS, TILT_LIMITS, CameraIntrinsics, CameraPosition, VisibilityThresholds,
                     ball_visible, camera_frame)
from .errors import ConfigurationError
from .field import FieldModel


@dataclass(frozen=True)
class ViewpointGrid:
    pan_points: int = 10
    tilt_points: int = 4
    pan_range: tuple[float, float] = PAN_LIMITS
    tilt_range: tuple[float, float] = TILT_LIMITS

    def validate(self):
        if self.pan_points < 1:
            raise ConfigurationError("pan_points", "must be >= 1")
        if self.tilt_points < 1:
            raise ConfigurationError("tilt_points", "must be >= 1")
        lo, hi = self.pan_range
        if not PAN_LIMITS[0] <= lo < hi <= PAN_LIMITS[1]:
            raise ConfigurationError("pan_range", f"must lie within {PAN_LIMITS}")
        lo, hi = self.tilt_range
        if not TILT_LIMITS[0] <= lo < hi <= TILT_LIMITS[1]:
            raise ConfigurationError("tilt_range", f"must lie within {TILT_LIMITS}")

    def __len__(self):
        return self.pan_points * self.tilt_points


@dataclass(frozen=True)
class CandidateScore:
    cam: CameraPosition
    entropy: float
    ball_visible: bool


@dataclass(frozen=True)
class PlanResult:
    best: CameraPosition
    best_entropy: float
    best_index: int
    per_candidate: tuple[CandidateScore, ...]
    fallback: bool = False


def _centres(lo, hi, n):
    step = (hi - lo) / n
    return [lo + (i + 0.5) * step for i in range(n)]


def enumerate_viewpoints(grid: ViewpointGrid | None = None) -> list[CameraPosition]:
    """Cell centres of a uniform partition of each axis; tilt outer, pan inner."""
    grid = ViewpointGrid() if grid is None else grid
    grid.validate()
    pans = _centres(*grid.pan_range, grid.pan_points)
    tilts = _centres(*grid.tilt_range, grid.tilt_points)
    return [CameraPosition(p, t) for t in tilts for p in pans]


def _angle_to_ball(pose, cam, intr, ball, ball_radius):
    centre, axes = camera_frame(pose, cam, intr)
    d = np.array([ball[0], ball[1], ball_radius]) - centre
    c = float(axes[2] @ d) / float(np.linalg.norm(d))
    return math.acos(max(-1.0, min(1.0, c)))


def best_viewpoint(belief: GaussianBelief, ball, field: FieldModel,
                   grid: ViewpointGrid | None = None,
                   thr: VisibilityThresholds | None = None,
                   intr: CameraIntrinsics | None = None,
                   ukf_params: UkfParams | None = None,
                   noise: RangeBearingNoise | None = None,
                   ball_margin: float = 2.0) -> PlanResult:
    grid = ViewpointGrid() if grid is None else grid
    thr = VisibilityThresholds() if thr is None else thr
    intr = CameraIntrinsics() if intr is None else intr
    ukf_params = UkfParams() if ukf_params is None else ukf_params
    noise = RangeBearingNoise() if noise is None else noise
    pose = belief.pose

    scores = []
    best_i, best_h = -1, math.inf
    for i, cam in enumerate(enumerate_viewpoints(grid)):
        seen = ball_visible(pose, cam, intr, ball, field.ball_radius, ball_margin)
        post = fold_observations(belief, expected_observations(belief, cam, field, thr, intr, noise),
                                 field, ukf_params)
        h = entropy(post)
        scores.append(CandidateScore(cam, h, seen))
        if seen and h < best_h:
            best_i, best_h = i, h

    if best_i >= 0:
        return PlanResult(scores[best_i].cam, best_h, best_i, tuple(scores))

    # nobody sees the ball: aim the optical axis as close to it as possible
    angles = [_angle_to_ball(pose, s.cam, intr, ball, field.ball_radius) for s in scores]
    best_i = int(np.argmin(angles))
    return PlanResult(scores[best_i].cam, scores[best_i].entropy, best_i, tuple(scores), fallback=True)
