"""Soccer field geometry and the point landmarks a robot can observe.

Coordinates are field-centred, x toward the opponent goal, y to the left,
metres. Field lines are represented by point samples so that each
observation is a single landmark with an identity.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


CIRCLE_SEGMENTS = 64


class LandmarkType(enum.IntEnum):
    LCorner = 0
    TJunction = 1
    LinePoint = 2
    BoundaryPoint = 3


@dataclass(frozen=True)
class FieldDimensions:
    length: float = 9.0
    width: float = 6.0
    goal_area_length: float = 1.0
    goal_area_width: float = 3.0
    center_circle_radius: float = 0.75
    line_sample_spacing: float = 0.5

    def validate(self):
        for name in ("length", "width", "goal_area_length", "goal_area_width",
                     "center_circle_radius", "line_sample_spacing"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(name, f"must be > 0, got {value!r}")
        if self.goal_area_length >= self.length / 2:
            raise ConfigurationError("goal_area_length", "must be < half the field length")
        if self.goal_area_width >= self.width:
            raise ConfigurationError("goal_area_width", "must be < field width")
        if self.center_circle_radius >= min(self.width / 2, self.length / 2 - self.goal_area_length):
            raise ConfigurationError("center_circle_radius", "circle does not fit inside the field")


@dataclass(frozen=True)
class Landmark:
    id: int
    kind: LandmarkType
    position: tuple[float, float]


@dataclass(frozen=True)
class FieldModel:
    dims: FieldDimensions
    landmarks: tuple[Landmark, ...]
    ball_radius: float = 0.07
    line_width: float = 0.05
    # (N, 2) positions and (N,) kinds, aligned with ``landmarks``
    positions: np.ndarray = field(repr=False, compare=False, default=None)
    kinds: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        pos = np.array([lm.position for lm in self.landmarks], dtype=float).reshape(-1, 2)
        kinds = np.array([int(lm.kind) for lm in self.landmarks], dtype=int)
        pos.setflags(write=False)
        kinds.setflags(write=False)
        index = {lm.id: i for i, lm in enumerate(self.landmarks)}
        if len(index) != len(self.landmarks):
            raise ConfigurationError("landmarks", "landmark ids must be unique")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.landmarks)

    def segments(self):
        """Straight field lines as ((x0, y0), (x1, y1)) pairs, boundary first."""
        return _boundary_segments(self.dims) + _interior_segments(self.dims)

    def circle(self):
        """Centre circle as (centre, radius)."""
        return (0.0, 0.0), self.dims.center_circle_radius

    @functools.cached_property
    def strip_quads(self):
        """Ground quads (K, 4, 2) covering every painted line, ``line_width`` wide."""
        hw = self.line_width / 2
        quads = []
        for (x0, y0), (x1, y1) in self.segments():
            length = math.hypot(x1 - x0, y1 - y0)
            ux, uy = (x1 - x0) / length, (y1 - y0) / length
            nx, ny = -uy, ux
            ax, ay = x0 - ux * hw, y0 - uy * hw
            bx, by = x1 + ux * hw, y1 + uy * hw
            quads.append([(ax + nx * hw, ay + ny * hw), (bx + nx * hw, by + ny * hw),
                          (bx - nx * hw, by - ny * hw), (ax - nx * hw, ay - ny * hw)])
        (cx, cy), r = self.circle()
        ang = np.linspace(0, 2 * math.pi, CIRCLE_SEGMENTS + 1)
        for a0, a1 in zip(ang[:-1], ang[1:]):
            quads.append([(cx + (r + hw) * math.cos(a0), cy + (r + hw) * math.sin(a0)),
                          (cx + (r + hw) * math.cos(a1), cy + (r + hw) * math.sin(a1)),
                          (cx + (r - hw) * math.cos(a1), cy + (r - hw) * math.sin(a1)),
                          (cx + (r - hw) * math.cos(a0), cy + (r - hw) * math.sin(a0))])
        quads = np.array(quads, dtype=float)
        quads.setflags(write=False)
        return quads

    def index_of(self, landmark_id) -> int:
        return self._index[landmark_id]

    def by_id(self, landmark_id) -> Landmark:
        return self.landmarks[self._index[landmark_id]]


def _boundary_segments(d):
    hx, hy = d.length / 2, d.width / 2
    corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    return [(corners[i], corners[(i + 1) % 4]) for i in range(4)]


def _interior_segments(d):
    hx, hy = d.length / 2, d.width / 2
    gx, gy = d.goal_area_length, d.goal_area_width / 2
    segs = [((0.0, -hy), (0.0, hy))]
    for s in (-1.0, 1.0):
        front = s * (hx - gx)
        segs.append(((s * hx, -gy), (front, -gy)))
        segs.append(((s * hx, gy), (front, gy)))
        segs.append(((front, -gy), (front, gy)))
    return segs


def _sample_segment(p0, p1, spacing):
    """Samples at ``spacing`` outward from the midpoint, plus both endpoints."""
    (x0, y0), (x1, y1) = p0, p1
    half = math.hypot(x1 - x0, y1 - y0) / 2
    mx, my = (x0 + x1) / 2, (y0 + y1) / 2
    ux, uy = (x1 - x0) / (2 * half), (y1 - y0) / (2 * half)
    n = int(math.floor(half / spacing + 1e-9))
    out = [(x0, y0), (x1, y1)]
    for k in range(-n, n + 1):
        out.append((mx + k * spacing * ux, my + k * spacing * uy))
    return out


def _sample_circle(radius, spacing):
    n = 2 * max(2, math.ceil(2 * math.pi * radius / (2 * spacing)))
    return [(radius * math.cos(2 * math.pi * k / n), radius * math.sin(2 * math.pi * k / n))
            for k in range(n)]


def _key(p):
    return (round(p[0], 9) + 0.0, round(p[1], 9) + 0.0)


def build_field(dims: FieldDimensions | None = None, ball_radius=0.07, line_width=0.05) -> FieldModel:
    """Enumerate every landmark of a rectangular field.

    Junctions take precedence over line samples at the same location, and
    each location appears once. Ordering is (kind, x, y).
    """
    dims = FieldDimensions() if dims is None else dims
    dims.validate()
    hx, hy = dims.length / 2, dims.width / 2
    gx, gy = dims.goal_area_length, dims.goal_area_width / 2
    r = dims.center_circle_radius

    found: dict[tuple[float, float], tuple[LandmarkType, tuple[float, float]]] = {}

    def add(kind, p):
        k = _key(p)
        if k not in found:
            found[k] = (kind, (float(p[0]) + 0.0, float(p[1]) + 0.0))

    for sx in (-1, 1):
        for sy in (-1, 1):
            add(LandmarkType.LCorner, (sx * hx, sy * hy))
            add(LandmarkType.LCorner, (sx * (hx - gx), sy * gy))
    # centre circle crossing the halfway line
    for sy in (-1, 1):
        add(LandmarkType.LCorner, (0.0, sy * r))

    for sx in (-1, 1):
        for sy in (-1, 1):
            add(LandmarkType.TJunction, (sx * hx, sy * gy))
    for sy in (-1, 1):
        add(LandmarkType.TJunction, (0.0, sy * hy))

    spacing = dims.line_sample_spacing
    for p0, p1 in _interior_segments(dims):
        for p in _sample_segment(p0, p1, spacing):
            add(LandmarkType.LinePoint, p)
    for p in _sample_circle(r, spacing):
        add(LandmarkType.LinePoint, p)

    for p0, p1 in _boundary_segments(dims):
        for p in _sample_segment(p0, p1, spacing):
            add(LandmarkType.BoundaryPoint, p)

    entries = sorted(found.values(), key=lambda e: (int(e[0]), _key(e[1])))
    landmarks = tuple(Landmark(i, kind, pos) for i, (kind, pos) in enumerate(entries))
    return FieldModel(dims, landmarks, ball_radius=ball_radius, line_width=line_width)


def landmarks_of_type(field_model: FieldModel, kind: LandmarkType) -> list[Landmark]:
    return [lm for lm in field_model.landmarks if lm.kind == kind]


def export_landmarks_csv(field_model: FieldModel, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "kind", "x", "y"])
        for lm in field_model.landmarks:
            writer.writerow([lm.id, lm.kind.name, repr(lm.position[0]), repr(lm.position[1])])
    return path
