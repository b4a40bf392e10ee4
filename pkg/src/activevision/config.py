"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment, blank lines are ignored. Angles
are given in degrees. Unknown keys are rejected; missing keys keep their
defaults. ``dumps`` writes every key, so ``loads(dumps(cfg)) == cfg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .belief import RangeBearingNoise, UkfParams
from .camera import CameraIntrinsics, VisibilityThresholds
from .dqn.agent import TrainerConfig
from .env import EnvConfig
from .errors import ConfigurationError
from .field import FieldDimensions, FieldModel, build_field
from .planner import ViewpointGrid
from .seeding import MAX_SEED


@dataclass(frozen=True)
class RunConfig:
    # field
    field_length: float = 9.0
    field_width: float = 6.0
    goal_area_length: float = 1.0
    goal_area_width: float = 3.0
    center_circle_radius: float = 0.75
    line_sample_spacing: float = 0.5
    ball_radius: float = 0.07
    line_width: float = 0.05
    # camera
    image_width: int = 160
    image_height: int = 120
    horizontal_fov_deg: float = 60.0
    mount_height: float = 0.55
    mount_forward_offset: float = 0.05
    # detection distance per landmark type, metres
    vis_lcorner: float = 4.0
    vis_tjunction: float = 4.0
    vis_linepoint: float = 3.0
    vis_boundarypoint: float = 5.0
    # belief
    ukf_alpha: float = 0.1
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0
    range_noise_fraction: float = 0.1
    bearing_noise_deg: float = 2.0
    min_range_sigma: float = 0.01
    # planner grid
    pan_points: int = 10
    tilt_points: int = 4
    # environment
    step_size_deg: float = 3.0
    success_tolerance_deg: float = 0.0  # 0 means "one step"
    stack: int = 1
    diagonal_actions: bool = False
    max_steps: int = 20
    initial_sigma_xy: float = 0.1
    initial_sigma_theta: float = 0.1
    ball_margin: float = 2.0
    render_noise: float = 0.0
    max_reset_attempts: int = 1000
    # trainer
    total_steps: int = 30_000
    batch_size: int = 32
    learning_rate: float = 5e-4
    gamma: float = 0.99
    target_update: int = 10_000
    eps_start: float = 1.0
    eps_end: float = 0.02
    eps_fraction: float = 0.5
    learning_starts: int = 1_000
    train_freq: int = 1
    buffer_capacity: int = 1_000_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_eps: float = 1e-6
    huber_delta: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    checkpoint_every: int = 0
    # evaluation
    epoch_steps: int = 300
    eval_episodes: int = 100
    robustness_sigmas: tuple = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
    robustness_episodes: int = 100
    robustness_replan: str = "every_step"
    seed: int = 0

    # -- component builders ---------------------------------------------
    def dims(self):
        return FieldDimensions(self.field_length, self.field_width, self.goal_area_length,
                               self.goal_area_width, self.center_circle_radius, self.line_sample_spacing)

    def field_model(self) -> FieldModel:
        return build_field(self.dims(), ball_radius=self.ball_radius, line_width=self.line_width)

    def intrinsics(self):
        return CameraIntrinsics(self.image_width, self.image_height, math.radians(self.horizontal_fov_deg),
                                self.mount_height, self.mount_forward_offset)

    def thresholds(self):
        return VisibilityThresholds(self.vis_lcorner, self.vis_tjunction, self.vis_linepoint,
                                    self.vis_boundarypoint)

    def ukf_params(self):
        return UkfParams(self.ukf_alpha, self.ukf_beta, self.ukf_kappa)

    def noise(self):
        return RangeBearingNoise(self.range_noise_fraction, math.radians(self.bearing_noise_deg),
                                 self.min_range_sigma)

    def grid(self):
        return ViewpointGrid(self.pan_points, self.tilt_points)

    def env_config(self):
        tol = math.radians(self.success_tolerance_deg) if self.success_tolerance_deg > 0 else None
        return EnvConfig(math.radians(self.step_size_deg), tol, self.stack, self.diagonal_actions,
                         self.max_steps, self.initial_sigma_xy, self.initial_sigma_theta, self.ball_margin,
                         self.render_noise, self.max_reset_attempts)

    def trainer_config(self):
        names = {f.name for f in fields(TrainerConfig)}
        return TrainerConfig(**{k: getattr(self, k) for k in names})

    def validate(self):
        checks = [
            (self.dims().validate, {"length": "field_length", "width": "field_width"}),
            (self.intrinsics().validate, {"horizontal_fov": "horizontal_fov_deg"}),
            (self.thresholds().validate, {n: "vis_" + n for n in
                                          ("lcorner", "tjunction", "linepoint", "boundarypoint")}),
            (lambda: self.ukf_params().validate(3), {}),
            (self.grid().validate, {}),
            (self.env_config().validate, {"step_size": "step_size_deg",
                                          "success_tolerance": "success_tolerance_deg"}),
            (self.trainer_config().validate, {}),
        ]
        for check, rename in checks:
            try:
                check()
            except ConfigurationError as e:
                key = rename.get(e.key, e.key)
                raise ConfigurationError(key, str(e).split(": ", 1)[-1]) from None
        if not self.ball_radius > 0:
            raise ConfigurationError("ball_radius", "must be > 0")
        if not self.line_width > 0:
            raise ConfigurationError("line_width", "must be > 0")
        if not (self.range_noise_fraction > 0 and self.bearing_noise_deg > 0 and self.min_range_sigma > 0):
            raise ConfigurationError("range_noise_fraction", "noise parameters must be > 0")
        if self.render_noise < 0:
            raise ConfigurationError("render_noise", "must be >= 0")
        if self.success_tolerance_deg < 0:
            raise ConfigurationError("success_tolerance_deg", "must be >= 0")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every", "must be >= 0")
        for k in ("epoch_steps", "eval_episodes", "robustness_episodes"):
            if getattr(self, k) < 1:
                raise ConfigurationError(k, "must be >= 1")
        if not self.robustness_sigmas or any(not (s >= 0 and math.isfinite(s)) for s in self.robustness_sigmas):
            raise ConfigurationError("robustness_sigmas", "must be a non-empty list of finite values >= 0")
        if self.robustness_replan not in ("every_step", "once"):
            raise ConfigurationError("robustness_replan", "must be 'every_step' or 'once'")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigurationError("seed", "must be an unsigned 64-bit integer")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(key, text):
    default = getattr(_DEFAULTS, key)
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if isinstance(default, tuple):
            return tuple(float(p) for p in text.split(",") if p.strip())
        return text
    except ValueError:
        raise ConfigurationError(key, f"cannot parse {text!r} as {type(default).__name__}") from None


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def parse_overrides(pairs, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key=value`` strings (or (key, value) tuples) on top of ``base``."""
    base = RunConfig() if base is None else base
    changes = {}
    for item in pairs:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigurationError(item.strip() or "<empty>", "expected key = value")
            key, value = item.split("=", 1)
        else:
            key, value = item
        key, value = key.strip(), str(value).strip()
        if key not in _FIELDS:
            raise ConfigurationError(key, "unknown configuration key")
        changes[key] = _parse_value(key, value)
    return replace(base, **changes)


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    pairs, seen = [], set()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}", f"expected key = value, got {raw.strip()!r}")
        key = line.split("=", 1)[0].strip()
        if key in seen:
            raise ConfigurationError(key, f"duplicate key on line {n}")
        seen.add(key)
        pairs.append(line)
    return parse_overrides(pairs, base).validate()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("config", f"{path} does not exist")
    return loads(path.read_text())


def dumps(cfg: RunConfig) -> str:
    lines = ["# resolved run configuration"]
    for name in _FIELDS:
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def echo_config(cfg: RunConfig, out_dir) -> Path:
    path = Path(out_dir) / "config.resolved"
    path.write_text(dumps(cfg))
    return path
