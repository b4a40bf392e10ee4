"""Episode scoring and 300-step epoch aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .env import HeadControlEnv, Outcome

MAX_DURATION = 20
EPOCH_STEPS = 300


@dataclass(frozen=True)
class SuccessScore:
    value: float
    degenerate: bool = False

    def __float__(self):
        return self.value


def success_rate(observed, desired) -> SuccessScore:
    """Fraction of ``desired`` landmark ids that appear in ``observed``.

    An empty desired set scores 1.0 and is flagged degenerate.
    """
    desired = frozenset(desired)
    if not desired:
        return SuccessScore(1.0, True)
    return SuccessScore(len(desired & frozenset(observed)) / len(desired))


def durations(outcome: Outcome, steps: int, cap: int = MAX_DURATION):
    """(success_duration, ball_loss_duration); an event that never happened reads as ``cap``."""
    steps = min(max(int(steps), 1), cap)
    success = steps if outcome is Outcome.Success else cap
    lost = steps if outcome is Outcome.BallLost else cap
    return success, lost


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    terminal_step: int  # global 0-based index of the episode's last step
    outcome: str
    steps_taken: int
    success_rate: float
    success_duration: int
    ball_loss_duration: int
    total_reward: float
    degenerate: bool = False
    cumulative_success_rate: float = math.nan

    def validate(self, cap=MAX_DURATION):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success_rate {self.success_rate} outside [0, 1]")
        for name in ("success_duration", "ball_loss_duration"):
            v = getattr(self, name)
            if not 1 <= v <= cap:
                raise ValueError(f"{name} {v} outside [1, {cap}]")
        return self


def episode_record(env: HeadControlEnv, episode: int, terminal_step: int, total_reward: float) -> EpisodeRecord:
    """Score the finished episode currently held by ``env``."""
    if not env.done:
        raise ValueError("episode still running")
    desired = env.desired_ids()
    final = success_rate(env.visible_ids(), desired)
    cumulative = success_rate(env.cumulative_ids(), desired)
    steps = env.state.t
    sd, bd = durations(env.outcome, steps, env.cfg.max_steps)
    return EpisodeRecord(episode, terminal_step, env.outcome.value, steps, final.value, sd, bd,
                         float(total_reward), final.degenerate, cumulative.value).validate(env.cfg.max_steps)


@dataclass(frozen=True)
class EpochSummary:
    epoch: int
    n_episodes: int
    mean_success_rate: float
    mean_success_duration: float
    mean_ball_loss_duration: float

    @property
    def empty(self):
        return self.n_episodes == 0


def epoch_aggregate(records, epoch_size: int = EPOCH_STEPS, n_epochs: int | None = None):
    """Per-window means, episodes assigned by the window holding their terminal step.

    Windows with no finished episode are kept as ``n_episodes == 0`` rows
    with NaN means, so the epoch index stays aligned with training steps.
    """
    if epoch_size < 1:
        raise ValueError("epoch_size must be >= 1")
    records = list(records)
    steps = [r.terminal_step for r in records]
    if any(b < a for a, b in zip(steps, steps[1:])):
        raise ValueError("records must be ordered by terminal step")
    if n_epochs is None:
        n_epochs = steps[-1] // epoch_size + 1 if records else 0
    buckets = [[] for _ in range(n_epochs)]
    for r in records:
        e = r.terminal_step // epoch_size
        if e < n_epochs:
            buckets[e].append(r)
    out = []
    for e, rs in enumerate(buckets):
        if rs:
            out.append(EpochSummary(e, len(rs),
                                    float(np.mean([r.success_rate for r in rs])),
                                    float(np.mean([r.success_duration for r in rs])),
                                    float(np.mean([r.ball_loss_duration for r in rs]))))
        else:
            out.append(EpochSummary(e, 0, math.nan, math.nan, math.nan))
    return out


def mean_success(records) -> float:
    records = list(records)
    return float(np.mean([r.success_rate for r in records])) if records else math.nan


# -- CSV ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_records_csv(path, records):
    names = [f.name for f in fields(EpisodeRecord)]
    return write_rows(path, names, ([getattr(r, n) for n in names] for r in records))


def read_records_csv(path):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpisodeRecord(
                int(row["episode"]), int(row["terminal_step"]), row["outcome"], int(row["steps_taken"]),
                float(row["success_rate"]), int(row["success_duration"]), int(row["ball_loss_duration"]),
                float(row["total_reward"]), bool(int(row["degenerate"])),
                float(row["cumulative_success_rate"]) if row["cumulative_success_rate"] else math.nan))
    return out


def write_epochs_csv(path, epochs):
    names = ["epoch", "n_episodes", "mean_success_rate", "mean_success_duration", "mean_ball_loss_duration"]
    return write_rows(path, names, ([getattr(e, n) for n in names] for e in epochs))


def read_csv_columns(path):
    """Whole CSV as {column: list of str}."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [r[k] for r in rows] for k in rows[0]}


def records_summary(records):
    records = list(records)
    outcomes = {o.value: 0 for o in Outcome if o is not Outcome.Running}
    for r in records:
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
    return {
        "episodes": len(records),
        "mean_success_rate": mean_success(records),
        "mean_cumulative_success_rate": float(np.mean([r.cumulative_success_rate for r in records]))
        if records else math.nan,
        "mean_success_duration": float(np.mean([r.success_duration for r in records])) if records else math.nan,
        "mean_ball_loss_duration": float(np.mean([r.ball_loss_duration for r in records]))
        if records else math.nan,
        "mean_total_reward": float(np.mean([r.total_reward for r in records])) if records else math.nan,
        **{f"outcome_{k}": v for k, v in outcomes.items()},
    }


def as_dict(record: EpisodeRecord):
    return asdict(record)
