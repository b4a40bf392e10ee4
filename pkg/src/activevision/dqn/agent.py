"""Double-DQN learner: targets, Huber loss, Adam, epsilon-greedy acting and the training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..env import HeadControlEnv, Outcome
from ..errors import ConfigurationError, TrainingError
from ..metrics import EpisodeRecord, episode_record
from .network import (PARAM_ORDER, Architecture, init_params, q_backward, q_forward,
                      zeros_like_params)
from .replay import Batch, Experience, PrioritizedBuffer


@dataclass(frozen=True)
class TrainerConfig:
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
    grad_clip: float = 10.0  # global L2 norm; 0 disables

    def validate(self):
        positive_ints = ("total_steps", "batch_size", "target_update", "train_freq", "buffer_capacity")
        for k in positive_ints:
            if getattr(self, k) < 1:
                raise ConfigurationError(k, "must be >= 1")
        if self.learning_starts < 0:
            raise ConfigurationError("learning_starts", "must be >= 0")
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning_rate", "must be >= 0")
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError("gamma", "must be in [0, 1]")
        for k in ("eps_start", "eps_end"):
            if not 0 <= getattr(self, k) <= 1:
                raise ConfigurationError(k, "must be in [0, 1]")
        if not 0 < self.eps_fraction <= 1:
            raise ConfigurationError("eps_fraction", "must be in (0, 1]")
        if not self.per_alpha >= 0:
            raise ConfigurationError("per_alpha", "must be >= 0")
        for k in ("per_beta_start", "per_beta_end"):
            if not 0 <= getattr(self, k) <= 1:
                raise ConfigurationError(k, "must be in [0, 1]")
        if not self.per_eps > 0:
            raise ConfigurationError("per_eps", "must be > 0")
        if not self.huber_delta > 0:
            raise ConfigurationError("huber_delta", "must be > 0")
        for k in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, k) < 1:
                raise ConfigurationError(k, "must be in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigurationError("adam_eps", "must be > 0")
        if not self.grad_clip >= 0:
            raise ConfigurationError("grad_clip", "must be >= 0")
        if self.batch_size > self.buffer_capacity:
            raise ConfigurationError("batch_size", "cannot exceed buffer_capacity")


# -- schedules -----------------------------------------------------------

def linear_schedule(start, end, duration, step):
    if duration <= 0:
        return end
    frac = min(max(step / duration, 0.0), 1.0)
    return start + frac * (end - start)


def epsilon_at(cfg: TrainerConfig, step):
    if step < cfg.learning_starts:
        return 1.0
    return linear_schedule(cfg.eps_start, cfg.eps_end, cfg.eps_fraction * cfg.total_steps, step)


def beta_at(cfg: TrainerConfig, step):
    return linear_schedule(cfg.per_beta_start, cfg.per_beta_end, cfg.total_steps, step)


# -- targets and loss ----------------------------------------------------

def ddqn_target_from_q(r, done, q_online_next, q_target_next, gamma):
    """Y = r for terminal transitions, else r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
    r = np.asarray(r, dtype=np.float64)
    done = np.asarray(done, dtype=bool)
    a_star = np.argmax(np.asarray(q_online_next), axis=1)
    boot = np.asarray(q_target_next, dtype=np.float64)[np.arange(len(r)), a_star]
    return np.where(done, r, r + gamma * boot)


def ddqn_target(batch: Batch, online, target, gamma):
    if len(batch) == 0:
        raise ValueError("empty batch")
    return ddqn_target_from_q(batch.r, batch.done, q_forward(online, batch.s_next),
                              q_forward(target, batch.s_next), gamma)


def huber(x, delta=1.0):
    a = np.abs(x)
    return np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))


def loss_and_grads(params, s, a, y, weights, delta=1.0):
    """Importance-weighted mean Huber loss of Q(s, a) against y, its gradients, and the TD errors."""
    q, caches = q_forward(params, s, keep=True)
    n = len(a)
    q_sa = q[np.arange(n), a].astype(np.float64)
    td = q_sa - y
    w = np.asarray(weights, dtype=np.float64)
    loss = float(np.mean(w * huber(td, delta)))
    dq = np.zeros(q.shape, dtype=np.float64)
    dq[np.arange(n), a] = w * np.clip(td, -delta, delta) / n
    return loss, q_backward(params, caches, dq), td


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params, grads, lr):
        """In-place update of ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k in PARAM_ORDER:
            g = grads[k].astype(params[k].dtype, copy=False)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


# -- acting --------------------------------------------------------------

def greedy_action(params, state) -> int:
    """Argmax of the Q-vector; ties go to the lowest index."""
    return int(np.argmax(q_forward(params, state)))


def act_epsilon_greedy(params, state, eps, rng, n_actions=None) -> int:
    if not 0 <= eps <= 1:
        raise ValueError(f"epsilon {eps} outside [0, 1]")
    n_actions = n_actions or params["out.b"].shape[0]
    if rng.random() < eps:
        return int(rng.integers(n_actions))
    return greedy_action(params, state)


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


# -- training loop -------------------------------------------------------

@dataclass
class StepLog:
    step: int
    episode: int
    ep_reward: float
    loss: float
    epsilon: float


@dataclass
class TrainingHistory:
    metrics: list[StepLog] = dc_field(default_factory=list)
    records: list[EpisodeRecord] = dc_field(default_factory=list)
    losses: list[float] = dc_field(default_factory=list)


class Trainer:
    """Double-DQN with prioritized replay on a ``HeadControlEnv``.

    Each random stream is passed in explicitly: ``weights`` seeds the
    network, ``explore`` drives epsilon-greedy, ``buffer`` drives replay
    sampling. The environment owns its own generator.
    """

    def __init__(self, env: HeadControlEnv, cfg: TrainerConfig, weights_rng, explore_rng, buffer_rng,
                 dtype=np.float32):
        cfg.validate()
        self.env = env
        self.cfg = cfg
        h, w = env.intr.image_height, env.intr.image_width
        self.arch = Architecture(h, w, env.cfg.stack, env.n_actions)
        self.params = init_params(self.arch, weights_rng, dtype)
        self.target = copy_params(self.params)
        self.adam = Adam(self.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.buffer = PrioritizedBuffer(cfg.buffer_capacity, cfg.per_alpha, cfg.per_eps, env.n_actions)
        self.explore_rng = explore_rng
        self.buffer_rng = buffer_rng
        self.step_count = 0
        self.updates = 0
        self.history = TrainingHistory()

    def train_step(self) -> float:
        cfg = self.cfg
        if len(self.buffer) < max(cfg.batch_size, 1):
            raise TrainingError("buffer smaller than one minibatch", {"buffer": len(self.buffer)})
        batch, ids, w = self.buffer.sample(cfg.batch_size, beta_at(cfg, self.step_count), self.buffer_rng)
        y = ddqn_target(batch, self.params, self.target, cfg.gamma)
        loss, grads, td = loss_and_grads(self.params, batch.s, batch.a, y, w, cfg.huber_delta)
        norm = global_norm(grads)
        if not (math.isfinite(loss) and math.isfinite(norm)):
            raise TrainingError(f"non-finite loss at step {self.step_count}", {
                "step": self.step_count, "loss": loss, "grad_norm": norm,
                "targets": y.tolist(), "td": td.tolist(), "weights": w.tolist(),
                "param_norms": {k: float(np.linalg.norm(v)) for k, v in self.params.items()},
            })
        if cfg.grad_clip > 0 and norm > cfg.grad_clip:
            scale = cfg.grad_clip / norm
            grads = {k: g * scale for k, g in grads.items()}
        self.adam.step(self.params, grads, cfg.learning_rate)
        self.buffer.update_priorities(ids, td)
        self.updates += 1
        return loss

    def sync_target(self):
        self.target = copy_params(self.params)

    def run(self, on_episode=None, on_step=None):
        """Train for ``total_steps`` environment steps. Returns the history.

        ``on_episode(log, record)`` fires after every finished episode,
        ``on_step(step)`` after every environment step.
        """
        cfg, env = self.cfg, self.env
        obs = env.reset()
        episode, ep_reward, ep_losses = 0, 0.0, []
        for step in range(self.step_count, cfg.total_steps):
            self.step_count = step
            eps = epsilon_at(cfg, step)
            a = act_epsilon_greedy(self.params, obs, eps, self.explore_rng, env.n_actions)
            res = env.step(a)
            # a timeout truncates the episode; the state itself is not terminal
            terminal = res.outcome in (Outcome.Success, Outcome.BallLost)
            self.buffer.add(Experience(obs, a, res.reward, res.observation, terminal))
            ep_reward += res.reward
            if step >= cfg.learning_starts and step % cfg.train_freq == 0 \
                    and len(self.buffer) >= cfg.batch_size:
                loss = self.train_step()
                ep_losses.append(loss)
                self.history.losses.append(loss)
            if (step + 1) % cfg.target_update == 0:
                self.sync_target()
            if res.done:
                rec = episode_record(env, episode, step, ep_reward)
                self.history.records.append(rec)
                log = StepLog(step, episode, ep_reward, float(np.mean(ep_losses)) if ep_losses else math.nan, eps)
                self.history.metrics.append(log)
                if on_episode is not None:
                    on_episode(log, rec)
                episode += 1
                ep_reward, ep_losses = 0.0, []
                obs = env.reset()
            else:
                obs = res.observation
            if on_step is not None:
                on_step(step)
        self.step_count = cfg.total_steps
        return self.history
