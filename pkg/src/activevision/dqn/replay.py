"""Proportional prioritized experience replay on a numpy sum-tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError

REWARD_ALPHABET = (-2.0, -1.0, 0.0, 1.0)


@dataclass(frozen=True)
class Experience:
    s: np.ndarray  # (stack, H, W) uint8
    a: int
    r: float
    s_next: np.ndarray
    done: bool

    def validate(self, n_actions=None):
        if float(self.r) not in REWARD_ALPHABET:
            raise ValueError(f"reward {self.r!r} outside {REWARD_ALPHABET}")
        if self.a < 0 or (n_actions is not None and self.a >= n_actions):
            raise ValueError(f"action {self.a} outside [0, {n_actions})")
        if self.s.shape != self.s_next.shape:
            raise ValueError("s and s_next shapes differ")


@dataclass(frozen=True)
class Batch:
    s: np.ndarray       # (n, stack, H, W) uint8
    a: np.ndarray       # (n,) int64
    r: np.ndarray       # (n,) float64
    s_next: np.ndarray
    done: np.ndarray    # (n,) bool

    def __len__(self):
        return len(self.a)

    @classmethod
    def of(cls, experiences):
        return cls(np.stack([e.s for e in experiences]),
                   np.array([e.a for e in experiences], dtype=np.int64),
                   np.array([e.r for e in experiences], dtype=np.float64),
                   np.stack([e.s_next for e in experiences]),
                   np.array([e.done for e in experiences], dtype=bool))


class SumTree:
    """Binary tree whose internal nodes hold the sum of their children.

    Leaves live at ``[size, 2 * size)`` with ``size`` the next power of two
    at or above ``capacity``. Parents are recomputed from their children on
    every write, so the root never accumulates rounding drift.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("buffer_capacity", "must be >= 1")
        self.capacity = capacity
        self.size = 1 << max(0, (capacity - 1).bit_length())
        self.tree = np.zeros(2 * self.size)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self, count=None):
        end = self.size + (self.capacity if count is None else count)
        return self.tree[self.size:end]

    def update(self, slots, values):
        slots = np.atleast_1d(np.asarray(slots, dtype=np.int64))
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        if np.any(slots < 0) or np.any(slots >= self.capacity):
            raise IndexError("slot outside tree capacity")
        nodes = slots + self.size
        self.tree[nodes] = values  # last write wins for duplicates
        nodes = np.unique(nodes >> 1)
        while nodes[0] >= 1:
            self.tree[nodes] = self.tree[2 * nodes] + self.tree[2 * nodes + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes >> 1)

    def find(self, mass):
        """Leaf slots whose cumulative interval contains each value of ``mass``."""
        mass = np.array(mass, dtype=np.float64, ndmin=1)
        node = np.ones(len(mass), dtype=np.int64)
        while node[0] < self.size:
            left = 2 * node
            lv = self.tree[left]
            right = mass >= lv
            mass = np.where(right, mass - lv, mass)
            node = np.where(right, left + 1, left)
        return node - self.size


class PrioritizedBuffer:
    """FIFO ring of transitions, sampled with probability proportional to priority**alpha.

    Every stored transition gets a monotonically increasing id; its slot is
    ``id % capacity``. Sampling returns ids, so write-backs aimed at a
    transition that has since been evicted can be recognised and dropped.
    """

    def __init__(self, capacity: int = 1_000_000, alpha: float = 0.6, eps: float = 1e-6,
                 n_actions: int | None = None):
        if not alpha >= 0:
            raise ConfigurationError("per_alpha", "must be >= 0")
        if not eps > 0:
            raise ConfigurationError("per_eps", "priority floor must be > 0")
        self.capacity = capacity
        self.alpha = alpha
        self.eps = eps
        self.n_actions = n_actions
        self.tree = SumTree(capacity)
        self._prio = np.zeros(capacity)
        self._items: list[Experience | None] = [None] * capacity
        self.next_id = 0
        self.max_priority = 1.0
        self.stale_updates = 0

    def __len__(self):
        return min(self.next_id, self.capacity)

    def add(self, exp: Experience) -> int:
        exp.validate(self.n_actions)
        tid = self.next_id
        slot = tid % self.capacity
        self._items[slot] = exp
        self._prio[slot] = self.max_priority
        self.tree.update(slot, self.max_priority ** self.alpha)
        self.next_id += 1
        return tid

    def priorities(self):
        """Raw priorities of stored transitions, by slot."""
        return self._prio[:len(self)].copy()

    def probabilities(self):
        p = self._prio[:len(self)] ** self.alpha
        return p / p.sum()

    def slots_of(self, ids):
        return np.asarray(ids, dtype=np.int64) % self.capacity

    def is_live(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        return (ids >= self.next_id - len(self)) & (ids < self.next_id)

    def draw(self, n: int, rng):
        """``n`` independent proportional draws (with replacement): (ids, probabilities)."""
        size = len(self)
        if size == 0:
            raise UsageError("cannot sample from an empty buffer")
        total = self.tree.total
        u = rng.random(n) * total
        u = np.minimum(u, np.nextafter(total, 0.0))
        slots = np.minimum(self.tree.find(u), size - 1)
        p = self.tree.leaves()[slots] / total
        base = self.next_id - size
        ids = base + (slots - base) % self.capacity
        return ids, p

    def sample(self, n: int, beta: float, rng):
        """Minibatch of ``n`` transitions with normalized importance weights (N p)^-beta."""
        if n < 1:
            raise UsageError("batch size must be >= 1")
        size = len(self)
        if size < n:
            raise UsageError(f"buffer holds {size} transitions, cannot sample {n}")
        ids, p = self.draw(n, rng)
        w = (size * p) ** (-beta)
        w = w / w.max()
        batch = Batch.of([self._items[s] for s in self.slots_of(ids)])
        return batch, ids, w

    def update_priorities(self, ids, td_errors):
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        td = np.atleast_1d(np.asarray(td_errors, dtype=np.float64))
        if ids.shape != td.shape:
            raise ValueError("ids and td_errors must have the same length")
        if np.any(ids >= self.next_id) or np.any(ids < 0):
            raise UsageError("priority update for a transition that was never stored")
        if not np.all(np.isfinite(td)):
            raise ValueError("td errors must be finite")
        live = self.is_live(ids)
        self.stale_updates += int(np.count_nonzero(~live))
        if not live.any():
            return
        ids, prio = ids[live], np.abs(td[live]) + self.eps
        slots = self.slots_of(ids)
        self._prio[slots] = prio
        self.tree.update(slots, prio ** self.alpha)
        self.max_priority = max(self.max_priority, float(prio.max()))


def per_sample(buffer: PrioritizedBuffer, n: int, beta: float, rng):
    return buffer.sample(n, beta, rng)


def per_update_priorities(buffer: PrioritizedBuffer, indices, td_errors):
    buffer.update_priorities(indices, td_errors)
