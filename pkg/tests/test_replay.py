import numpy as np
import pytest
from hypothesis import given, strategies as st

from activevision import oracles as O
from activevision.dqn.replay import Batch, Experience, PrioritizedBuffer, SumTree
from activevision.errors import UsageError
from activevision.selftest import per_frequencies

Z = np.zeros((1, 2, 2), np.uint8)
# direct normalisation of (1, 2, 4) ** 0.6
LAW_124 = [0.20776573135761556, 0.3149139609718868, 0.4773203076704977]


def _filled(n, capacity=None, alpha=0.6):
    buf = PrioritizedBuffer(capacity or n, alpha=alpha)
    for i in range(n):
        buf.add(Experience(Z + i % 7, i % 4, -1.0, Z, False))
    return buf


class TestExperience:
    def test_reward_alphabet(self):
        with pytest.raises(ValueError):
            Experience(Z, 0, 0.5, Z, False).validate()

    def test_action_range(self):
        with pytest.raises(ValueError):
            Experience(Z, 4, 1.0, Z, False).validate(4)

    def test_batch_of(self):
        b = Batch.of([Experience(Z, 1, 1.0, Z, True), Experience(Z, 2, -2.0, Z, False)])
        assert len(b) == 2 and b.s.shape == (2, 1, 2, 2)
        assert b.done.tolist() == [True, False]


class TestSumTree:
    def test_find_boundaries(self):
        t = SumTree(3)
        t.update(np.arange(3), np.array([1.0, 2.0, 3.0]))
        assert t.total == 6.0
        assert t.find(np.array([0.0, 0.999, 1.0, 2.999, 3.0, 5.999])).tolist() == [0, 0, 1, 1, 2, 2]

    @given(values=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40), data=st.data())
    def test_total_and_scan(self, values, data):
        t = SumTree(len(values))
        t.update(np.arange(len(values)), np.array(values))
        assert t.total == pytest.approx(sum(values), abs=1e-9)
        if sum(values) > 0:
            u = data.draw(st.floats(0.0, 1.0, exclude_max=True))
            got = int(t.find(np.array([u * t.total]))[0])
            assert values[got] > 0


class TestPrioritizedBuffer:
    def test_probabilities_small_case(self):
        buf = _filled(3, alpha=1.0)
        buf.update_priorities([0, 1, 2], np.array([1.0, 1.0, 2.0]) - buf.eps)
        assert buf.probabilities() == pytest.approx([0.25, 0.25, 0.5])

    def test_law_golden(self):
        assert O.priority_law((1, 2, 4), 0.6).tolist() == pytest.approx(LAW_124, abs=1e-15)
        buf = _filled(3)
        buf.update_priorities([0, 1, 2], np.array([1.0, 2.0, 4.0]) - buf.eps)
        assert buf.probabilities() == pytest.approx(LAW_124, rel=1e-12)

    @pytest.mark.parametrize("priorities,alpha", [((1.0, 2.0, 4.0), 0.6), ((1.0, 2.0, 4.0), 1.0),
                                                  ((2.0, 2.0, 2.0, 2.0), 0.6)])
    def test_frequencies_within_two_percent(self, priorities, alpha):
        emp, law = per_frequencies(priorities, alpha, 100_000, np.random.default_rng(17))
        assert np.max(np.abs(emp - law) / law) < 0.02

    def test_td_zero_gives_floor(self):
        buf = _filled(4)
        buf.update_priorities([2], [0.0])
        assert buf.priorities()[2] == buf.eps > 0

    def test_new_transitions_get_max_priority(self):
        buf = _filled(4, capacity=8)
        buf.update_priorities([1], [7.0])
        buf.add(Experience(Z, 0, 0.0, Z, False))
        assert buf.priorities()[4] == pytest.approx(7.0 + buf.eps)

    def test_fifo_eviction_and_stale_updates(self):
        buf = _filled(10, capacity=4)
        assert len(buf) == 4
        assert buf.is_live([5, 6, 7, 8, 9]).tolist() == [False, True, True, True, True]
        before = buf.priorities().copy()
        buf.update_priorities([2, 5], [3.0, 3.0])
        assert buf.stale_updates == 2
        assert np.array_equal(buf.priorities(), before)
        with pytest.raises(UsageError):
            buf.update_priorities([10], [1.0])

    def test_sampled_ids_map_to_items(self):
        buf = _filled(10, capacity=4)
        batch, ids, w = buf.sample(4, 0.4, np.random.default_rng(0))
        assert set(ids.tolist()) <= {6, 7, 8, 9}
        assert np.array_equal(batch.s[:, 0, 0, 0], (ids % 7).astype(np.uint8))
        assert w.max() == 1.0 and np.all(w > 0)

    def test_importance_weights(self):
        buf = _filled(3)
        buf.update_priorities([0, 1, 2], np.array([1.0, 2.0, 4.0]) - buf.eps)
        _, ids, w = buf.sample(3, 1.0, np.random.default_rng(1))
        p = np.array(LAW_124)[ids]
        raw = (3 * p) ** -1.0
        assert w == pytest.approx(raw / raw.max(), rel=1e-9)

    def test_sample_errors(self):
        with pytest.raises(UsageError):
            PrioritizedBuffer(4).sample(1, 0.4, np.random.default_rng(0))
        with pytest.raises(UsageError):
            _filled(2).sample(3, 0.4, np.random.default_rng(0))

    def test_tree_matches_linear_scan_after_updates(self):
        rng = np.random.default_rng(9)
        buf = _filled(300, capacity=257)
        for _ in range(10_000):
            ids = rng.integers(buf.next_id - len(buf), buf.next_id, size=4)
            buf.update_priorities(ids, rng.normal(size=4) * 3)
        assert abs(buf.tree.total - float(np.sum(buf.priorities() ** 0.6))) < 1e-6
        u = rng.random(500)
        assert np.array_equal(buf.tree.find(u * buf.tree.total), O.linear_scan_draw(buf.priorities(), 0.6, u))

    @given(tds=st.lists(st.floats(-50, 50), min_size=1, max_size=30), cap=st.integers(1, 16))
    def test_priorities_positive_and_bounded(self, tds, cap):
        buf = _filled(cap + 3, capacity=cap)
        live = np.arange(buf.next_id - len(buf), buf.next_id)
        ids = live[np.arange(len(tds)) % len(live)]
        buf.update_priorities(ids, tds)
        assert len(buf) <= cap
        assert np.all(buf.priorities() > 0)
        assert buf.tree.total == pytest.approx(float(np.sum(buf.priorities() ** 0.6)), rel=1e-9)
