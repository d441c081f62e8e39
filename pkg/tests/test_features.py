import math

import numpy as np
import pytest

from ruletpp.events import EventSequence
from ruletpp.features import (COUNT_KERNEL, KernelKind, KernelSpec,
                              PaddedEvents, UnsupportedKernelError,
                              batch_activations, feature, feature_trace,
                              grounding_activations, valid_groundings)
from ruletpp.rules import Rule, TemporalRelation

from conftest import random_rule, random_sequence

B, E, N = (TemporalRelation.BEFORE, TemporalRelation.EQUAL,
           TemporalRelation.NONE)


def seq_ab(horizon=10.0):
    return EventSequence(horizon, {0: [1.0, 4.0], 1: [2.0, 3.0, 5.0]})


RULE_AB = Rule(head=5, body=(0, 1), relations=(((0, 1), B),))


class TestValidGroundings:
    def test_before_pair_counts_four(self):
        # A={1,4}, B={2,3,5} with A before B: (1,2),(1,3),(1,5),(4,5)
        got = valid_groundings(RULE_AB, seq_ab(), t=6.0, eq_tol=0.01)
        assert got == [(1.0, 2.0), (1.0, 3.0), (1.0, 5.0), (4.0, 5.0)]

    def test_empty_history(self):
        seq = EventSequence(10.0, {})
        assert valid_groundings(RULE_AB, seq, 6.0) == []

    def test_cartesian_when_unconstrained(self):
        rule = Rule(head=5, body=(0, 1), relations=(((0, 1), N),))
        got = valid_groundings(rule, seq_ab(), t=6.0)
        assert len(got) == 6

    def test_strictly_before_t(self):
        got = valid_groundings(RULE_AB, seq_ab(), t=5.0)
        assert got == [(1.0, 2.0), (1.0, 3.0)]
        # the boundary event at t=5 is excluded at t=5 exactly
        got = valid_groundings(RULE_AB, seq_ab(), t=5.0 + 1e-9)
        assert len(got) == 4

    def test_equal_tolerance_grouping(self):
        rule = Rule(head=5, body=(0, 1), relations=(((0, 1), E),))
        seq = EventSequence(10.0, {0: [1.0, 2.0], 1: [1.004, 5.0]})
        got = valid_groundings(rule, seq, 9.0, eq_tol=0.01)
        assert got == [(1.0, 1.004)]


class TestFeature:
    def test_fig2_count(self):
        assert feature(RULE_AB, seq_ab(), 6.0) == 4.0

    def test_empty(self):
        assert feature(RULE_AB, EventSequence(10.0, {}), 6.0) == 0.0

    def test_exp_decay_single_grounding(self):
        k = KernelSpec(KernelKind.EXP_DECAY, beta=1.0)
        seq = EventSequence(10.0, {0: [1.0], 1: [2.0]})
        got = feature(RULE_AB, seq, 3.0, kernel=k)
        assert got == pytest.approx(math.exp(-2.0) * math.exp(-1.0), rel=1e-12)

    def test_count_matches_enumeration_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            rule = random_rule(rng, head=5, n_body_pool=4)
            seq = random_sequence(rng, 10.0, range(5), rate=0.4)
            for t in rng.uniform(0, 10, size=5):
                assert feature(rule, seq, t) == float(
                    len(valid_groundings(rule, seq, t)))

    def test_exp_decay_matches_enumeration(self):
        k = KernelSpec(KernelKind.EXP_DECAY, beta=0.7)
        rng = np.random.default_rng(8)
        for _ in range(30):
            rule = random_rule(rng, head=5, n_body_pool=4)
            seq = random_sequence(rng, 8.0, range(5), rate=0.5)
            t = float(rng.uniform(0, 8))
            want = sum(
                math.prod(math.exp(-0.7 * (t - tu)) for tu in tup)
                for tup in valid_groundings(rule, seq, t))
            assert feature(rule, seq, t, kernel=k) == pytest.approx(
                want, rel=1e-12, abs=1e-15)

    def test_count_nondecreasing_in_t(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            rule = random_rule(rng, head=5, n_body_pool=4)
            seq = random_sequence(rng, 10.0, range(5), rate=0.5)
            ts = np.sort(rng.uniform(0, 10, size=20))
            vals = [feature(rule, seq, t) for t in ts]
            assert all(a <= b for a, b in zip(vals, vals[1:]))


class TestFeatureTrace:
    def test_fig2_steps(self):
        trace = feature_trace(RULE_AB, seq_ab())
        # activations: (1,2)->2, (1,3)->3, (1,5)/(4,5)->5
        assert trace.breakpoints.tolist() == [2.0, 3.0, 5.0]
        assert trace.values.tolist() == [1.0, 2.0, 4.0]
        grid = np.linspace(0, 10, 1000)
        want = np.array([feature(RULE_AB, seq_ab(), t) for t in grid])
        assert np.array_equal(trace.value_at(grid), want)

    def test_no_events_single_segment(self):
        trace = feature_trace(RULE_AB, EventSequence(10.0, {}))
        assert trace.breakpoints.size == 0
        assert trace.value_at([0.0, 5.0, 10.0]).tolist() == [0, 0, 0]

    def test_single_pred_counting(self):
        rule = Rule(head=5, body=(0,))
        seq = EventSequence(4.0, {0: [1.0, 2.0]})
        trace = feature_trace(rule, seq)
        assert trace.value_at([0.5, 1.5, 2.5]).tolist() == [0.0, 1.0, 2.0]
        bounds, values = trace.segments(4.0)
        assert bounds.tolist() == [0.0, 1.0, 2.0, 4.0]
        assert values.tolist() == [0.0, 1.0, 2.0]

    def test_exp_decay_unsupported(self):
        with pytest.raises(UnsupportedKernelError):
            feature_trace(RULE_AB, seq_ab(),
                          kernel=KernelSpec(KernelKind.EXP_DECAY, beta=1.0))

    def test_value_at_breakpoint_is_left_limit(self):
        trace = feature_trace(RULE_AB, seq_ab())
        assert trace.value_at([2.0])[0] == 0.0
        assert feature(RULE_AB, seq_ab(), 2.0) == 0.0


class TestBatchActivations:
    def test_matches_per_sequence(self):
        rng = np.random.default_rng(11)
        dataset = [random_sequence(rng, 10.0, range(5), rate=0.4)
                   for _ in range(40)]
        padded = PaddedEvents(dataset)
        for _ in range(10):
            rule = random_rule(rng, head=5, n_body_pool=4)
            ids, acts = batch_activations(rule, padded)
            for i, seq in enumerate(dataset):
                want = grounding_activations(rule, seq)
                want = want[want < 10.0]
                got = np.sort(acts[ids == i])
                assert np.array_equal(got, want)

    def test_chunking_consistent(self):
        rng = np.random.default_rng(12)
        dataset = [random_sequence(rng, 10.0, range(4), rate=0.6)
                   for _ in range(30)]
        padded = PaddedEvents(dataset)
        rule = random_rule(rng, head=5, n_body_pool=4)
        ids1, acts1 = batch_activations(rule, padded, cell_budget=64)
        ids2, acts2 = batch_activations(rule, padded)
        o1 = np.lexsort((acts1, ids1))
        o2 = np.lexsort((acts2, ids2))
        assert np.array_equal(ids1[o1], ids2[o2])
        assert np.array_equal(acts1[o1], acts2[o2])

    def test_equal_relation_with_padding(self):
        rule = Rule(head=5, body=(0, 1), relations=(((0, 1), E),))
        ds = [EventSequence(10.0, {0: [1.0, 2.0], 1: [1.0]}),
              EventSequence(10.0, {0: [3.0]})]
        ids, acts = batch_activations(rule, PaddedEvents(ds))
        assert ids.tolist() == [0]
        assert acts.tolist() == [1.0]
