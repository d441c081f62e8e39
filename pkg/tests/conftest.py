import numpy as np
import pytest

from ruletpp.rules import PredicateLibrary, Rule, TemporalRelation
from ruletpp.events import EventSequence


@pytest.fixture
def lib6():
    return PredicateLibrary(names=("A", "B", "C", "D", "E", "Y"),
                            head_names=("Y",))


@pytest.fixture
def two_pred_rule(lib6):
    # Y <- A ^ B : A before B
    return Rule(head=5, body=(0, 1),
                relations=(((0, 1), TemporalRelation.BEFORE),))


def random_sequence(rng, horizon, preds, rate):
    """Homogeneous Poisson events per predicate; small desk-scale helper."""
    events = {}
    for p in preds:
        n = rng.poisson(rate * horizon)
        if n:
            events[p] = np.sort(rng.uniform(0, horizon, size=n))
    return EventSequence(horizon, events)


def random_rule(rng, head, n_body_pool, max_len=3):
    body_pool = [p for p in range(n_body_pool) if p != head]
    k = int(rng.integers(1, max_len + 1))
    body = tuple(rng.choice(body_pool, size=min(k, len(body_pool)),
                            replace=False).tolist())
    rels = []
    choices = list(TemporalRelation)
    for i in range(len(body)):
        for j in range(i + 1, len(body)):
            rels.append(((body[i], body[j]),
                         choices[int(rng.integers(0, 4))]))
    return Rule(head=head, body=body, relations=tuple(rels))
