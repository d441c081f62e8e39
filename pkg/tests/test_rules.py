import pytest
from hypothesis import given, settings, strategies as st

from ruletpp.rules import (ConflictingRelationError,
                           DuplicateBodyPredicateError, PredicateLibrary,
                           Rule, RuleSyntaxError, TemporalRelation,
                           UnknownPredicateError, WeightedRuleSet,
                           canonicalize, format_rule, jaccard, parse_rule,
                           parse_rule_file, relation_holds)

B, A_, E, N = (TemporalRelation.BEFORE, TemporalRelation.AFTER,
               TemporalRelation.EQUAL, TemporalRelation.NONE)

LIB = PredicateLibrary(names=("A", "B", "C", "D", "Y"), head_names=("Y",))


class TestRelationHolds:
    def test_before_strict(self):
        assert relation_holds(B, 1.0, 2.0, 0.01)
        assert not relation_holds(B, 2.0, 1.0, 0.01)
        # inside the tolerance band Before does not hold
        assert not relation_holds(B, 1.0, 1.005, 0.01)

    def test_equal_tolerance(self):
        assert relation_holds(E, 1.0, 1.005, 0.01)
        assert not relation_holds(E, 1.0, 1.02, 0.01)

    def test_after_is_flipped_before(self):
        assert not relation_holds(A_, 1.0, 2.0, 0.01)
        assert relation_holds(A_, 2.0, 1.0, 0.01)

    def test_none_total(self):
        assert relation_holds(N, 5.0, -1.0, 0.0)

    def test_partition_outside_band(self):
        for tu, tv in [(0.0, 1.0), (1.0, 0.0), (2.0, 2.0)]:
            holds = [relation_holds(r, tu, tv, 0.01) for r in (B, A_, E)]
            assert sum(holds) == 1

    def test_negative_tol_rejected(self):
        with pytest.raises(ValueError):
            relation_holds(B, 0.0, 1.0, -1e-3)


class TestParse:
    def test_basic(self):
        r = parse_rule("Y <- A ^ B : A before B", LIB)
        assert r.head == 4
        assert r.body == (0, 1)
        assert r.relation(0, 1) is B

    def test_default_none(self):
        r = parse_rule("Y <- A ^ B", LIB)
        assert r.relation(0, 1) is N

    def test_duplicate_body(self):
        with pytest.raises(DuplicateBodyPredicateError):
            parse_rule("Y <- A ^ A", LIB)

    def test_unknown_predicate(self):
        with pytest.raises(UnknownPredicateError):
            parse_rule("Y <- A ^ Q", LIB)

    def test_conflicting_relation(self):
        with pytest.raises(ConflictingRelationError):
            parse_rule("Y <- A ^ B : A before B, A equal B", LIB)

    def test_restating_same_relation_ok(self):
        r = parse_rule("Y <- A ^ B : A before B, B after A", LIB)
        assert r.relation(0, 1) is B

    def test_syntax_error_reports_position(self):
        with pytest.raises(RuleSyntaxError) as exc:
            parse_rule("Y <- A ^ B : A sideways B", LIB)
        assert exc.value.position == 15

    def test_keywords_case_insensitive(self):
        r = parse_rule("Y <- A ^ B : A BEFORE B", LIB)
        assert r.relation(0, 1) is B

    def test_predicate_names_case_sensitive(self):
        with pytest.raises(UnknownPredicateError):
            parse_rule("Y <- a", LIB)

    def test_non_head_rejected(self):
        with pytest.raises(Exception):
            parse_rule("A <- B", LIB)

    def test_relation_about_non_body(self):
        with pytest.raises(RuleSyntaxError):
            parse_rule("Y <- A ^ B : A before C", LIB)


class TestCanonicalize:
    def test_after_flips(self):
        # Y <- B ^ A with (B after A) is the same rule as A before... no:
        # After(B, A) means B later than A, i.e. Before(A, B).
        r = Rule(head=4, body=(1, 0), relations=(((1, 0), A_),))
        c = canonicalize(r)
        assert c.body == (0, 1)
        assert c.relation(0, 1) is B

    def test_idempotent(self):
        r = Rule(head=4, body=(2, 0, 1),
                 relations=(((2, 0), B), ((1, 2), A_)))
        assert canonicalize(canonicalize(r)) == canonicalize(r)

    def test_equal_symmetric_unchanged(self):
        r = Rule(head=4, body=(0, 1), relations=(((0, 1), E),))
        assert canonicalize(r).relation(0, 1) is E
        assert canonicalize(r).relation(1, 0) is E


class TestJaccard:
    def r(self, text):
        return parse_rule(text, LIB)

    def test_identity(self):
        s = [self.r("Y <- A ^ B : A before B"), self.r("Y <- C")]
        assert jaccard(s, list(reversed(s))) == 1.0

    def test_disjoint(self):
        assert jaccard([self.r("Y <- A")], [self.r("Y <- B")]) == 0.0

    def test_partial(self):
        r1, r2, r3 = (self.r("Y <- A"), self.r("Y <- B"), self.r("Y <- C"))
        assert jaccard([r1, r2], [r2, r3]) == pytest.approx(1 / 3)

    def test_both_empty(self):
        assert jaccard([], []) == 1.0

    def test_orientation_identity(self):
        a = self.r("Y <- A ^ B : A before B")
        b = self.r("Y <- B ^ A : B after A")
        assert jaccard([a], [b]) == 1.0


names = st.sampled_from(["A", "B", "C", "D"])
relations = st.sampled_from([B, A_, E, N])


@st.composite
def rules(draw):
    body_names = draw(st.lists(names, min_size=1, max_size=4, unique=True))
    body = tuple(LIB.index(n) for n in body_names)
    rels = []
    for i in range(len(body)):
        for j in range(i + 1, len(body)):
            rels.append(((body[i], body[j]), draw(relations)))
    return Rule(head=4, body=body, relations=tuple(rels))


@given(rules())
@settings(max_examples=200, deadline=None)
def test_roundtrip_canonical(rule):
    c = canonicalize(rule)
    assert parse_rule(format_rule(c, LIB), LIB) == c


@given(rules())
@settings(max_examples=200, deadline=None)
def test_canonicalize_idempotent_and_semantics(rule):
    from ruletpp.rules import relation_holds as rh
    c = canonicalize(rule)
    assert canonicalize(c) == c
    # same groundings satisfy the relations before/after canonicalization
    import numpy as np
    rng = np.random.default_rng(0)
    for _ in range(20):
        ts = {p: rng.uniform(0, 10) for p in rule.body}
        ok_orig = all(rh(rule.relation(u, v), ts[u], ts[v], 0.01)
                      for u, v, _ in rule.relation_items())
        ok_canon = all(rh(c.relation(u, v), ts[u], ts[v], 0.01)
                       for u, v, _ in c.relation_items())
        assert ok_orig == ok_canon


@given(st.lists(rules(), max_size=5), st.lists(rules(), max_size=5))
@settings(max_examples=100, deadline=None)
def test_jaccard_symmetric(s1, s2):
    assert jaccard(s1, s2) == jaccard(s2, s1)
    if jaccard(s1, s2) == 1.0:
        assert {canonicalize(r) for r in s1} == {canonicalize(r) for r in s2}


def test_rule_file_roundtrip():
    text = """
    # two rules
    Y <- A ^ B : A before B
    Y <- C    # trailing comment
    """
    rules_ = parse_rule_file(text, LIB)
    assert len(rules_) == 2
    assert rules_[0].relation(0, 1) is B


def test_weighted_rule_set_validation():
    r1 = parse_rule("Y <- A", LIB)
    with pytest.raises(ValueError):
        WeightedRuleSet(rules=(r1,), weights=(-0.5,), b0=0.0)
    with pytest.raises(ValueError):
        WeightedRuleSet(rules=(r1, r1), weights=(0.5, 0.5), b0=0.0)
    m = WeightedRuleSet(rules=(r1,), weights=(0.5,), b0=0.1)
    assert m.head == 4


def test_library_validation():
    with pytest.raises(ValueError):
        PredicateLibrary(names=("A", "A"), head_names=())
    with pytest.raises(ValueError):
        PredicateLibrary(names=("A",), head_names=("B",))
