"""Temporal-logic rules: types, relation semantics, DSL parsing and printing.

A rule is a conjunction of body predicates with pairwise temporal-order
constraints implying a head predicate, written in a small one-line DSL::

    Y <- A ^ B ^ C : A before B, B equal C

Omitted pairs default to no ordering constraint.  Keywords are
case-insensitive, predicate names are case-sensitive.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field

DEFAULT_EQ_TOL = 1e-2


class RuleError(ValueError):
    """Base class for rule construction/parsing errors."""


class RuleSyntaxError(RuleError):
    """Rule text does not conform to the grammar; carries a position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownPredicateError(RuleError):
    pass


class DuplicateBodyPredicateError(RuleError):
    pass


class ConflictingRelationError(RuleError):
    pass


class TemporalRelation(enum.Enum):
    BEFORE = "before"
    AFTER = "after"
    EQUAL = "equal"
    NONE = "none"


def relation_holds(rel: TemporalRelation, t_u: float, t_v: float,
                   eq_tol: float = DEFAULT_EQ_TOL) -> bool:
    """Whether the grounded pair (t_u, t_v) satisfies `rel` (u REL v).

    Equal uses the tolerance band |t_u - t_v| <= eq_tol; Before/After are
    strict beyond it, so the three ordered relations partition outcomes.
    """
    if eq_tol < 0:
        raise ValueError("eq_tol must be non-negative")
    if rel is TemporalRelation.BEFORE:
        return t_v - t_u > eq_tol
    if rel is TemporalRelation.AFTER:
        return t_u - t_v > eq_tol
    if rel is TemporalRelation.EQUAL:
        return abs(t_u - t_v) <= eq_tol
    return True


@dataclass(frozen=True)
class PredicateLibrary:
    """Ordered universe of predicate names plus the designated heads.

    Indices are stable: predicate i is names[i].
    """

    names: tuple[str, ...]
    head_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "head_names", tuple(self.head_names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("predicate names must be unique")
        missing = [h for h in self.head_names if h not in self.names]
        if missing:
            raise ValueError(f"head names not in library: {missing}")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownPredicateError(f"unknown predicate {name!r}") from None

    def name(self, idx: int) -> str:
        return self.names[idx]

    @property
    def head_indices(self) -> tuple[int, ...]:
        return tuple(self.names.index(h) for h in self.head_names)

    def __len__(self) -> int:
        return len(self.names)


def _pair_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def _orient(rel: TemporalRelation, u: int, v: int) -> TemporalRelation:
    """Relation "u REL v" restated for the index-ordered pair key."""
    if u < v or rel in (TemporalRelation.EQUAL, TemporalRelation.NONE):
        return rel
    if rel is TemporalRelation.BEFORE:
        return TemporalRelation.AFTER
    if rel is TemporalRelation.AFTER:
        return TemporalRelation.BEFORE
    return rel


@dataclass(frozen=True)
class Rule:
    """head <- AND(body predicates) subject to pairwise temporal relations.

    `relations` holds one entry per unordered body pair, keyed by the
    index-ordered pair (u, v) with u < v; the stored relation reads
    "u REL v".  Body order is preserved as listed (see canonicalize).
    """

    head: int
    body: tuple[int, ...]
    relations: tuple[tuple[tuple[int, int], TemporalRelation], ...] = ()

    def __post_init__(self):
        body = tuple(self.body)
        object.__setattr__(self, "body", body)
        if not body:
            raise RuleError("rule body must be non-empty")
        if len(set(body)) != len(body):
            raise DuplicateBodyPredicateError(
                f"duplicate body predicate in {body}")
        pairs = {_pair_key(u, v) for u, v in itertools.combinations(body, 2)}
        rel_map = {}
        for (u, v), rel in self.relations:
            key = _pair_key(u, v)
            oriented = _orient(rel, u, v)
            if key in rel_map and rel_map[key] != oriented:
                raise ConflictingRelationError(
                    f"conflicting relations for pair {key}")
            rel_map[key] = oriented
        unknown = set(rel_map) - pairs
        if unknown:
            raise RuleError(f"relations reference non-body pairs: {unknown}")
        for key in pairs:
            rel_map.setdefault(key, TemporalRelation.NONE)
        object.__setattr__(
            self, "relations", tuple(sorted(rel_map.items())))

    @property
    def length(self) -> int:
        return len(self.body)

    def relation(self, u: int, v: int) -> TemporalRelation:
        """Relation "u REL v" for any body pair, in the asked orientation."""
        key = _pair_key(u, v)
        rel = dict(self.relations)[key]
        return rel if key == (u, v) else _orient(rel, v, u)

    def relation_items(self):
        """(u, v, rel) triples with u < v and rel read as "u REL v"."""
        for (u, v), rel in self.relations:
            yield u, v, rel


def canonicalize(rule: Rule) -> Rule:
    """Canonical form: body sorted by predicate index, relations normalized.

    Idempotent; rule semantics (which groundings satisfy it) are unchanged.
    Relation storage is already orientation-normalized by Rule itself, so
    only the body order can differ from canonical.
    """
    return Rule(head=rule.head, body=tuple(sorted(rule.body)),
                relations=rule.relations)


def jaccard(set1, set2) -> float:
    """|intersection| / |union| of two rule collections under canonical
    equality; 1.0 when both are empty."""
    a = {canonicalize(r) for r in set1}
    b = {canonicalize(r) for r in set2}
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


_TOKEN_RE = re.compile(r"\s*(<-|\^|:|,|[A-Za-z_]\w*)")
_KEYWORDS = {"before": TemporalRelation.BEFORE,
             "after": TemporalRelation.AFTER,
             "equal": TemporalRelation.EQUAL}


class _Tokens:
    """Cursor over DSL tokens with position-reported errors."""

    def __init__(self, text: str):
        self.text = text
        self.items = []  # (token, position)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                rest = text[pos:].strip()
                if not rest:
                    break
                raise RuleSyntaxError(f"unexpected character {text[pos]!r}", pos)
            self.items.append((m.group(1), m.start(1)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.items[self.i][0] if self.i < len(self.items) else None

    def next(self, expect=None):
        if self.i >= len(self.items):
            raise RuleSyntaxError(
                f"unexpected end of rule, expected {expect or 'token'}",
                len(self.text))
        tok, pos = self.items[self.i]
        self.i += 1
        if expect is not None and tok != expect:
            raise RuleSyntaxError(f"expected {expect!r}, found {tok!r}", pos)
        return tok, pos

    def name(self, what):
        tok, pos = self.next(expect=None)
        if not re.fullmatch(r"[A-Za-z_]\w*", tok):
            raise RuleSyntaxError(f"expected {what}, found {tok!r}", pos)
        return tok, pos


def parse_rule(text: str, lib: PredicateLibrary) -> Rule:
    """Parse `HEAD <- pred (^ pred)* (: rel (, rel)*)?` into a canonical Rule.

    rel := pred ("before"|"after"|"equal") pred.  Pairs not stated default
    to no constraint; stating a pair twice with different relations is an
    error, as are unknown or duplicate predicates.
    """
    toks = _Tokens(text)
    head_name, head_pos = toks.name("head predicate")
    if head_name not in lib.names:
        raise UnknownPredicateError(f"unknown predicate {head_name!r}")
    if head_name not in lib.head_names:
        raise RuleError(f"{head_name!r} is not a head predicate")
    head = lib.index(head_name)
    toks.next(expect="<-")

    body = []
    name, pos = toks.name("body predicate")
    body.append(lib.index(name))
    while toks.peek() == "^":
        toks.next()
        name, pos = toks.name("body predicate")
        idx = lib.index(name)
        if idx in body:
            raise DuplicateBodyPredicateError(
                f"duplicate body predicate {name!r}")
        body.append(idx)

    relations = []
    seen = {}
    if toks.peek() == ":":
        toks.next()
        while True:
            lhs_name, lhs_pos = toks.name("predicate")
            kw, kw_pos = toks.name("relation keyword")
            rel = _KEYWORDS.get(kw.lower())
            if rel is None:
                raise RuleSyntaxError(
                    f"expected before/after/equal, found {kw!r}", kw_pos)
            rhs_name, rhs_pos = toks.name("predicate")
            u, v = lib.index(lhs_name), lib.index(rhs_name)
            for idx, p in ((u, lhs_pos), (v, rhs_pos)):
                if idx not in body:
                    raise RuleSyntaxError(
                        f"relation references non-body predicate "
                        f"{lib.name(idx)!r}", p)
            if u == v:
                raise RuleSyntaxError("relation relates a predicate to itself",
                                      lhs_pos)
            key = _pair_key(u, v)
            oriented = _orient(rel, u, v)
            if key in seen and seen[key] != oriented:
                raise ConflictingRelationError(
                    f"pair ({lib.name(key[0])}, {lib.name(key[1])}) stated "
                    f"twice with different relations")
            seen[key] = oriented
            relations.append(((u, v), rel))
            if toks.peek() != ",":
                break
            toks.next()

    if toks.peek() is not None:
        tok, pos = toks.items[toks.i]
        raise RuleSyntaxError(f"trailing input {tok!r}", pos)
    return canonicalize(Rule(head=head, body=tuple(body),
                             relations=tuple(relations)))


def format_rule(rule: Rule, lib: PredicateLibrary) -> str:
    """Print a rule in the DSL; inverse of parse_rule on canonical rules.

    Never emits "after": an After entry prints as the flipped "before".
    NONE pairs are omitted (the parse default).
    """
    parts = [f"{lib.name(rule.head)} <- "]
    parts.append(" ^ ".join(lib.name(p) for p in rule.body))
    rels = []
    for u, v, rel in rule.relation_items():
        if rel is TemporalRelation.NONE:
            continue
        if rel is TemporalRelation.AFTER:
            u, v, rel = v, u, TemporalRelation.BEFORE
        rels.append(f"{lib.name(u)} {rel.value} {lib.name(v)}")
    if rels:
        parts.append(" : " + ", ".join(rels))
    return "".join(parts)


def parse_rule_file(text: str, lib: PredicateLibrary) -> list[Rule]:
    """One rule per line; `#` starts a comment; blank lines ignored."""
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        try:
            rules.append(parse_rule(stripped, lib))
        except RuleError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
    return rules


def format_rule_file(rules, lib: PredicateLibrary) -> str:
    return "\n".join(format_rule(r, lib) for r in rules) + "\n"


@dataclass(frozen=True)
class WeightedRuleSet:
    """Canonical rules with non-negative weights and a base log-intensity.

    `head` may be given explicitly so a rule-free model (pure base rate)
    still knows which predicate it models; with rules present it must agree
    with them.
    """

    rules: tuple[Rule, ...]
    weights: tuple[float, ...]
    b0: float
    head: int | None = None
    eq_tol: float = DEFAULT_EQ_TOL

    def __post_init__(self):
        rules = tuple(canonicalize(r) for r in self.rules)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(rules) != len(self.weights):
            raise ValueError("one weight per rule required")
        if any(w < 0 for w in self.weights):
            raise ValueError("rule weights must be non-negative")
        if len(set(rules)) != len(rules):
            raise ValueError("rules must be pairwise distinct (canonical)")
        heads = {r.head for r in rules}
        if len(heads) > 1:
            raise ValueError("all rules in a model must share one head")
        if heads:
            rule_head = heads.pop()
            if self.head is not None and self.head != rule_head:
                raise ValueError("explicit head disagrees with rule heads")
            object.__setattr__(self, "head", rule_head)
