"""Rule features over event history: grounding enumeration and fast paths.

A grounding of a rule at time t picks one historical event per body
predicate, all strictly before t, satisfying every pairwise temporal
relation.  The Count kernel scores each grounding 1; the ExpDecay kernel
scores prod_u exp(-beta (t - t_u)).

Because a grounding only depends on t through "all its events < t", each
valid tuple has an activation time (its latest event) after which it
counts.  Both kernels reduce to bookkeeping over activation times, which
is what every fast path here uses; enumeration stays available as the
reference implementation.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .events import EventSequence
from .rules import Rule, TemporalRelation, relation_holds, DEFAULT_EQ_TOL


class UnsupportedKernelError(ValueError):
    pass


class KernelKind(str, enum.Enum):
    COUNT = "count"
    EXP_DECAY = "exp_decay"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.COUNT
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.EXP_DECAY:
            if self.beta is None or self.beta <= 0:
                raise ValueError("exp_decay kernel requires beta > 0")
        elif self.beta is not None:
            raise ValueError("count kernel takes no beta")

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.beta is not None:
            out["beta"] = self.beta
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(kind=KernelKind(d["kind"]), beta=d.get("beta"))


COUNT_KERNEL = KernelSpec(KernelKind.COUNT)


def valid_groundings(rule: Rule, seq: EventSequence, t: float,
                     eq_tol: float = DEFAULT_EQ_TOL) -> list[tuple[float, ...]]:
    """Enumerate valid groundings at t in lexicographic order (body order).

    Reference implementation: plain product-with-filter, used as the oracle
    for the vectorized paths.
    """
    per_pred = [seq.times(p) for p in rule.body]
    per_pred = [a[a < t] for a in per_pred]
    if any(a.size == 0 for a in per_pred):
        return []
    pairs = [(i, j, rule.relation(rule.body[i], rule.body[j]))
             for i, j in itertools.combinations(range(len(rule.body)), 2)]
    out = []
    for tup in itertools.product(*per_pred):
        if all(relation_holds(rel, tup[i], tup[j], eq_tol)
               for i, j, rel in pairs):
            out.append(tuple(float(x) for x in tup))
    return out


def _relation_mask(rel: TemporalRelation, tu: np.ndarray, tv: np.ndarray,
                   eq_tol: float) -> np.ndarray:
    # inf padding makes these differences nan; nan compares False, which
    # correctly drops padded tuples from every constrained mask.
    with np.errstate(invalid="ignore"):
        if rel is TemporalRelation.BEFORE:
            return tv - tu > eq_tol
        if rel is TemporalRelation.AFTER:
            return tu - tv > eq_tol
        if rel is TemporalRelation.EQUAL:
            return np.abs(tu - tv) <= eq_tol
    return None


def grounding_activations(rule: Rule, seq: EventSequence,
                          eq_tol: float = DEFAULT_EQ_TOL,
                          with_sums: bool = False):
    """Activation times of all valid groundings of `rule` in `seq`.

    Returns sorted activation times (with multiplicity); with_sums=True also
    returns the per-grounding event-time sums in the same order (ExpDecay
    needs them).
    """
    arrays = [seq.times(p) for p in rule.body]
    k = len(arrays)
    if any(a.size == 0 for a in arrays):
        empty = np.empty(0)
        return (empty, empty.copy()) if with_sums else empty
    grids = []
    for i, a in enumerate(arrays):
        shape = [1] * k
        shape[i] = a.size
        grids.append(a.reshape(shape))
    mask = None
    for i, j in itertools.combinations(range(k), 2):
        rel = rule.relation(rule.body[i], rule.body[j])
        m = _relation_mask(rel, grids[i], grids[j], eq_tol)
        if m is None:
            continue
        mask = m if mask is None else (mask & m)
    acts = grids[0]
    for g in grids[1:]:
        acts = np.maximum(acts, g)
    acts = np.broadcast_to(acts, tuple(a.size for a in arrays))
    if mask is not None:
        mask = np.broadcast_to(mask, acts.shape)
        acts = acts[mask]
    else:
        acts = acts.ravel()
    if with_sums:
        sums = grids[0]
        for g in grids[1:]:
            sums = sums + g
        sums = np.broadcast_to(sums, tuple(a.size for a in arrays))
        sums = sums[mask] if mask is not None else sums.ravel()
        order = np.argsort(acts, kind="stable")
        return acts[order], sums[order]
    return np.sort(acts)


class RuleFeatureEval:
    """phi_f(t) for one rule on one sequence, evaluable at arbitrary times.

    Count: phi(t) = number of activations strictly before t.
    ExpDecay: phi(t) = sum over activations a_g < t of
        exp(-beta (k t - S_g)), maintained by the usual exponential-decay
        prefix recursion so no huge exponents appear.
    """

    def __init__(self, rule: Rule, seq: EventSequence, kernel: KernelSpec,
                 eq_tol: float = DEFAULT_EQ_TOL):
        self.kernel = kernel
        if kernel.kind is KernelKind.COUNT:
            self.acts = grounding_activations(rule, seq, eq_tol)
        else:
            acts, sums = grounding_activations(rule, seq, eq_tol, with_sums=True)
            self.acts = acts
            k = rule.length
            self.bk = kernel.beta * k
            # c_g = exp(-beta (k a_g - S_g)) <= 1 since a_g is the max event
            c = np.exp(-kernel.beta * (k * acts - sums))
            prefix = np.empty_like(c)
            run = 0.0
            prev = 0.0
            for i in range(c.size):
                run = run * np.exp(-self.bk * (acts[i] - prev)) + c[i]
                prefix[i] = run
                prev = acts[i]
            self.prefix = prefix

    def value_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.searchsorted(self.acts, ts, side="left")
        if self.kernel.kind is KernelKind.COUNT:
            return idx.astype(float)
        out = np.zeros_like(ts)
        nz = idx > 0
        if np.any(nz):
            j = idx[nz] - 1
            out[nz] = self.prefix[j] * np.exp(-self.bk * (ts[nz] - self.acts[j]))
        return out


def feature(rule: Rule, seq: EventSequence, t: float,
            kernel: KernelSpec = COUNT_KERNEL,
            eq_tol: float = DEFAULT_EQ_TOL) -> float:
    """Kernel-weighted count of valid groundings strictly before t."""
    return float(RuleFeatureEval(rule, seq, kernel, eq_tol).value_at(t)[0])


@dataclass(frozen=True)
class FeatureTrace:
    """Piecewise-constant Count feature as (breakpoints, value after each).

    value_at follows the strict-before grounding contract, so the value AT
    a breakpoint is the left limit; the stored `values[i]` is what holds on
    the open-left interval (breakpoints[i], breakpoints[i+1]].
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def value_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.searchsorted(self.breakpoints, ts, side="left")
        padded = np.concatenate(([0.0], self.values))
        return padded[idx]

    def segments(self, horizon: float):
        """(bounds, values) with bounds[0]=0, bounds[-1]=horizon; values[i]
        holds on (bounds[i], bounds[i+1])."""
        inside = self.breakpoints[(self.breakpoints > 0)
                                  & (self.breakpoints < horizon)]
        vals_inside = self.values[(self.breakpoints > 0)
                                  & (self.breakpoints < horizon)]
        bounds = np.concatenate(([0.0], inside, [horizon]))
        before = np.searchsorted(self.breakpoints, 0.0, side="right")
        start_val = 0.0 if before == 0 else float(self.values[before - 1])
        values = np.concatenate(([start_val], vals_inside))
        return bounds, values


def feature_trace(rule: Rule, seq: EventSequence,
                  kernel: KernelSpec = COUNT_KERNEL,
                  eq_tol: float = DEFAULT_EQ_TOL) -> FeatureTrace:
    """Exact Count-kernel feature trajectory over the whole sequence."""
    if kernel.kind is not KernelKind.COUNT:
        raise UnsupportedKernelError("feature_trace supports the Count kernel")
    acts = grounding_activations(rule, seq, eq_tol)
    if acts.size == 0:
        return FeatureTrace(np.empty(0), np.empty(0))
    bps, counts = np.unique(acts, return_counts=True)
    return FeatureTrace(bps, np.cumsum(counts).astype(float))


class PaddedEvents:
    """Event matrices padded with +inf for whole-dataset grounding sweeps.

    mats[p] has shape (n_sequences, max events of p); padding never produces
    a valid activation below the horizon: inf propagates through max, and
    inf-inf turns Equal masks into (false) nan comparisons.
    """

    def __init__(self, dataset: list[EventSequence]):
        self.n = len(dataset)
        self.horizon = dataset[0].horizon if dataset else 0.0
        preds = sorted({p for s in dataset for p in s.events})
        self.mats = {}
        for p in preds:
            width = max(s.times(p).size for s in dataset)
            mat = np.full((self.n, max(width, 1)), np.inf)
            for i, s in enumerate(dataset):
                ts = s.times(p)
                mat[i, :ts.size] = ts
            self.mats[p] = mat

    def pred_matrix(self, p: int) -> np.ndarray:
        return self.mats.get(p, np.full((self.n, 1), np.inf))


def batch_activations(rule: Rule, padded: PaddedEvents,
                      eq_tol: float = DEFAULT_EQ_TOL,
                      cell_budget: int = 4_000_000):
    """All valid grounding activations of `rule` across a whole dataset.

    Returns (seq_ids, activations) for activations strictly below the
    horizon, unsorted.  Work is chunked over sequences so the intermediate
    grid stays below cell_budget cells.
    """
    mats = [padded.pred_matrix(p) for p in rule.body]
    k = len(mats)
    per_seq_cells = 1
    for m in mats:
        per_seq_cells *= m.shape[1]
    step = max(1, int(cell_budget // max(per_seq_cells, 1)))
    seq_ids_out, acts_out = [], []
    pairs = [(i, j, rule.relation(rule.body[i], rule.body[j]))
             for i, j in itertools.combinations(range(k), 2)]
    for lo in range(0, padded.n, step):
        hi = min(lo + step, padded.n)
        grids = []
        for i, m in enumerate(mats):
            shape = [hi - lo] + [1] * k
            shape[1 + i] = m.shape[1]
            grids.append(m[lo:hi].reshape(shape))
        mask = None
        for i, j, rel in pairs:
            cond = _relation_mask(rel, grids[i], grids[j], eq_tol)
            if cond is None:
                continue
            mask = cond if mask is None else (mask & cond)
        acts = grids[0]
        for g in grids[1:]:
            acts = np.maximum(acts, g)
        full_shape = [hi - lo] + [m.shape[1] for m in mats]
        acts = np.broadcast_to(acts, full_shape)
        if mask is not None:
            mask = np.broadcast_to(mask, full_shape)
            mask = mask & (acts < padded.horizon)
        else:
            mask = acts < padded.horizon
        sel = np.nonzero(mask)
        seq_ids_out.append(sel[0] + lo)
        acts_out.append(acts[sel])
    if not seq_ids_out:
        return np.empty(0, dtype=int), np.empty(0)
    return np.concatenate(seq_ids_out), np.concatenate(acts_out)
