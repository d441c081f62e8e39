"""Restricted master problem: penalized MLE over rule weights, and pricing.

Minimizes F(w, b0) = -(1/m) l(w, b0) + lambda0 sum_f c_f w_f over w >= 0
with b0 free, by projected gradient descent with Armijo backtracking.  The
objective is normalized by the number of sequences m so the penalty scale,
tolerances and the dual-price acceptance margin do not depend on dataset
size; pricing uses the same normalization.

The dual price of a candidate rule is

    nu_f = -(1/m) dl/dw_f + lambda0 c_f      at (w*, b0*),

negative when adding the candidate would improve the objective.  Pricing a
stream of candidates against a fixed fitted model is the hot path of the
rule search, so Pricer precomputes the fitted cumulative intensity per
sequence and reduces each Count-kernel candidate to two searchsorted calls
over its grounding activation times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventSequence
from .features import (COUNT_KERNEL, KernelKind, KernelSpec, PaddedEvents,
                       RuleFeatureEval, batch_activations)
from .model import (DEFAULT_EXP_CAP, DEFAULT_QUAD_ORDER, CompiledDataset,
                    OverflowGuardError)
from .rules import DEFAULT_EQ_TOL, Rule, canonicalize


class DuplicateRuleError(ValueError):
    pass


@dataclass(frozen=True)
class RegularizerSpec:
    """Omega(w) = lambda0 * sum_f c_f w_f with c_f the rule length."""

    lambda0: float = 0.05

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be non-negative")

    def penalty(self, rules, w) -> float:
        return self.lambda0 * float(sum(r.length * wf for r, wf in zip(rules, w)))

    def grad(self, rules) -> np.ndarray:
        return self.lambda0 * np.array([r.length for r in rules], dtype=float)


@dataclass
class MasterConfig:
    lr: float = 1e-3            # initial step size
    tol: float = 1e-6           # projected-gradient infinity norm
    max_iter: int = 50_000
    armijo: float = 1e-4
    backtrack: float = 0.5
    growth: float = 2.0         # step regrowth after an accepted step
    lr_max: float = 50.0
    quad_order: int = DEFAULT_QUAD_ORDER
    exp_cap: float = DEFAULT_EXP_CAP


@dataclass
class FittedRmp:
    """RMP solution; `grad_w` holds the objective gradient per rule, i.e.
    the dual prices nu_f of the included rules at the optimum."""

    weights: np.ndarray
    b0: float
    objective: float
    trace: list = field(default_factory=list)
    grad_w: np.ndarray = None
    grad_b0: float = 0.0
    converged: bool = True
    n_iter: int = 0


def _check_distinct(rules):
    canon = [canonicalize(r) for r in rules]
    if len(set(canon)) != len(canon):
        raise DuplicateRuleError("rule list contains duplicates")
    return canon


def solve_rmp(rules, dataset, reg: RegularizerSpec,
              warm_start=None, config: MasterConfig | None = None, *,
              head: int, kernel: KernelSpec = COUNT_KERNEL,
              eq_tol: float = DEFAULT_EQ_TOL, threads: int = 1,
              compiled: CompiledDataset | None = None) -> FittedRmp:
    """Fit weights (>= 0) and base term for a fixed rule list.

    warm_start is an optional (w, b0) pair; a shorter w than `rules` is
    padded with zeros so newly added rules start at 0.
    """
    rules = _check_distinct(rules)
    if not dataset:
        raise ValueError("dataset must be non-empty")
    cfg = config or MasterConfig()
    if compiled is None:
        compiled = CompiledDataset(rules, dataset, head, kernel, eq_tol,
                                   cfg.quad_order, threads)
    m = compiled.m
    pen_grad = reg.grad(rules)

    w = np.zeros(len(rules))
    b0 = 0.0
    if warm_start is not None:
        w0, b0 = np.asarray(warm_start[0], dtype=float), float(warm_start[1])
        w[:w0.size] = np.maximum(w0, 0.0)

    def objective_and_grad(w, b0):
        ll, gw, gb = compiled.loglik_and_grad(w, b0, cfg.exp_cap)
        pen = reg.penalty(rules, w)
        F = -ll / m + pen
        gF_w = -gw / m + pen_grad
        gF_b = -gb / m
        return F, gF_w, gF_b

    def objective_only(w, b0):
        try:
            ll = compiled.loglik(w, b0, cfg.exp_cap)
        except OverflowGuardError:
            return np.inf
        return -ll / m + reg.penalty(rules, w)

    F, gF_w, gF_b = objective_and_grad(w, b0)
    trace = [(0, F)]
    eta = cfg.lr
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        pg_w = np.where((w > 0) | (gF_w < 0), gF_w, 0.0)
        pgnorm = max(float(np.max(np.abs(pg_w))) if pg_w.size else 0.0,
                     abs(gF_b))
        if pgnorm < cfg.tol:
            converged = True
            break
        while True:
            w_new = np.maximum(w - eta * gF_w, 0.0)
            b_new = b0 - eta * gF_b
            step_sq = float(np.sum((w_new - w) ** 2) + (b_new - b0) ** 2)
            F_new = objective_only(w_new, b_new)
            if F_new <= F - cfg.armijo / eta * step_sq and np.isfinite(F_new):
                break
            eta *= cfg.backtrack
            if eta < 1e-14:
                # cannot make progress beyond float resolution
                break
        if eta < 1e-14:
            break
        w, b0 = w_new, b_new
        F, gF_w, gF_b = objective_and_grad(w, b0)
        trace.append((it, F))
        eta = min(eta * cfg.growth, cfg.lr_max)

    return FittedRmp(weights=w, b0=b0, objective=F, trace=trace,
                     grad_w=gF_w, grad_b0=gF_b, converged=converged,
                     n_iter=it)


class Pricer:
    """Dual prices of candidate rules against a fixed RMP optimum.

    Count kernel: the fitted intensity is a step function, so with Lambda
    its cumulative integral and {a_g} a candidate's grounding activations,

        dl/dw_c = sum_g [ #heads after a_g  -  (Lambda(T) - Lambda(a_g)) ]

    evaluated dataset-wide with per-sequence offset encoding.  ExpDecay
    falls back to per-sequence quadrature on breakpoints merged with the
    candidate's.
    """

    def __init__(self, fitted: FittedRmp, rules, dataset, reg: RegularizerSpec,
                 *, head: int, kernel: KernelSpec = COUNT_KERNEL,
                 eq_tol: float = DEFAULT_EQ_TOL,
                 compiled: CompiledDataset | None = None,
                 quad_order: int = DEFAULT_QUAD_ORDER,
                 exp_cap: float = DEFAULT_EXP_CAP):
        self.reg = reg
        self.kernel = kernel
        self.eq_tol = eq_tol
        self.head = head
        self.exp_cap = exp_cap
        self.quad_order = quad_order
        self.m = len(dataset)
        self.dataset = dataset
        self.w = np.asarray(fitted.weights, dtype=float)
        self.b0 = float(fitted.b0)
        self.rules = list(rules)
        if compiled is None:
            compiled = CompiledDataset(self.rules, dataset, head, kernel,
                                       eq_tol, quad_order)
        self.compiled = compiled
        if kernel.kind is KernelKind.COUNT:
            self._build_count_tables(dataset)

    def _build_count_tables(self, dataset):
        self.padded = PaddedEvents(dataset)
        shift = max(s.horizon for s in dataset) + 1.0
        self.shift = shift
        h_enc, h_off, h_cnt = [], [0], []
        b_enc, b_left, lam_flat, cum_flat = [], [], [], []
        seg_off = [0]
        lam_T = []
        for i, (seq, blk) in enumerate(zip(dataset, self.compiled.blocks)):
            heads = seq.times(self.head)
            h_enc.append(heads + i * shift)
            h_cnt.append(heads.size)
            h_off.append(h_off[-1] + heads.size)
            expo = self.b0 + (self.w @ blk.phi if self.w.size else
                              np.zeros(blk.node_w.size))
            lam = np.exp(np.minimum(expo, self.exp_cap))
            cum = np.concatenate(([0.0], np.cumsum(lam * blk.node_w)))
            b_enc.append(blk.seg_bounds[:-1] + i * shift)
            b_left.append(blk.seg_bounds[:-1])
            lam_flat.append(lam)
            cum_flat.append(cum[:-1])
            lam_T.append(cum[-1])
            seg_off.append(seg_off[-1] + lam.size)
        self.h_enc = np.concatenate(h_enc) if h_enc else np.empty(0)
        self.h_off = np.asarray(h_off[:-1])
        self.h_cnt = np.asarray(h_cnt, dtype=float)
        self.b_enc = np.concatenate(b_enc)
        self.b_left = np.concatenate(b_left)
        self.lam_flat = np.concatenate(lam_flat)
        self.cum_flat = np.concatenate(cum_flat)
        self.lam_total = np.asarray(lam_T)

    def grad_candidate(self, candidate: Rule) -> float:
        """(1/m) dl/dw_candidate at the fitted point (weight-0 insertion)."""
        if self.kernel.kind is KernelKind.COUNT:
            ids, acts = batch_activations(candidate, self.padded, self.eq_tol)
            if ids.size == 0:
                return 0.0
            enc = acts + ids * self.shift
            heads_le = np.searchsorted(self.h_enc, enc, side="right") \
                - self.h_off[ids]
            heads_after = self.h_cnt[ids] - heads_le
            j = np.searchsorted(self.b_enc, enc, side="right") - 1
            lam_at = self.cum_flat[j] + self.lam_flat[j] * (acts - self.b_left[j])
            residual = self.lam_total[ids] - lam_at
            return float(np.sum(heads_after) - np.sum(residual)) / self.m
        return self._grad_candidate_quadrature(candidate)

    def _grad_candidate_quadrature(self, candidate: Rule) -> float:
        x, gw = np.polynomial.legendre.leggauss(self.quad_order)
        total = 0.0
        for seq in self.dataset:
            evals = [RuleFeatureEval(r, seq, self.kernel, self.eq_tol)
                     for r in self.rules]
            cand_eval = RuleFeatureEval(candidate, seq, self.kernel,
                                        self.eq_tol)
            T = seq.horizon
            cuts = np.concatenate([e.acts for e in evals + [cand_eval]]) \
                if evals or cand_eval.acts.size else np.empty(0)
            cuts = np.unique(cuts[(cuts > 0) & (cuts < T)])
            bounds = np.concatenate(([0.0], cuts, [T]))
            half = np.diff(bounds) / 2.0
            mid = (bounds[:-1] + bounds[1:]) / 2.0
            nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            node_w = (half[:, None] * gw[None, :]).ravel()
            expo = np.full(nodes.size, self.b0)
            for e, wf in zip(evals, self.w):
                expo += wf * e.value_at(nodes)
            lam = np.exp(np.minimum(expo, self.exp_cap))
            phi_c = cand_eval.value_at(nodes)
            heads = seq.times(self.head)
            total += float(np.sum(cand_eval.value_at(heads))
                           - np.sum(node_w * phi_c * lam))
        return total / self.m

    def price(self, candidate: Rule) -> float:
        """nu_f; negative means the candidate improves the objective."""
        return -self.grad_candidate(candidate) \
            + self.reg.lambda0 * candidate.length


def dual_price(candidate: Rule, fitted: FittedRmp, rules, dataset,
               reg: RegularizerSpec, *, head: int,
               kernel: KernelSpec = COUNT_KERNEL,
               eq_tol: float = DEFAULT_EQ_TOL) -> float:
    """One-off candidate price; use Pricer directly for candidate streams."""
    pricer = Pricer(fitted, rules, dataset, reg, head=head, kernel=kernel,
                    eq_tol=eq_tol)
    return pricer.price(candidate)


@dataclass
class OptimalityReport:
    violations: list
    max_residual: float

    @property
    def ok(self) -> bool:
        return not self.violations


def check_optimality(fitted: FittedRmp, rules, dataset, reg: RegularizerSpec,
                     tol: float = 1e-6, *, head: int,
                     kernel: KernelSpec = COUNT_KERNEL,
                     eq_tol: float = DEFAULT_EQ_TOL,
                     quad_order: int = DEFAULT_QUAD_ORDER) -> OptimalityReport:
    """KKT residuals at the fitted point.

    For each rule: w_f > tol requires |nu_f| <= 10 tol (stationarity),
    w_f <= tol requires nu_f >= -10 tol (no profitable increase); plus b0
    stationarity.  Violations are listed, not raised.
    """
    rules = list(rules)
    compiled = CompiledDataset(rules, dataset, head, kernel, eq_tol,
                               quad_order)
    _, gw, gb = compiled.loglik_and_grad(np.asarray(fitted.weights),
                                         fitted.b0)
    m = compiled.m
    nu = -gw / m + reg.grad(rules)
    gb_obj = -gb / m
    violations = []
    residuals = [abs(gb_obj)]
    if abs(gb_obj) > 10 * tol:
        violations.append({"param": "b0", "kind": "stationarity",
                           "residual": abs(gb_obj)})
    for i, (w_f, nu_f) in enumerate(zip(fitted.weights, nu)):
        if w_f > tol:
            residuals.append(abs(nu_f))
            if abs(nu_f) > 10 * tol:
                violations.append({"param": f"rule[{i}]", "kind": "active",
                                   "residual": abs(nu_f)})
        else:
            residuals.append(max(0.0, -nu_f))
            if nu_f < -10 * tol:
                violations.append({"param": f"rule[{i}]", "kind": "inactive",
                                   "residual": -nu_f})
    return OptimalityReport(violations=violations,
                            max_residual=float(max(residuals)))
