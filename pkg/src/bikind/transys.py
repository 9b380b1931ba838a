"""Symbolic transition system: step-indexed bit-vector encodings of runs.

The verifier counts k in loop-head visits. One engine step is a hop: from a
checkpoint (loop head, exit, or error) through the acyclic region between
checkpoints to the next arrival, with exit and error absorbing. Each hop is
padded with stutter transitions to the static micro bound of the graph, so
step boundaries land on fixed formula indices. The straight-line prefix
before the first loop head is folded into step 1 (an extra leading hop), so
k means "k loop-body executions" on ordinary programs and iteration counts
line up with the depth metric of the explicit-state search.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from . import dsl
from .cfg import Cfg, HAVOC, checkpoints, exit_tails, hop_bound, tail_condition
from .formulas import (
    BinOp, BoolConst, Bool, BV, Cmp, Const, Not, TRUE, Var,
    conj, disj, eq_const, neg,
)

PC = "pc"
PC_WIDTH = 16


# ---------------------------------------------------------------------------
# expression translation

_ARITH = {"+": "add", "-": "sub", "*": "mul", "&": "band", "|": "bor",
          "^": "bxor", "<<": "shl"}


def expr_to_formula(e: dsl.Expr, env: dict[str, dsl.BvType], step: int):
    """Translate a typed source expression into a term over step variables."""
    if isinstance(e, dsl.IntLit):
        return Const(e.value & ((1 << e.ty.width) - 1), e.ty.width)
    if isinstance(e, dsl.BoolLit):
        return BoolConst(e.value)
    if isinstance(e, dsl.Name):
        return Var(e.ident, step, env[e.ident].width)
    if isinstance(e, dsl.Unary):
        if e.op == "!":
            return neg(expr_to_formula(e.a, env, step))
        from .formulas import BvNot
        return BvNot(expr_to_formula(e.a, env, step))
    if isinstance(e, dsl.Binary):
        if e.op in ("&&", "||"):
            a = expr_to_formula(e.a, env, step)
            b = expr_to_formula(e.b, env, step)
            return conj(a, b) if e.op == "&&" else disj(a, b)
        a = expr_to_formula(e.a, env, step)
        b = expr_to_formula(e.b, env, step)
        signed = isinstance(e.a.ty, dsl.BvType) and e.a.ty.signed
        if e.op in _ARITH:
            return BinOp(_ARITH[e.op], a, b)
        if e.op == "/":
            return BinOp("sdiv" if signed else "udiv", a, b)
        if e.op == "%":
            return BinOp("srem" if signed else "urem", a, b)
        if e.op == ">>":
            return BinOp("ashr" if signed else "lshr", a, b)
        if e.op == "==":
            return Cmp("eq", a, b)
        if e.op == "!=":
            return Not(Cmp("eq", a, b))
        lt, le = ("slt", "sle") if signed else ("ult", "ule")
        if e.op == "<":
            return Cmp(lt, a, b)
        if e.op == "<=":
            return Cmp(le, a, b)
        if e.op == ">":
            return Cmp(lt, b, a)
        if e.op == ">=":
            return Cmp(le, b, a)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# step layout


@dataclass(frozen=True)
class StepPlan:
    """Micro-transition layout: hop depth and engine-step boundaries."""

    depth: int                    # padded micro transitions per hop
    checkpoints: frozenset[int]
    heads: tuple[int, ...]

    def micros(self, k: int, folded: bool) -> int:
        """Total micro transitions for k engine steps."""
        return (k + 1) * self.depth if folded else k * self.depth

    def boundary(self, i: int, folded: bool) -> int:
        """Micro index of the state reached after i engine steps."""
        if i == 0:
            return 0
        return (i + 1) * self.depth if folded else i * self.depth

    def hop_starts(self, k: int, folded: bool) -> set[int]:
        if folded:
            return {0, self.depth} | {(i + 1) * self.depth for i in range(1, k)}
        return {i * self.depth for i in range(k)}


@dataclass(frozen=True)
class TransitionSystem:
    cfg: Cfg
    plan: StepPlan
    state_vars: tuple[tuple[str, int, bool], ...]  # (name, width, signed), pc first
    input_vars: tuple[str, ...]                    # variables assigned by havoc
    init: Bool                                     # over step 0
    trans: Bool                                    # one hop: steps 0..depth
    safety: Bool                                   # pc != error, step 0
    threshold: Bool                                # pc == exit, step 0


@dataclass(frozen=True)
class Encoding:
    """A formula plus the layout needed to read a run off its model."""

    formula: Bool
    kind: str        # "base" | "forward" | "inductive" | "match"
    k: int
    micros: int
    folded: bool


def _pc(step: int) -> BV:
    return Var(PC, step, PC_WIDTH)


def _at(step: int, loc: int) -> Bool:
    return Cmp("eq", _pc(step), Const(loc, PC_WIDTH))


def compile(cfg: Cfg) -> TransitionSystem:  # noqa: A001 - domain term
    depth = hop_bound(cfg)
    cps = frozenset(checkpoints(cfg))
    heads = tuple(l.id for l in cfg.locations if l.kind == "head")
    plan = StepPlan(depth, cps, heads)

    state_vars = [(PC, PC_WIDTH, False)]
    state_vars += [(v.name, v.ty.width, v.ty.signed) for v in cfg.variables]
    input_vars = tuple(sorted({name for e in cfg.edges
                               for name, rhs in e.update.items() if rhs is HAVOC}))

    init = conj(_at(0, cfg.entry),
                *[eq_const(Var(v.name, 0, v.ty.width), v.init)
                  for v in cfg.variables if v.init is not None])
    ts = TransitionSystem(cfg, plan, tuple(state_vars), input_vars,
                          init, TRUE, Not(_at(0, cfg.error)), _at(0, cfg.exit))
    trans = conj(*[_micro(ts, t, hop_start=(t == 0)) for t in range(depth)])
    return replace(ts, trans=trans)


# ---------------------------------------------------------------------------
# the micro relation


def _frame(ts: TransitionSystem, t: int) -> Bool:
    eqs = [Cmp("eq", _pc(t + 1), _pc(t))]
    eqs += [Cmp("eq", Var(n, t + 1, w), Var(n, t, w))
            for n, w, _ in ts.state_vars[1:]]
    return conj(*eqs)


def _edge_move(ts: TransitionSystem, edge, t: int) -> Bool:
    cfg = ts.cfg
    parts = [expr_to_formula(edge.guard, cfg.env, t), _at(t + 1, edge.dst)]
    for name, width, _ in ts.state_vars[1:]:
        rhs = edge.update.get(name)
        if rhs is HAVOC:
            continue  # next value unconstrained: the havoc input
        if rhs is None:
            parts.append(Cmp("eq", Var(name, t + 1, width), Var(name, t, width)))
        else:
            parts.append(Cmp("eq", Var(name, t + 1, width),
                             expr_to_formula(rhs, cfg.env, t)))
    return conj(*parts)


def _micro(ts: TransitionSystem, t: int, hop_start: bool) -> Bool:
    """Relation between micro states t and t+1.

    At a hop start only exit and error stutter (they absorb); elsewhere any
    checkpoint stutters (hop padding) and interior locations keep moving.
    """
    cfg = ts.cfg
    still = (cfg.exit, cfg.error) if hop_start else tuple(sorted(ts.plan.checkpoints))
    branches = [conj(_at(t, loc), _frame(ts, t)) for loc in still]
    for loc in cfg.locations:
        if loc.id in still:
            continue
        edges = cfg.out.get(loc.id, [])
        if not edges:
            continue
        branches.append(conj(_at(t, loc.id),
                             disj(*[_edge_move(ts, e, t) for e in edges])))
    return disj(*branches)


def _unroll(ts: TransitionSystem, k: int, folded: bool) -> list[Bool]:
    starts = ts.plan.hop_starts(k, folded)
    return [_micro(ts, t, hop_start=(t in starts))
            for t in range(ts.plan.micros(k, folded))]


# ---------------------------------------------------------------------------
# the three checks and the trace-match query


def encode_base_case(ts: TransitionSystem, k: int) -> Encoding:
    """Satisfiable iff an initial run reaches the error within k steps."""
    assert k >= 1
    plan = ts.plan
    hits = [_at(plan.boundary(i, True), ts.cfg.error) for i in range(1, k + 1)]
    formula = conj(ts.init, *_unroll(ts, k, True), disj(*hits))
    return Encoding(formula, "base", k, plan.micros(k, True), True)


def _exit_now(ts: TransitionSystem, step: int) -> Bool:
    """The run is finished at `step`: at exit, or at a loop head whose
    continuation deterministically leaves the loop without further input."""
    cfg = ts.cfg
    cases = [_at(step, cfg.exit)]
    for head in ts.plan.heads:
        conds = [expr_to_formula(tail_condition(cfg, tail), cfg.env, step)
                 for tail in exit_tails(cfg, head)]
        if conds:
            cases.append(conj(_at(step, head), disj(*conds)))
    return disj(*cases)


def encode_forward_condition(ts: TransitionSystem, k: int) -> Encoding:
    """Unsatisfiable iff every run is finished after k steps (all loops
    exhausted): the completeness threshold holds."""
    assert k >= 1
    formula = conj(ts.init, *_unroll(ts, k, True),
                   neg(_exit_now(ts, ts.plan.boundary(k, True))))
    return Encoding(formula, "forward", k, ts.plan.micros(k, True), True)


def encode_inductive_step(ts: TransitionSystem, k: int,
                          inv: Optional[Bool] = None) -> Encoding:
    """Satisfiable iff from some loop-head state (optionally constrained by
    an invariant over step 0) k safe steps can end in the error."""
    assert k >= 1
    plan = ts.plan
    parts = [disj(*[_at(0, h) for h in plan.heads])] if plan.heads else [BoolConst(False)]
    if inv is not None:
        parts.append(inv)
    parts += _unroll(ts, k, False)
    parts += [Not(_at(plan.boundary(i, False), ts.cfg.error)) for i in range(1, k)]
    parts.append(_at(plan.boundary(k, False), ts.cfg.error))
    return Encoding(conj(*parts), "inductive", k, plan.micros(k, False), False)


def encode_state_match(ts: TransitionSystem, k: int,
                       targets: list[dict[str, int]]) -> Encoding:
    """Satisfiable iff an initial run of at most k steps passes through one
    of the target valuations (the backward trace's states)."""
    assert k >= 1 and targets
    matches = []
    for t in range(ts.plan.micros(k, True) + 1):
        for st in targets:
            eqs = [_at(t, st[PC])]
            eqs += [Cmp("eq", Var(n, t, w), Const(st[n] & ((1 << w) - 1), w))
                    for n, w, _ in ts.state_vars[1:]]
            matches.append(conj(*eqs))
    formula = conj(ts.init, *_unroll(ts, k, True), disj(*matches))
    return Encoding(formula, "match", k, ts.plan.micros(k, True), True)


# ---------------------------------------------------------------------------
# structural obligations (exercised by tests)


def totality_obligations(cfg: Cfg) -> list[int]:
    """Locations where some enabled move must always exist: every location
    except exit, error, and assumption points (whose single guarded edge is
    allowed to block)."""
    return [l.id for l in cfg.locations
            if l.id not in (cfg.exit, cfg.error) and l.kind != "assume"]
