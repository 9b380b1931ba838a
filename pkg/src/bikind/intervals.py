"""Interval analysis over the control-flow graph.

A worklist pass propagates, for every variable, an enclosing value interval
through the graph. The per-loop-head results are handed to the inductive
step as a constraint on its start state, ruling out unreachable valuations
(like a counter above its cap) that make the plain step fail on programs
that are in fact safe.

Bounds live in the variable's own numeric space: unsigned variables use
[0, 2^w - 1], signed ones [-2^(w-1), 2^(w-1) - 1]. Growth is tamed by
widening a bound straight to its type extremum, but only after a head has
been re-joined WIDEN_DELAY times, so short chains (a state variable walking
1..5, say) settle at their exact range first. One narrowing sweep afterwards
claws back precision the widening threw away where the incoming flows allow
it.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Optional

from . import dsl
from .cfg import HAVOC, Cfg, Edge, checkpoints
from .dsl import Binary, BoolLit, BvType, IntLit, Unary, type_max, type_min
from .formulas import Bool, Cmp, Const, Var, conj, disj, to_unsigned
from .transys import PC, PC_WIDTH, TransitionSystem

WIDEN_DELAY = 8

# guard shapes the refinement understands, normalized to < / <= / == / !=
_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class Interval:
    """Closed range lo..hi in the variable's numeric space (never empty;
    an infeasible refinement makes the whole environment bottom instead)."""

    lo: int
    hi: int

    def join(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def contains(self, value: int) -> bool:
        return self.lo <= value <= self.hi


def full_range(ty: BvType) -> Interval:
    return Interval(type_min(ty), type_max(ty))


def widen(old: Interval, new: Interval, ty: BvType) -> Interval:
    """Any strictly growing bound jumps to the type extremum."""
    lo = old.lo if new.lo >= old.lo else type_min(ty)
    hi = old.hi if new.hi <= old.hi else type_max(ty)
    return Interval(lo, hi)


# An abstract environment is a total map var -> Interval; None is bottom
# (no state reaches this point under the current approximation).
Env = dict[str, Interval]


def _signed_value(raw: int, ty: BvType) -> int:
    """Concrete unsigned bit pattern -> value in the variable's space."""
    if ty.signed and raw >= 1 << (ty.width - 1):
        return raw - (1 << ty.width)
    return raw


def _const(e, ty: BvType) -> Optional[int]:
    if isinstance(e, IntLit):
        return _signed_value(e.value & ((1 << ty.width) - 1), ty)
    return None


def _refine(env: Env, guard, cfg: Cfg, positive: bool) -> Optional[Env]:
    """Narrow env under the guard (or its negation). Shapes beyond
    conjunctions of v ⋈ const / v ⋈ v' comparisons are ignored, which is
    sound: skipping a refinement only keeps the environment larger."""
    if isinstance(guard, BoolLit):
        return env if guard.value == positive else None
    if isinstance(guard, Unary) and guard.op == "!":
        return _refine(env, guard.a, cfg, not positive)
    if not isinstance(guard, Binary):
        return env
    if guard.op in ("&&", "||"):
        # one of the two polarities is a conjunction; the other (a
        # disjunction) is skipped rather than split
        if (guard.op == "&&") == positive:
            left = _refine(env, guard.a, cfg, positive)
            if left is None:
                return None
            return _refine(left, guard.b, cfg, positive)
        return env
    if guard.op not in _FLIP:
        return env
    op = guard.op if positive else _FLIP[guard.op]
    a, b = guard.a, guard.b
    if op in (">", ">="):
        op = "<" if op == ">" else "<="
        a, b = b, a
    if not isinstance(a.ty, BvType):
        return env
    ty = a.ty
    out = dict(env)

    def clamp(name: str, lo: Optional[int], hi: Optional[int]) -> bool:
        cur = out[name]
        bound = Interval(type_min(ty) if lo is None else lo,
                         type_max(ty) if hi is None else hi)
        met = cur.meet(bound)
        if met is None:
            return False
        out[name] = met
        return True

    def rng(e) -> Optional[Interval]:
        c = _const(e, ty)
        if c is not None:
            return Interval(c, c)
        if isinstance(e, dsl.Name):
            return env[e.ident]
        return None

    ra, rb = rng(a), rng(b)
    if ra is None or rb is None:
        return env
    ok = True
    if op == "==":
        if isinstance(a, dsl.Name):
            ok = ok and clamp(a.ident, rb.lo, rb.hi)
        if isinstance(b, dsl.Name):
            ok = ok and clamp(b.ident, ra.lo, ra.hi)
    elif op == "!=":
        # a disequality names no sub-interval; leaving env alone is sound
        pass
    elif op == "<":
        if isinstance(a, dsl.Name):
            ok = ok and clamp(a.ident, None, rb.hi - 1)
        if ok and isinstance(b, dsl.Name):
            ok = ok and clamp(b.ident, ra.lo + 1, None)
    elif op == "<=":
        if isinstance(a, dsl.Name):
            ok = ok and clamp(a.ident, None, rb.hi)
        if ok and isinstance(b, dsl.Name):
            ok = ok and clamp(b.ident, ra.lo, None)
    return out if ok else None


def _eval_range(e, env: Env, ty: BvType) -> Interval:
    """Abstract value of an update expression. Only constants, variables and
    +/- chains are tracked; anything else (and any possible wraparound)
    returns the full range."""
    c = _const(e, ty)
    if c is not None:
        return Interval(c, c)
    if isinstance(e, dsl.Name):
        return env[e.ident]
    if isinstance(e, Binary) and e.op in ("+", "-"):
        a = _eval_range(e.a, env, ty)
        b = _eval_range(e.b, env, ty)
        if e.op == "+":
            lo, hi = a.lo + b.lo, a.hi + b.hi
        else:
            lo, hi = a.lo - b.hi, a.hi - b.lo
        if lo < type_min(ty) or hi > type_max(ty):
            return full_range(ty)
        return Interval(lo, hi)
    return full_range(ty)


def transfer(edge: Edge, env: Optional[Env], cfg: Cfg) -> Optional[Env]:
    """Abstract post of one edge: refine by the guard, then apply the
    simultaneous update. None (bottom) means the edge is infeasible from
    env."""
    if env is None:
        return None
    refined = _refine(env, edge.guard, cfg, True)
    if refined is None:
        return None
    out = dict(refined)
    for name, rhs in edge.update.items():
        ty = cfg.env[name]
        if rhs is HAVOC:
            out[name] = full_range(ty)
        else:
            out[name] = _eval_range(rhs, refined, ty)
    return out


def _join_env(a: Env, b: Env) -> Env:
    return {name: a[name].join(b[name]) for name in a}


@dataclass
class InvariantSet:
    """Per-loop-head variable bounds plus the worklist effort it took to
    reach them (a determinism pin for tests)."""

    heads: dict[int, Env]
    pops: int

    def holds_for(self, cfg: Cfg, pc: int, values: dict[str, int]) -> bool:
        """True when a concrete loop-head state (unsigned bit patterns)
        falls inside the bounds; states at other locations pass trivially."""
        env = self.heads.get(pc)
        if env is None:
            return pc not in self.heads
        return all(env[name].contains(_signed_value(values[name], cfg.env[name]))
                   for name in env)

    def as_json(self, cfg: Cfg) -> str:
        doc = {
            cfg.label(loc): {name: [iv.lo, iv.hi]
                             for name, iv in sorted(env.items())}
            for loc, env in sorted(self.heads.items())
        }
        return json.dumps(doc, indent=2)


def infer(cfg: Cfg) -> InvariantSet:
    """Run the analysis to a post-fixpoint (widening after WIDEN_DELAY
    re-joins per head), then take one narrowing sweep over the heads."""
    init_env: Env = {}
    for decl in cfg.variables:
        if decl.init is None:
            init_env[decl.name] = full_range(decl.ty)
        else:
            init_env[decl.name] = Interval(_signed_value(decl.init, decl.ty),
                                           _signed_value(decl.init, decl.ty))
    heads = {loc for loc in checkpoints(cfg)
             if cfg.locations[loc].kind == "head"}

    envs: dict[int, Env] = {cfg.entry: init_env}
    joins: dict[int, int] = {}
    work = deque([cfg.entry])
    queued = {cfg.entry}
    pops = 0
    while work:
        loc = work.popleft()
        queued.discard(loc)
        pops += 1
        env = envs.get(loc)
        if env is None:
            continue
        for edge in cfg.out.get(loc, []):
            post = transfer(edge, env, cfg)
            if post is None:
                continue
            old = envs.get(edge.dst)
            if old is not None:
                new = _join_env(old, post)
                if new == old:
                    continue
                if edge.dst in heads:
                    joins[edge.dst] = joins.get(edge.dst, 0) + 1
                    if joins[edge.dst] > WIDEN_DELAY:
                        new = {name: widen(old[name], new[name],
                                           cfg.env[name])
                               for name in new}
            else:
                new = post
            envs[edge.dst] = new
            if edge.dst not in queued:
                work.append(edge.dst)
                queued.add(edge.dst)

    # narrowing: re-evaluate each head's incoming flows once on the final
    # approximation; the meet can only trim what widening overshot
    result: dict[int, Env] = {}
    for head in sorted(heads):
        fixed = envs.get(head)
        if fixed is None:
            # abstractly unreachable head: report full ranges (still sound,
            # and keeps the mapping total as promised)
            result[head] = {d.name: full_range(d.ty) for d in cfg.variables}
            continue
        incoming: Optional[Env] = None
        for edge in cfg.edges:
            if edge.dst != head:
                continue
            post = transfer(edge, envs.get(edge.src), cfg)
            if post is None:
                continue
            incoming = post if incoming is None else _join_env(incoming, post)
        if incoming is None:
            result[head] = fixed
        else:
            result[head] = {name: fixed[name].meet(incoming[name]) or fixed[name]
                            for name in fixed}
    return InvariantSet(result, pops)


def to_formula(inv: InvariantSet, ts: TransitionSystem) -> Bool:
    """Step-0 constraint: the state sits at some loop head, inside that
    head's bounds. Full-range bounds add no conjunct; an empty head set
    yields FALSE (nothing to start an inductive suffix from)."""
    branches = []
    for head in sorted(inv.heads):
        parts: list[Bool] = [
            Cmp("eq", Var(PC, 0, PC_WIDTH), Const(head, PC_WIDTH))]
        for name, width, signed in ts.state_vars:
            if name == PC:
                continue
            iv = inv.heads[head][name]
            ty = ts.cfg.env[name]
            v = Var(name, 0, width)
            le = "sle" if signed else "ule"
            if iv.lo > type_min(ty):
                parts.append(Cmp(le, Const(to_unsigned(iv.lo, width), width), v))
            if iv.hi < type_max(ty):
                parts.append(Cmp(le, v, Const(to_unsigned(iv.hi, width), width)))
        branches.append(conj(*parts))
    return disj(*branches)
