"""Lowering from the AST to a control flow graph of guarded edges.

Locations are integers; edges carry a boolean guard over the pre-state and a
parallel update map (absent variables are unchanged, a HAVOC value assigns a
fresh unconstrained input). assert(e) becomes an e edge plus a !e edge into
the error location; assume(e) becomes a single guarded edge, so states
violating it are deliberately stuck. Division and modulo lower an implicit
divisor-is-nonzero assertion in front of the statement that evaluates them.

The graph's cycle structure drives the verifier's step granularity: every
cycle passes through a loop-head location, and the region between checkpoints
(loop heads, exit, error) is acyclic with a static path-length bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from . import dsl
from .dsl import BOOL, Binary, BoolLit, BvType, Expr, IntLit, Program, SourceError, Unary
from .formulas import eval_bv_op, eval_cmp

PC_WIDTH = 16


class _HavocValue:
    def __repr__(self) -> str:
        return "HAVOC"


HAVOC = _HavocValue()


@dataclass
class Location:
    id: int
    label: str
    kind: str  # entry | exit | error | head | assume | plain


@dataclass
class Edge:
    id: int
    src: int
    guard: Expr
    update: dict[str, Union[Expr, _HavocValue]]
    dst: int


@dataclass
class Cfg:
    variables: list[dsl.VarDecl]
    env: dict[str, BvType]
    locations: list[Location]
    edges: list[Edge]
    entry: int
    exit: int
    error: int
    out: dict[int, list[Edge]] = field(default_factory=dict)

    def label(self, loc: int) -> str:
        return self.locations[loc].label

    def loc_by_label(self, label: str) -> int:
        for loc in self.locations:
            if loc.label == label:
                return loc.id
        raise KeyError(label)


def _true(pos) -> Expr:
    return BoolLit(True, pos)


def _not(e: Expr, pos) -> Expr:
    n = Unary("!", e, pos)
    n.ty = BOOL
    return n


def _and(a: Expr, b: Expr, pos) -> Expr:
    n = Binary("&&", a, b, pos)
    n.ty = BOOL
    return n


def _divisors(e: Expr, out: list[Expr]) -> list[Expr]:
    """Division/modulo divisors in evaluation order (operands first)."""
    if isinstance(e, Binary):
        _divisors(e.a, out)
        _divisors(e.b, out)
        if e.op in ("/", "%"):
            out.append(e.b)
    elif isinstance(e, Unary):
        _divisors(e.a, out)
    return out


class _Lowerer:
    def __init__(self, prog: Program):
        self.prog = prog
        self.locations: list[Location] = []
        self.edges: list[Edge] = []

    def new_loc(self, kind: str, label: Optional[str] = None) -> int:
        i = len(self.locations)
        self.locations.append(Location(i, label or f"L{i}", kind))
        return i

    def add_edge(self, src: int, guard: Expr, update: dict, dst: int) -> None:
        self.edges.append(Edge(len(self.edges), src, guard, update, dst))

    def run(self) -> Cfg:
        entry = self.new_loc("entry", "entry")
        exit_ = self.new_loc("exit", "exit")
        error = self.new_loc("error", "error")
        self.exit = exit_
        self.error = error
        end = self.block(self.prog.body, entry, break_to=None)
        self.add_edge(end, _true((0, 0)), {}, exit_)
        cfg = Cfg(self.prog.decls, {d.name: d.ty for d in self.prog.decls},
                  self.locations, self.edges, entry, exit_, error)
        cfg.out = {loc.id: [] for loc in self.locations}
        for e in self.edges:
            cfg.out[e.src].append(e)
        return cfg

    def block(self, stmts: list[dsl.Stmt], cursor: int, break_to: Optional[int]) -> int:
        for s in stmts:
            cursor = self.stmt(s, cursor, break_to)
        return cursor

    def div_checks(self, exprs: list[Expr], cursor: int) -> int:
        divisors: list[Expr] = []
        for e in exprs:
            _divisors(e, divisors)
        for d in divisors:
            pos = d.pos if hasattr(d, "pos") else (0, 0)
            zero = IntLit(0, pos)
            zero.ty = d.ty
            ok = Binary("!=", d, zero, pos)
            ok.ty = BOOL
            bad = Binary("==", d, zero, pos)
            bad.ty = BOOL
            nxt = self.new_loc("plain")
            self.add_edge(cursor, ok, {}, nxt)
            self.add_edge(cursor, bad, {}, self.error)
            cursor = nxt
        return cursor

    def stmt(self, s: dsl.Stmt, cursor: int, break_to: Optional[int]) -> int:
        if isinstance(s, dsl.Assign):
            cursor = self.div_checks([s.expr], cursor)
            nxt = self.new_loc("plain")
            self.add_edge(cursor, _true(s.pos), {s.name: s.expr}, nxt)
            return nxt
        if isinstance(s, dsl.Havoc):
            nxt = self.new_loc("plain")
            self.add_edge(cursor, _true(s.pos), {s.name: HAVOC}, nxt)
            return nxt
        if isinstance(s, dsl.Assert):
            cursor = self.div_checks([s.expr], cursor)
            nxt = self.new_loc("plain")
            self.add_edge(cursor, s.expr, {}, nxt)
            self.add_edge(cursor, _not(s.expr, s.pos), {}, self.error)
            return nxt
        if isinstance(s, dsl.Assume):
            cursor = self.div_checks([s.expr], cursor)
            self.locations[cursor].kind = "assume"
            nxt = self.new_loc("plain")
            self.add_edge(cursor, s.expr, {}, nxt)
            return nxt
        if isinstance(s, dsl.Break):
            if break_to is None:
                raise SourceError("lowering", "break outside a loop", *s.pos)
            self.add_edge(cursor, _true(s.pos), {}, break_to)
            return self.new_loc("plain")  # anything after a break is unreachable
        if isinstance(s, dsl.Halt):
            self.add_edge(cursor, _true(s.pos), {}, self.exit)
            return self.new_loc("plain")
        if isinstance(s, dsl.If):
            cursor = self.div_checks([cond for cond, _ in s.arms], cursor)
            join = self.new_loc("plain")
            taken: Optional[Expr] = None  # conjunction of negated earlier guards
            for cond, body in s.arms:
                guard = cond if taken is None else _and(taken, cond, s.pos)
                arm = self.new_loc("plain")
                self.add_edge(cursor, guard, {}, arm)
                end = self.block(body, arm, break_to)
                self.add_edge(end, _true(s.pos), {}, join)
                fell = _not(cond, s.pos)
                taken = fell if taken is None else _and(taken, fell, s.pos)
            if s.orelse is not None:
                arm = self.new_loc("plain")
                self.add_edge(cursor, taken, {}, arm)
                end = self.block(s.orelse, arm, break_to)
                self.add_edge(end, _true(s.pos), {}, join)
            else:
                self.add_edge(cursor, taken, {}, join)
            return join
        if isinstance(s, dsl.Loop):
            head = self.new_loc("head", f"H{len(self.locations)}")
            self.add_edge(cursor, _true(s.pos), {}, head)
            after = self.new_loc("plain")
            end = self.block(s.body, head, break_to=after)
            self.add_edge(end, _true(s.pos), {}, head)
            return after
        raise TypeError(f"not a statement: {s!r}")


def lower(prog: Program) -> Cfg:
    """Lower a type-checked program; raises SourceError('lowering', ...)."""
    return _Lowerer(prog).run()


def load(source: str) -> Cfg:
    """Parse, type-check and lower in one step."""
    return lower(dsl.parse_program(source))


# ---------------------------------------------------------------------------
# concrete expression evaluation (shared by the oracle and trace replay)

_BIN_TO_BVOP = {
    "+": "add", "-": "sub", "*": "mul",
    "&": "band", "|": "bor", "^": "bxor", "<<": "shl",
}
_CMP_TO_OP = {"==": "eq", "<": "ult", "<=": "ule"}
_CMP_TO_OP_SIGNED = {"==": "eq", "<": "slt", "<=": "sle"}


def eval_expr(e: Expr, env: dict[str, int]) -> Union[int, bool]:
    """Evaluate a typed expression over unsigned bit-vector values."""
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, dsl.Name):
        return env[e.ident]
    if isinstance(e, Unary):
        if e.op == "!":
            return not eval_expr(e.a, env)
        return eval_expr(e.a, env) ^ ((1 << e.ty.width) - 1)
    if isinstance(e, Binary):
        if e.op == "&&":
            return bool(eval_expr(e.a, env)) and bool(eval_expr(e.b, env))
        if e.op == "||":
            return bool(eval_expr(e.a, env)) or bool(eval_expr(e.b, env))
        a = eval_expr(e.a, env)
        b = eval_expr(e.b, env)
        opty = e.a.ty
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            op, x, y = e.op, a, b
            if op == ">":
                op, x, y = "<", b, a
            elif op == ">=":
                op, x, y = "<=", b, a
            table = _CMP_TO_OP_SIGNED if opty.signed else _CMP_TO_OP
            if op == "!=":
                return not eval_cmp("eq", opty.width, x, y)
            return eval_cmp(table[op], opty.width, x, y)
        if e.op == "/":
            return eval_bv_op("sdiv" if opty.signed else "udiv", opty.width, a, b)
        if e.op == "%":
            return eval_bv_op("srem" if opty.signed else "urem", opty.width, a, b)
        if e.op == ">>":
            return eval_bv_op("ashr" if opty.signed else "lshr", opty.width, a, b)
        return eval_bv_op(_BIN_TO_BVOP[e.op], opty.width, a, b)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, sub: dict[str, Expr]) -> Expr:
    """Replace variables by expressions (used to fold a path into one state)."""
    if isinstance(e, (IntLit, BoolLit)):
        return e
    if isinstance(e, dsl.Name):
        return sub.get(e.ident, e)
    if isinstance(e, Unary):
        n = Unary(e.op, substitute(e.a, sub), e.pos)
        n.ty = e.ty
        return n
    if isinstance(e, Binary):
        n = Binary(e.op, substitute(e.a, sub), substitute(e.b, sub), e.pos)
        n.ty = e.ty
        return n
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# step structure: checkpoints, hop bound, deterministic exit tails


def checkpoints(cfg: Cfg) -> set[int]:
    """Loop heads plus the two terminal locations."""
    cps = {cfg.exit, cfg.error}
    for loc in cfg.locations:
        if loc.kind == "head":
            cps.add(loc.id)
    return cps


def hop_bound(cfg: Cfg) -> int:
    """Static bound on edge-path length from any location to the next
    checkpoint arrival; the region between checkpoints must be acyclic."""
    cps = checkpoints(cfg)
    memo: dict[int, int] = {}
    on_stack: set[int] = set()

    def longest_from(loc: int) -> int:
        # longest path taking one edge then continuing through non-checkpoints
        if loc in (cfg.exit, cfg.error):
            return 0
        if loc in memo:
            return memo[loc]
        if loc in on_stack:
            raise ValueError("cycle not passing through a loop head")
        on_stack.add(loc)
        best = 0
        for e in cfg.out.get(loc, []):
            rest = 0 if e.dst in cps else longest_from(e.dst)
            best = max(best, 1 + rest)
        on_stack.discard(loc)
        memo[loc] = best
        return best

    return max((longest_from(loc.id) for loc in cfg.locations), default=1) or 1


def exit_tails(cfg: Cfg, head: int) -> list[list[Edge]]:
    """Havoc-free edge paths from a loop head straight to exit, passing no
    checkpoint in between. Along such a path execution is deterministic, so a
    state at the head whose guards hold is already done with the program."""
    cps = checkpoints(cfg)
    tails: list[list[Edge]] = []

    def walk(loc: int, path: list[Edge]) -> None:
        for e in cfg.out.get(loc, []):
            if any(v is HAVOC for v in e.update.values()):
                continue
            if e.dst == cfg.exit:
                tails.append(path + [e])
            elif e.dst not in cps:
                walk(e.dst, path + [e])

    walk(head, [])
    return tails


def tail_condition(cfg: Cfg, tail: list[Edge]) -> Expr:
    """Fold a havoc-free path's guards into one predicate of the start state."""
    sub: dict[str, Expr] = {}
    conds: list[Expr] = []
    for e in tail:
        g = substitute(e.guard, sub)
        if not (isinstance(g, BoolLit) and g.value):
            conds.append(g)
        new_sub = dict(sub)
        for var, rhs in e.update.items():
            assert rhs is not HAVOC
            new_sub[var] = substitute(rhs, sub)
        sub = new_sub
    if not conds:
        return BoolLit(True, (0, 0))
    out = conds[0]
    for c in conds[1:]:
        out = _and(out, c, (0, 0))
    return out
