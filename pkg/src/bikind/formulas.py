"""Step-indexed bit-vector formulas: terms, evaluation, SMT-LIB 2 emission.

Semantics are bit-for-bit those of SMT-LIB QF_BV (division by zero gives all
ones, remainder by zero gives the dividend, shifts by >= width saturate),
so the encoder, both solver backends and the concrete interpreter agree on
every corner case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union


def mask(width: int) -> int:
    return (1 << width) - 1


def to_signed(value: int, width: int) -> int:
    return value - (1 << width) if value >> (width - 1) else value


def to_unsigned(value: int, width: int) -> int:
    return value & mask(width)


# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Var:
    """A state variable instance at one unrolling step, printed name@step."""

    name: str
    step: int
    width: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, self.step)


@dataclass(frozen=True)
class Const:
    value: int
    width: int


@dataclass(frozen=True)
class BinOp:
    op: str  # add sub mul udiv sdiv urem srem band bor bxor shl lshr ashr
    a: "BV"
    b: "BV"

    @property
    def width(self) -> int:
        return self.a.width


@dataclass(frozen=True)
class BvNot:
    a: "BV"

    @property
    def width(self) -> int:
        return self.a.width


BV = Union[Var, Const, BinOp, BvNot]


@dataclass(frozen=True)
class Cmp:
    op: str  # eq ult ule slt sle
    a: BV
    b: BV


@dataclass(frozen=True)
class BoolOp:
    op: str  # and or
    args: tuple["Bool", ...]


@dataclass(frozen=True)
class Not:
    a: "Bool"


@dataclass(frozen=True)
class BoolConst:
    value: bool


Bool = Union[Cmp, BoolOp, Not, BoolConst]
Term = Union[BV, Bool]

TRUE = BoolConst(True)
FALSE = BoolConst(False)


def conj(*args: Bool) -> Bool:
    flat: list[Bool] = []
    for a in args:
        if isinstance(a, BoolConst):
            if not a.value:
                return FALSE
            continue
        if isinstance(a, BoolOp) and a.op == "and":
            flat.extend(a.args)
        else:
            flat.append(a)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return BoolOp("and", tuple(flat))


def disj(*args: Bool) -> Bool:
    flat: list[Bool] = []
    for a in args:
        if isinstance(a, BoolConst):
            if a.value:
                return TRUE
            continue
        if isinstance(a, BoolOp) and a.op == "or":
            flat.extend(a.args)
        else:
            flat.append(a)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return BoolOp("or", tuple(flat))


def neg(a: Bool) -> Bool:
    if isinstance(a, BoolConst):
        return BoolConst(not a.value)
    if isinstance(a, Not):
        return a.a
    return Not(a)


def eq_const(var: Var, value: int) -> Bool:
    return Cmp("eq", var, Const(value & mask(var.width), var.width))


# ---------------------------------------------------------------------------
# evaluation


def eval_bv_op(op: str, width: int, a: int, b: int) -> int:
    m = mask(width)
    if op == "add":
        return (a + b) & m
    if op == "sub":
        return (a - b) & m
    if op == "mul":
        return (a * b) & m
    if op == "udiv":
        return m if b == 0 else a // b
    if op == "urem":
        return a if b == 0 else a % b
    if op == "sdiv":
        if b == 0:
            return m if a >> (width - 1) == 0 else 1
        sa, sb = to_signed(a, width), to_signed(b, width)
        q = abs(sa) // abs(sb)
        if (sa < 0) != (sb < 0):
            q = -q
        return q & m
    if op == "srem":
        if b == 0:
            return a
        sa, sb = to_signed(a, width), to_signed(b, width)
        r = abs(sa) % abs(sb)
        if sa < 0:
            r = -r
        return r & m
    if op == "band":
        return a & b
    if op == "bor":
        return a | b
    if op == "bxor":
        return a ^ b
    if op == "shl":
        return (a << b) & m if b < width else 0
    if op == "lshr":
        return a >> b if b < width else 0
    if op == "ashr":
        if b >= width:
            return m if a >> (width - 1) else 0
        return (to_signed(a, width) >> b) & m
    raise ValueError(f"unknown bv op {op!r}")


def eval_cmp(op: str, width: int, a: int, b: int) -> bool:
    if op == "eq":
        return a == b
    if op == "ult":
        return a < b
    if op == "ule":
        return a <= b
    if op == "slt":
        return to_signed(a, width) < to_signed(b, width)
    if op == "sle":
        return to_signed(a, width) <= to_signed(b, width)
    raise ValueError(f"unknown comparison {op!r}")


def eval_term(node: Term, env: dict[tuple[str, int], int]) -> Union[int, bool]:
    """Evaluate under a total assignment; raises KeyError on a missing var."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.key]
    if isinstance(node, BinOp):
        return eval_bv_op(node.op, node.width, eval_term(node.a, env), eval_term(node.b, env))
    if isinstance(node, BvNot):
        return eval_term(node.a, env) ^ mask(node.width)
    if isinstance(node, Cmp):
        return eval_cmp(node.op, node.a.width, eval_term(node.a, env), eval_term(node.b, env))
    if isinstance(node, BoolOp):
        if node.op == "and":
            return all(eval_term(a, env) for a in node.args)
        return any(eval_term(a, env) for a in node.args)
    if isinstance(node, Not):
        return not eval_term(node.a, env)
    if isinstance(node, BoolConst):
        return node.value
    raise TypeError(f"not a term: {node!r}")


def collect_vars(node: Term, out: dict[tuple[str, int], int] | None = None) -> dict[tuple[str, int], int]:
    """All variables in the term, mapped (name, step) -> width."""
    if out is None:
        out = {}
    stack: list[Term] = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out[n.key] = n.width
        elif isinstance(n, BinOp):
            stack.append(n.a)
            stack.append(n.b)
        elif isinstance(n, (BvNot, Not)):
            stack.append(n.a)
        elif isinstance(n, Cmp):
            stack.append(n.a)
            stack.append(n.b)
        elif isinstance(n, BoolOp):
            stack.extend(n.args)
    return out


# ---------------------------------------------------------------------------
# SMT-LIB 2 emission

_SMT_BV_OP = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul",
    "udiv": "bvudiv", "sdiv": "bvsdiv", "urem": "bvurem", "srem": "bvsrem",
    "band": "bvand", "bor": "bvor", "bxor": "bvxor",
    "shl": "bvshl", "lshr": "bvlshr", "ashr": "bvashr",
}
_SMT_CMP_OP = {"eq": "=", "ult": "bvult", "ule": "bvule", "slt": "bvslt", "sle": "bvsle"}


def smt_symbol(name: str, step: int) -> str:
    return f"{name}@{step}"


def _smt_const(value: int, width: int) -> str:
    if width % 4 == 0:
        return "#x%0*x" % (width // 4, value)
    return "#b" + format(value, f"0{width}b")


def term_to_smt(node: Term) -> str:
    if isinstance(node, Const):
        return _smt_const(node.value, node.width)
    if isinstance(node, Var):
        return smt_symbol(node.name, node.step)
    if isinstance(node, BinOp):
        return f"({_SMT_BV_OP[node.op]} {term_to_smt(node.a)} {term_to_smt(node.b)})"
    if isinstance(node, BvNot):
        return f"(bvnot {term_to_smt(node.a)})"
    if isinstance(node, Cmp):
        return f"({_SMT_CMP_OP[node.op]} {term_to_smt(node.a)} {term_to_smt(node.b)})"
    if isinstance(node, BoolOp):
        return f"({node.op} {' '.join(term_to_smt(a) for a in node.args)})"
    if isinstance(node, Not):
        return f"(not {term_to_smt(node.a)})"
    if isinstance(node, BoolConst):
        return "true" if node.value else "false"
    raise TypeError(f"not a term: {node!r}")


def to_smtlib_script(formula: Bool) -> str:
    """Full QF_BV script: declarations sorted by symbol, one assert, check-sat."""
    variables = collect_vars(formula)
    lines = ["(set-logic QF_BV)"]
    for (name, step), width in sorted(variables.items()):
        lines.append(f"(declare-const {smt_symbol(name, step)} (_ BitVec {width}))")
    lines.append(f"(assert {term_to_smt(formula)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def iter_subterms(node: Term) -> Iterator[Term]:
    stack: list[Term] = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, BinOp):
            stack.append(n.a)
            stack.append(n.b)
        elif isinstance(n, (BvNot, Not)):
            stack.append(n.a)
        elif isinstance(n, Cmp):
            stack.append(n.a)
            stack.append(n.b)
        elif isinstance(n, BoolOp):
            stack.extend(n.args)
