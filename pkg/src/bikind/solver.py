"""Satisfiability backends and model-to-trace extraction.

The built-in backend is a backtracking search over the formula's own
disjunctive structure: conjuncts are propagated to a fixpoint (constants
folded, single-branch disjunctions spliced, equalities turned into variable
definitions), the first undecided disjunction is branched on in formula
order, and fully propagated leaves are closed by solving the residual
comparison atoms over per-variable value ranges — analytically for
variable-against-constant shapes of any width, by bounded enumeration
otherwise. Every satisfiable answer is re-evaluated against the formula
before being reported; a global node budget bounds the search.

The external backend speaks SMT-LIB 2 text to a child process and reads
models back with get-value, one declared constant at a time.
"""

from __future__ import annotations

import os
import select
import subprocess
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .formulas import (
    BV, BinOp, Bool, BoolConst, BoolOp, BvNot, Cmp, Const, Not, Term, Var,
    collect_vars, conj, disj, eval_bv_op, eval_cmp, eval_term, iter_subterms,
    mask, neg, smt_symbol, to_signed, to_smtlib_script,
)
from .oracle import Trace, build_trace

BUDGET = 1 << 20

ModelKey = tuple[str, int]
Model = dict[ModelKey, int]


@dataclass
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Model] = None
    reason: str = ""  # "too-large" | "timeout" | "process-failure"

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


class SolverIntegrityError(Exception):
    """A backend produced a model that does not satisfy its formula."""


class _Budget(Exception):
    pass


class _Timeout(Exception):
    pass


# ---------------------------------------------------------------------------
# value ranges: sorted, disjoint, inclusive unsigned intervals

Ranges = list[tuple[int, int]]


def _full(width: int) -> Ranges:
    return [(0, mask(width))]


def _normalize(rs: Ranges) -> Ranges:
    rs = sorted((lo, hi) for lo, hi in rs if lo <= hi)
    out: Ranges = []
    for lo, hi in rs:
        if out and lo <= out[-1][1] + 1:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _intersect(a: Ranges, b: Ranges) -> Ranges:
    out: Ranges = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo <= hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _complement(rs: Ranges, width: int) -> Ranges:
    out: Ranges = []
    prev = 0
    for lo, hi in rs:
        if lo > prev:
            out.append((prev, lo - 1))
        prev = hi + 1
    if prev <= mask(width):
        out.append((prev, mask(width)))
    return out


def _shift(rs: Ranges, off: int, width: int) -> Ranges:
    """Add off to every value, modulo the width; wrapping splits ranges."""
    m = mask(width)
    out: Ranges = []
    for lo, hi in rs:
        lo2, hi2 = (lo + off) & m, (hi + off) & m
        if lo2 <= hi2:
            out.append((lo2, hi2))
        else:
            out.append((lo2, m))
            out.append((0, hi2))
    return _normalize(out)


def _signed_range(lo_s: int, hi_s: int, width: int) -> Ranges:
    """Unsigned representation of the signed interval [lo_s, hi_s]."""
    if lo_s > hi_s:
        return []
    m = mask(width)
    half = 1 << (width - 1)
    lo_s = max(lo_s, -half)
    hi_s = min(hi_s, half - 1)
    if hi_s < 0:
        return [(lo_s + m + 1, hi_s + m + 1)]
    if lo_s >= 0:
        return [(lo_s, hi_s)]
    return _normalize([(0, hi_s), (lo_s + m + 1, m)])


def _ranges_size(rs: Ranges) -> int:
    return sum(hi - lo + 1 for lo, hi in rs)


def _ranges_iter(rs: Ranges):
    for lo, hi in rs:
        yield from range(lo, hi + 1)


def _cmp_ranges(op: str, g: int, width: int, mirrored: bool) -> Ranges:
    """Values u with u op g (or g op u when mirrored)."""
    m = mask(width)
    half = 1 << (width - 1)
    if op == "eq":
        return [(g, g)]
    if not mirrored:
        if op == "ult":
            return [(0, g - 1)] if g > 0 else []
        if op == "ule":
            return [(0, g)]
        if op == "slt":
            return _signed_range(-half, to_signed(g, width) - 1, width)
        if op == "sle":
            return _signed_range(-half, to_signed(g, width), width)
    else:
        if op == "ult":  # g < u
            return [(g + 1, m)] if g < m else []
        if op == "ule":  # g <= u
            return [(g, m)]
        if op == "slt":  # g <s u
            return _signed_range(to_signed(g, width) + 1, half - 1, width)
        if op == "sle":
            return _signed_range(to_signed(g, width), half - 1, width)
    raise ValueError(op)


# ---------------------------------------------------------------------------
# the built-in backend


def _latest_step(node: Term) -> int:
    """Latest time step mentioned anywhere in node. Pending disjunctions are
    branched in this order so choices are explored in execution order and
    whole-trace disjunctions (e.g. "an error is reached at some boundary")
    wait until the run they quantify over is pinned down."""
    return max((t.step for t in iter_subterms(node) if isinstance(t, Var)),
               default=0)


@dataclass
class _Frame:
    queue: deque
    asg: Model
    defs: dict[ModelKey, BV]
    atoms: list[Bool]
    ors: list[tuple[int, int, BoolOp]]  # (latest var step, record order, node)

    def child(self, extra: Bool) -> "_Frame":
        return _Frame(deque([extra] + self.atoms), dict(self.asg),
                      dict(self.defs), [], [])


class _Search:
    """Budget counts decision points: frames taken off the search stack and
    candidate values tried by enumeration. Propagation within a frame is
    polynomial in the formula and is not charged."""

    def __init__(self, budget: int, deadline: Optional[float]):
        self.budget = budget
        self.deadline = deadline
        self.seq = 0

    def spend(self, n: int = 1):
        self.budget -= n
        if self.budget < 0:
            raise _Budget()
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Timeout()

    # -- partial evaluation with definitions

    def eval(self, node: Term, fr: _Frame):
        """Value of node under the frame's assignments and definitions, or
        None when an unresolved variable blocks it."""
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            val = fr.asg.get(node.key)
            if val is not None:
                return val
            d = fr.defs.get(node.key)
            if d is not None:
                got = self.eval(d, fr)
                if got is not None:
                    fr.asg[node.key] = got  # cache resolved chains
                return got
            return None
        if isinstance(node, BinOp):
            a = self.eval(node.a, fr)
            if a is None:
                return None
            b = self.eval(node.b, fr)
            if b is None:
                return None
            return eval_bv_op(node.op, node.width, a, b)
        if isinstance(node, BvNot):
            a = self.eval(node.a, fr)
            return None if a is None else a ^ mask(node.width)
        if isinstance(node, Cmp):
            a = self.eval(node.a, fr)
            if a is None:
                return None
            b = self.eval(node.b, fr)
            if b is None:
                return None
            return eval_cmp(node.op, node.a.width, a, b)
        if isinstance(node, Not):
            a = self.eval(node.a, fr)
            return None if a is None else not a
        if isinstance(node, BoolOp):
            undecided = False
            for arg in node.args:
                v = self.eval(arg, fr)
                if v is None:
                    undecided = True
                elif node.op == "and" and not v:
                    return False
                elif node.op == "or" and v:
                    return True
            return None if undecided else (node.op == "and")
        if isinstance(node, BoolConst):
            return node.value
        raise TypeError(f"not a term: {node!r}")

    def support(self, node: Term, fr: _Frame, out: set[ModelKey]):
        """Unresolved variables feeding node, following definitions."""
        if isinstance(node, Var):
            if node.key in fr.asg:
                return
            d = fr.defs.get(node.key)
            if d is not None:
                self.support(d, fr, out)
            else:
                out.add(node.key)
        elif isinstance(node, (BinOp, Cmp)):
            self.support(node.a, fr, out)
            self.support(node.b, fr, out)
        elif isinstance(node, (BvNot, Not)):
            self.support(node.a, fr, out)
        elif isinstance(node, BoolOp):
            for a in node.args:
                self.support(a, fr, out)

    # -- propagation

    def propagate(self, fr: _Frame) -> bool:
        """Drain the queue; returns False on conflict. Definitions and
        assignments discovered along the way re-trigger the residual atoms."""
        while True:
            changed = False
            while fr.queue:
                c = fr.queue.popleft()
                if isinstance(c, BoolConst):
                    if not c.value:
                        return False
                    continue
                if isinstance(c, BoolOp) and c.op == "and":
                    fr.queue.extend(c.args)
                    continue
                if isinstance(c, BoolOp) and c.op == "or":
                    undecided = []
                    sat = False
                    for arg in c.args:
                        v = self.eval(arg, fr)
                        if v is True:
                            sat = True
                            break
                        if v is None:
                            undecided.append(arg)
                    if sat:
                        continue
                    if not undecided:
                        return False
                    if len(undecided) == 1:
                        fr.queue.append(undecided[0])
                        changed = True
                    else:
                        node = BoolOp("or", tuple(undecided))
                        fr.ors.append((_latest_step(node), self.seq, node))
                        self.seq += 1
                    continue
                if isinstance(c, Not):
                    inner = c.a
                    if isinstance(inner, BoolConst):
                        if inner.value:
                            return False
                        continue
                    if isinstance(inner, Not):
                        fr.queue.append(inner.a)
                        continue
                    if isinstance(inner, BoolOp):
                        flipped = [neg(a) for a in inner.args]
                        fr.queue.append(disj(*flipped) if inner.op == "and"
                                        else conj(*flipped))
                        continue
                    # negated comparison: an atom
                val = self.eval(c, fr)
                if val is True:
                    continue
                if val is False:
                    return False
                if self._try_define(c, fr):
                    changed = True
                    continue
                fr.atoms.append(c)
            if not changed:
                return True
            # definitions may decide atoms recorded earlier
            fr.queue, fr.atoms = deque(fr.atoms), []

    def _try_define(self, c: Bool, fr: _Frame) -> bool:
        """Turn `v == rhs` into a definition when v is untouched and rhs
        does not (transitively) depend on v."""
        if not (isinstance(c, Cmp) and c.op == "eq"):
            return False
        for v, rhs in ((c.a, c.b), (c.b, c.a)):
            if isinstance(v, Var) and v.key not in fr.asg and v.key not in fr.defs:
                dep: set[ModelKey] = set()
                self.support(rhs, fr, dep)
                if v.key not in dep:
                    fr.defs[v.key] = rhs
                    return True
        return False

    # -- leaf solving over residual atoms

    def _linear(self, node: BV, fr: _Frame):
        """Reduce to ('const', g) or ('var', key, offset, width) or None."""
        if isinstance(node, Const):
            return ("const", node.value)
        if isinstance(node, Var):
            val = fr.asg.get(node.key)
            if val is not None:
                return ("const", val)
            d = fr.defs.get(node.key)
            if d is not None:
                return self._linear(d, fr)
            return ("var", node.key, 0, node.width)
        if isinstance(node, BinOp) and node.op in ("add", "sub"):
            a = self._linear(node.a, fr)
            b = self._linear(node.b, fr)
            if a is None or b is None:
                return None
            if a[0] == "const" and b[0] == "const":
                return ("const", eval_bv_op(node.op, node.width, a[1], b[1]))
            if a[0] == "var" and b[0] == "const":
                off = b[1] if node.op == "add" else -b[1]
                return ("var", a[1], (a[2] + off) & mask(a[3]), a[3])
            if a[0] == "const" and b[0] == "var" and node.op == "add":
                return ("var", b[1], (b[2] + a[1]) & mask(b[3]), b[3])
        return None

    def _atom_ranges(self, atom: Bool, fr: _Frame):
        """((var, ranges)) solving a single-variable comparison atom, or
        None when the atom is not of that shape."""
        positive = True
        if isinstance(atom, Not):
            positive, atom = False, atom.a
        if not isinstance(atom, Cmp):
            return None
        a = self._linear(atom.a, fr)
        b = self._linear(atom.b, fr)
        if a is None or b is None:
            return None
        if a[0] == "var" and b[0] == "const":
            _, key, off, width = a
            rs = _cmp_ranges(atom.op, b[1], width, mirrored=False)
        elif a[0] == "const" and b[0] == "var":
            _, key, off, width = b
            rs = _cmp_ranges(atom.op, a[1], width, mirrored=True)
        else:
            return None  # two variables, or both constant (handled by eval)
        if not positive:
            rs = _complement(rs, width)
        return key, _shift(rs, -off & mask(width), width)

    def leaf(self, fr: _Frame, allowed: dict[ModelKey, Ranges],
             widths: dict[ModelKey, int]) -> Optional[_Frame]:
        """Close a frame with no undecided disjunctions: refine per-variable
        ranges from the atoms, then enumerate whatever resists."""
        atoms = list(fr.atoms)
        while True:
            progress = False
            kept = []
            for atom in atoms:
                val = self.eval(atom, fr)
                if val is True:
                    continue
                if val is False:
                    return None
                got = self._atom_ranges(atom, fr)
                if got is None:
                    kept.append(atom)
                    continue
                key, rs = got
                cur = allowed.get(key, _full(widths[key]))
                rs = _intersect(cur, rs)
                if not rs:
                    return None
                allowed[key] = rs
                progress = True
            atoms = kept
            for key, rs in list(allowed.items()):
                if key not in fr.asg and _ranges_size(rs) == 1:
                    fr.asg[key] = rs[0][0]
                    progress = True
            if not progress:
                break
        if not atoms:
            for key, rs in allowed.items():
                if key not in fr.asg:
                    fr.asg[key] = rs[0][0]  # smallest admissible value
            fr.atoms = []
            return fr
        # enumeration fallback: pick the variable with the fewest candidate
        # values and try each in ascending order
        sup: set[ModelKey] = set()
        for atom in atoms:
            self.support(atom, fr, sup)
        assert sup, "undecided atom without unresolved variables"

        def key_size(k):
            return (_ranges_size(allowed.get(k, _full(widths[k]))), k)

        pick = min(sup, key=key_size)
        candidates = allowed.get(pick, _full(widths[pick]))
        self.spend(_ranges_size(candidates))
        for val in _ranges_iter(candidates):
            sub = _Frame(deque(), dict(fr.asg), fr.defs, list(atoms), [])
            sub.asg[pick] = val
            sub_allowed = dict(allowed)
            sub_allowed[pick] = [(val, val)]
            got = self.leaf(sub, sub_allowed, widths)
            if got is not None:
                return got
        return None


def solve_builtin(formula: Bool, budget: int = BUDGET,
                  timeout: Optional[float] = None) -> SolveResult:
    variables = collect_vars(formula)
    deadline = time.monotonic() + timeout if timeout else None
    search = _Search(budget, deadline)
    stack = [(_Frame(deque([formula]), {}, {}, [], []), {})]
    try:
        while stack:
            fr, allowed = stack.pop()
            search.spend()
            if not search.propagate(fr):
                continue
            if fr.ors:
                pick = min(range(len(fr.ors)), key=lambda i: fr.ors[i][:2])
                chosen = fr.ors[pick][2]
                rest = fr.ors[:pick] + fr.ors[pick + 1:]
                branches = []
                decided = False
                for arg in chosen.args:
                    v = search.eval(arg, fr)
                    if v is True:
                        decided = True  # satisfied since it was recorded
                        break
                    if v is None:
                        branches.append(arg)
                if decided or not branches:
                    if decided:
                        retry = _Frame(deque(fr.atoms), fr.asg, fr.defs, [], rest)
                        stack.append((retry, allowed))
                    # else every branch is false: conflict, drop the frame
                    continue
                for arg in reversed(branches):
                    child = fr.child(arg)
                    child.ors = list(rest)
                    stack.append((child, dict(allowed)))
                continue
            done = search.leaf(fr, dict(allowed), variables)
            if done is not None:
                return SolveResult("sat", _finish_model(done, variables, search))
        return SolveResult("unsat")
    except _Budget:
        return SolveResult("unknown", reason="too-large")
    except _Timeout:
        return SolveResult("unknown", reason="timeout")


def _finish_model(fr: _Frame, variables: dict[ModelKey, int],
                  search: _Search) -> Model:
    model: Model = {}
    for key in variables:
        if key not in fr.asg and key not in fr.defs:
            fr.asg[key] = 0  # unconstrained: complete deterministically
    for key, width in variables.items():
        val = search.eval(Var(key[0], key[1], width), fr)
        model[key] = (val if val is not None else 0) & mask(width)
    return model


# ---------------------------------------------------------------------------
# backends


class BuiltinSolver:
    ident = "builtin"

    def __init__(self, budget: int = BUDGET):
        self.budget = budget

    def check(self, formula: Bool, timeout: Optional[float] = None) -> SolveResult:
        return solve_builtin(formula, self.budget, timeout)


class ProcessSolver:
    """Child process speaking SMT-LIB 2: script + check-sat on stdin, then
    one get-value per declared constant when the answer is sat."""

    def __init__(self, command: list[str]):
        self.command = command
        self.ident = "cmd:" + " ".join(command)

    def check(self, formula: Bool, timeout: Optional[float] = None) -> SolveResult:
        variables = collect_vars(formula)
        script = "(set-option :produce-models true)\n" + to_smtlib_script(formula)
        deadline = time.monotonic() + (timeout if timeout else 3600.0)
        try:
            proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                    stdout=subprocess.PIPE,
                                    stderr=subprocess.DEVNULL)
        except OSError:
            return SolveResult("unknown", reason="process-failure")
        try:
            proc.stdin.write(script.encode())
            proc.stdin.flush()
            answer = _read_sexpr_line(proc, deadline)
            if answer == "unsat":
                return SolveResult("unsat")
            if answer != "sat":
                return SolveResult("unknown", reason="process-failure")
            model: Model = {}
            for (name, step), width in sorted(variables.items()):
                proc.stdin.write(f"(get-value ({smt_symbol(name, step)}))\n".encode())
                proc.stdin.flush()
                reply = _read_sexpr_line(proc, deadline)
                value = _parse_value(reply)
                if value is None:
                    return SolveResult("unknown", reason="process-failure")
                model[(name, step)] = value & mask(width)
            return SolveResult("sat", model)
        except _Timeout:
            return SolveResult("unknown", reason="timeout")
        except (BrokenPipeError, OSError):
            return SolveResult("unknown", reason="process-failure")
        finally:
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.kill()
            proc.wait()


def _read_sexpr_line(proc: subprocess.Popen, deadline: float) -> str:
    """Read one answer: a bare word or a balanced s-expression."""
    buf = bytearray()
    depth = 0
    fd = proc.stdout.fileno()
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise _Timeout()
        ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
        if not ready:
            if proc.poll() is not None and not buf:
                raise BrokenPipeError()
            continue
        chunk = os.read(fd, 4096)
        if not chunk:
            if buf:
                break
            raise BrokenPipeError()
        buf.extend(chunk)
        depth = buf.count(b"(") - buf.count(b")")
        if b"\n" in buf and depth <= 0:
            break
    return buf.decode(errors="replace").strip()


def _parse_value(reply: str) -> Optional[int]:
    """Pull the constant out of ((sym value)); value may be #x.., #b..,
    (_ bvN w), or a decimal."""
    tokens = reply.replace("(", " ").replace(")", " ").split()
    for i, tok in enumerate(tokens):
        if tok.startswith("#x"):
            return int(tok[2:], 16)
        if tok.startswith("#b"):
            return int(tok[2:], 2)
        if tok == "_" and i + 1 < len(tokens) and tokens[i + 1].startswith("bv"):
            return int(tokens[i + 1][2:])
    return None


def make_backend(spec: str):
    if spec == "builtin":
        return BuiltinSolver()
    if spec.startswith("cmd:"):
        import shlex
        return ProcessSolver(shlex.split(spec[4:]))
    raise ValueError(f"unknown solver backend {spec!r}")


def check_sat(formula: Bool, backend, timeout: Optional[float] = None) -> SolveResult:
    """Run the backend; satisfiable answers are re-evaluated against the
    formula (with missing variables completed to 0) before being trusted."""
    res = backend.check(formula, timeout)
    if not res.is_sat:
        return res
    model = dict(res.model or {})
    for key, width in collect_vars(formula).items():
        model.setdefault(key, 0)
    if eval_term(formula, model) is not True:
        raise SolverIntegrityError(
            f"backend {getattr(backend, 'ident', '?')} returned a bad model")
    res.model = model
    return res


# ---------------------------------------------------------------------------
# models -> traces


def extract_trace(model: Model, ts, steps: int, kind: str) -> Trace:
    """Read the run off a model of a k-step encoding: one valuation per
    micro index, stutters collapsed, engine-step indices recomputed, havoc
    inputs recovered from the connecting edges."""
    folded = kind == "full"
    micros = 0 if steps == 0 else ts.plan.micros(steps, folded)
    states = model_states(model, ts, micros)
    return build_trace(ts.cfg, states, kind)


def model_states(model: Model, ts, micros: int) -> list[dict[str, int]]:
    states = []
    for t in range(micros + 1):
        st = {name: model.get((name, t), 0) & mask(width)
              for name, width, _ in ts.state_vars}
        states.append(st)
    return states
