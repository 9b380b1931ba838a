"""Self-contained SMT-LIB 2 interpreter for quantifier-free bit-vectors.

Run as a subprocess (``python3 -m bikind.smtshim``) it serves as the
external solver behind ``--solver cmd:...`` in environments without a real
SMT solver on PATH. It reads commands incrementally from stdin — so a
driver may stream a script, read the check-sat answer, then keep issuing
get-value requests — and answers on stdout.

Everything here is deliberately independent of the rest of the package:
its own s-expression reader, its own term representation (plain tuples),
its own search. Cross-checking the built-in solver against this module
therefore exercises two separately written decision procedures plus the
wire format between them.

Supported commands: set-logic, set-option, declare-const (BitVec sorts),
assert, check-sat, get-value, exit. Supported operators: the QF_BV core
(bvadd bvsub bvmul bvudiv bvsdiv bvurem bvsrem bvand bvor bvxor bvshl
bvlshr bvashr bvnot), comparisons (= bvult bvule bvslt bvsle), and the
boolean connectives (and or not), with #x / #b literals.
"""

import os
import sys

BUDGET = 1 << 21


class Unknown(Exception):
    """Search budget exhausted."""


# ---------------------------------------------------------------------------
# s-expression reading (incremental: consume stdin as it arrives)


class Reader:
    def __init__(self, fd: int):
        self.fd = fd
        self.buf = ""
        self.pos = 0

    def _more(self) -> bool:
        chunk = os.read(self.fd, 65536)
        if not chunk:
            return False
        self.buf = self.buf[self.pos:] + chunk.decode(errors="replace")
        self.pos = 0
        return True

    def _peek(self):
        while True:
            if self.pos < len(self.buf):
                return self.buf[self.pos]
            if not self._more():
                return None

    def _skip_space(self):
        while True:
            ch = self._peek()
            if ch is None:
                return
            if ch == ";":
                while ch is not None and ch != "\n":
                    self.pos += 1
                    ch = self._peek()
                continue
            if not ch.isspace():
                return
            self.pos += 1

    def read(self):
        """Next s-expression: a token string or a nested list; None at EOF."""
        self._skip_space()
        ch = self._peek()
        if ch is None:
            return None
        if ch == "(":
            self.pos += 1
            items = []
            while True:
                self._skip_space()
                ch = self._peek()
                if ch is None:
                    return None
                if ch == ")":
                    self.pos += 1
                    return items
                items.append(self.read())
        start = self.pos
        while True:
            ch = self._peek()
            if ch is None or ch.isspace() or ch in "()":
                break
            self.pos += 1
        return self.buf[start:self.pos]


# ---------------------------------------------------------------------------
# terms: ("c", value, width) | ("v", name) | (op, arg, ...); bools are bare
# True/False. Every or-node carries the position it had in the input —
# ("or", pos, arg, ...) — so search can always branch the textually
# earliest pending choice.


def _to_signed(v: int, w: int) -> int:
    return v - (1 << w) if v >> (w - 1) else v


def _bv_apply(op: str, a: int, b: int, w: int) -> int:
    m = (1 << w) - 1
    if op == "bvadd":
        return (a + b) & m
    if op == "bvsub":
        return (a - b) & m
    if op == "bvmul":
        return (a * b) & m
    if op == "bvudiv":
        return m if b == 0 else a // b
    if op == "bvurem":
        return a if b == 0 else a % b
    if op == "bvsdiv":
        if b == 0:
            return 1 if a >> (w - 1) else m
        sa, sb = _to_signed(a, w), _to_signed(b, w)
        q = abs(sa) // abs(sb)
        return (-q if (sa < 0) != (sb < 0) else q) & m
    if op == "bvsrem":
        if b == 0:
            return a
        sa, sb = _to_signed(a, w), _to_signed(b, w)
        r = abs(sa) % abs(sb)
        return (-r if sa < 0 else r) & m
    if op == "bvand":
        return a & b
    if op == "bvor":
        return a | b
    if op == "bvxor":
        return a ^ b
    if op == "bvshl":
        return (a << b) & m if b < w else 0
    if op == "bvlshr":
        return a >> b if b < w else 0
    if op == "bvashr":
        if b >= w:
            return m if a >> (w - 1) else 0
        return (_to_signed(a, w) >> b) & m
    raise ValueError("bad op " + op)


def _cmp_apply(op: str, a: int, b: int, w: int) -> bool:
    if op == "=":
        return a == b
    if op == "bvult":
        return a < b
    if op == "bvule":
        return a <= b
    if op == "bvslt":
        return _to_signed(a, w) < _to_signed(b, w)
    return _to_signed(a, w) <= _to_signed(b, w)


_BV_OPS = frozenset([
    "bvadd", "bvsub", "bvmul", "bvudiv", "bvsdiv", "bvurem", "bvsrem",
    "bvand", "bvor", "bvxor", "bvshl", "bvlshr", "bvashr",
])
_CMP_OPS = frozenset(["=", "bvult", "bvule", "bvslt", "bvsle"])


class Builder:
    """Turns parsed s-expressions into terms, numbering every or-node."""

    def __init__(self, widths):
        self.widths = widths
        self.counter = 0

    def build(self, sx):
        if isinstance(sx, str):
            if sx == "true":
                return True
            if sx == "false":
                return False
            if sx.startswith("#x"):
                return ("c", int(sx[2:], 16), 4 * (len(sx) - 2))
            if sx.startswith("#b"):
                return ("c", int(sx[2:], 2), len(sx) - 2)
            if sx in self.widths:
                return ("v", sx)
            raise ValueError("unknown symbol " + sx)
        head = sx[0]
        args = [self.build(a) for a in sx[1:]]
        if head == "not":
            return ("not", args[0])
        if head == "and":
            return ("and",) + tuple(args)
        if head == "or":
            self.counter += 1
            return ("or", self.counter) + tuple(args)
        if head == "bvnot" or head in _CMP_OPS or head in _BV_OPS:
            return (head,) + tuple(args)
        raise ValueError("unknown operator " + str(head))


def _find(parent, name):
    while name in parent:
        name = parent[name]
    return name


def _reduce(t, env, parent, widths):
    """Partial evaluation under assignment env and variable aliases parent.
    Returns True/False, a ("c", v, w) constant, or a smaller term whose
    variables are alias representatives."""
    if t is True or t is False:
        return t
    op = t[0]
    if op == "c":
        return t
    if op == "v":
        rep = _find(parent, t[1])
        v = env.get(rep)
        return ("v", rep) if v is None else ("c", v, widths[rep])
    if op == "not":
        a = _reduce(t[1], env, parent, widths)
        if a is True or a is False:
            return not a
        if a[0] == "not":
            return a[1]
        if a[0] == "and":
            return ("or", 0) + tuple(("not", x) for x in a[1:])
        if a[0] == "or":
            return ("and",) + tuple(("not", x) for x in a[2:])
        return ("not", a)
    if op == "and":
        out = []
        for x in t[1:]:
            r = _reduce(x, env, parent, widths)
            if r is False:
                return False
            if r is not True:
                out.append(r)
        if not out:
            return True
        return out[0] if len(out) == 1 else ("and",) + tuple(out)
    if op == "or":
        out = []
        for x in t[2:]:
            r = _reduce(x, env, parent, widths)
            if r is True:
                return True
            if r is not False:
                out.append(r)
        if not out:
            return False
        return out[0] if len(out) == 1 else ("or", t[1]) + tuple(out)
    if op == "bvnot":
        a = _reduce(t[1], env, parent, widths)
        if a[0] == "c":
            return ("c", a[1] ^ ((1 << a[2]) - 1), a[2])
        return ("bvnot", a)
    a = _reduce(t[1], env, parent, widths)
    b = _reduce(t[2], env, parent, widths)
    if op == "=" and a == b:
        return True
    if a[0] == "c" and b[0] == "c":
        if op in _CMP_OPS:
            return _cmp_apply(op, a[1], b[1], a[2])
        return ("c", _bv_apply(op, a[1], b[1], a[2]), a[2])
    return (op, a, b)


def _free_vars(t, out):
    if t is True or t is False:
        return
    if t[0] == "v":
        out.add(t[1])
    elif t[0] != "c":
        for x in (t[2:] if t[0] == "or" else t[1:]):
            _free_vars(x, out)


def _support(t):
    out = set()
    _free_vars(t, out)
    return frozenset(out)


# ---------------------------------------------------------------------------
# value sets: sorted disjoint inclusive (lo, hi) spans of unsigned values


def _span_all(w):
    return [(0, (1 << w) - 1)]


def _span_not(spans, w):
    out, nxt = [], 0
    for lo, hi in spans:
        if nxt <= lo - 1:
            out.append((nxt, lo - 1))
        nxt = hi + 1
    if nxt <= (1 << w) - 1:
        out.append((nxt, (1 << w) - 1))
    return out


def _span_and(a, b):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    out.sort()
    return out


def _span_cmp(op: str, var_left: bool, c: int, w: int):
    """Unsigned spans of v satisfying `v op c` (var_left) or `c op v`."""
    top = (1 << w) - 1
    half = 1 << (w - 1)
    if op == "=":
        return [(c, c)]
    if op in ("bvult", "bvule"):
        if var_left:
            hi = c - 1 if op == "bvult" else c
            return [(0, hi)] if hi >= 0 else []
        lo = c + 1 if op == "bvult" else c
        return [(lo, top)] if lo <= top else []
    # signed order walks half..top (the negatives), then 0..half-1
    strict = op == "bvslt"
    if var_left:
        hi = c - 1 if strict else c
        if c >= half:  # c is negative: v must be deeper negative
            return [(half, hi)] if hi >= half else []
        out = [(half, top)]  # all negatives qualify
        if hi >= 0:
            out.insert(0, (0, hi))
        return out
    lo = c + 1 if strict else c
    if c >= half:  # c negative: v above it in signed order
        out = [(0, half - 1)]  # all non-negatives qualify
        if lo <= top:
            out.append((lo, top))
        return out
    return [(lo, half - 1)] if lo <= half - 1 else []


def _span_size(spans) -> int:
    return sum(hi - lo + 1 for lo, hi in spans)


def _span_values(spans):
    for lo, hi in spans:
        yield from range(lo, hi + 1)


# ---------------------------------------------------------------------------
# search: DFS over the disjunction structure. Frames carry an assignment,
# an alias map, pending atoms and pending choices; atoms and choices are
# indexed by support so a new binding requeues only what it touches.


class Search:
    def __init__(self, widths):
        self.widths = widths
        self.budget = BUDGET

    def spend(self, n=1):
        self.budget -= n
        if self.budget < 0:
            raise Unknown()

    def run(self, constraints):
        stack = [({}, {}, list(constraints), [], [])]
        while stack:
            env, parent, queue, atoms, ors = stack.pop()
            self.spend()
            if not self.propagate(env, parent, queue, atoms, ors):
                continue
            if ors:
                i = min(range(len(ors)), key=lambda j: ors[j][0][1])
                chosen = ors[i][0]
                rest = ors[:i] + ors[i + 1:]
                for arg in reversed(chosen[2:]):
                    stack.append((dict(env), dict(parent), [arg],
                                  list(atoms), list(rest)))
                continue
            model = self.leaf(dict(env), parent, [t for t, _ in atoms])
            if model is not None:
                return {n: model.get(_find(parent, n), 0) for n in self.widths}
        return None

    def propagate(self, env, parent, queue, atoms, ors) -> bool:
        """Drain the queue to a fixpoint, binding equalities against
        constants and aliasing variable-variable equalities. Mutates all
        five structures; False means conflict."""

        def requeue(name):
            for entries in (atoms, ors):
                keep = []
                for entry in entries:
                    if name in entry[1]:
                        queue.append(entry[0])
                    else:
                        keep.append(entry)
                entries[:] = keep

        while queue:
            t = _reduce(queue.pop(), env, parent, self.widths)
            if t is True:
                continue
            if t is False:
                return False
            op = t[0]
            if op == "and":
                queue.extend(t[1:])
            elif op == "or":
                ors.append((t, _support(t)))
            elif op == "=" and t[1][0] == "v" and t[2][0] == "c":
                env[t[1][1]] = t[2][1]
                requeue(t[1][1])
            elif op == "=" and t[2][0] == "v" and t[1][0] == "c":
                env[t[2][1]] = t[1][1]
                requeue(t[2][1])
            elif op == "=" and t[1][0] == "v" and t[2][0] == "v":
                lo, hi = sorted((t[1][1], t[2][1]))
                parent[hi] = lo
                requeue(hi)
            else:
                atoms.append((t, _support(t)))
        return True

    def leaf(self, env, parent, terms):
        """No choices left: pin the remaining variables by span refinement
        over single-variable comparisons, then enumerate whatever is still
        open — inputs of defining equalities before plain variables and
        defined variables last, so a variable equated to an expression
        collapses by reduction instead of being enumerated against it."""
        spans = {}
        live = []
        kept = []
        for t in terms:
            r = _reduce(t, env, parent, self.widths)
            if r is False:
                return None
            if r is True:
                continue
            kept.append(r)
            pos = r[0] != "not"
            c = r if pos else r[1]
            name = None
            if c[0] in _CMP_OPS:
                if c[1][0] == "v" and c[2][0] == "c":
                    name, left, k = c[1][1], True, c[2][1]
                elif c[2][0] == "v" and c[1][0] == "c":
                    name, left, k = c[2][1], False, c[1][1]
            if name is None:
                live.append(r)
                continue
            w = self.widths[name]
            s = _span_cmp(c[0], left, k, w)
            if not pos:
                s = _span_not(s, w)
            cur = spans.get(name, _span_all(w))
            spans[name] = _span_and(cur, s)
            if not spans[name]:
                return None
        if not live:
            model = dict(env)
            for name, s in spans.items():
                model[name] = s[0][0]
            return model
        support = set()
        for t in live:
            _free_vars(t, support)
        if not support:
            raise AssertionError("undecided ground atom")
        defined, inputs = set(), set()
        for r in live:
            if r[0] != "=":
                continue
            for var_side, expr_side in ((r[1], r[2]), (r[2], r[1])):
                if var_side[0] == "v" and expr_side[0] not in ("v", "c"):
                    defined.add(var_side[1])
                    _free_vars(expr_side, inputs)

        def _rank(n):
            group = 0 if n in inputs else 2 if n in defined else 1
            return (group,
                    _span_size(spans.get(n, _span_all(self.widths[n]))), n)

        name = min(support, key=_rank)
        for value in _span_values(spans.get(name, _span_all(self.widths[name]))):
            self.spend()
            child = dict(env)
            child[name] = value
            # recurse on the reduced term list: the bound variable's atoms
            # fold away, and span knowledge for the others is re-derived
            # rather than lost
            model = self.leaf(child, parent, kept)
            if model is not None:
                return model
        return None


# ---------------------------------------------------------------------------
# session


def _format_value(v: int, w: int) -> str:
    if w % 4 == 0:
        return "#x%0*x" % (w // 4, v)
    return "#b" + format(v, "0%db" % w)


def main() -> int:
    reader = Reader(sys.stdin.fileno())
    widths = {}
    asserts = []
    builder = Builder(widths)
    model = None
    while True:
        sx = reader.read()
        if sx is None:
            return 0
        if not isinstance(sx, list) or not sx:
            continue
        cmd = sx[0]
        if cmd in ("set-logic", "set-option"):
            continue
        if cmd == "declare-const":
            widths[sx[1]] = int(sx[2][2])
        elif cmd == "assert":
            asserts.append(builder.build(sx[1]))
        elif cmd == "check-sat":
            try:
                model = Search(widths).run(asserts)
            except Unknown:
                model = None
                print("unknown", flush=True)
            else:
                print("unsat" if model is None else "sat", flush=True)
        elif cmd == "get-value":
            name = sx[1][0]
            v = 0 if model is None else model.get(name, 0)
            print(f"(({name} {_format_value(v, widths[name])}))", flush=True)
        elif cmd == "exit":
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
