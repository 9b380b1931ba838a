"""Frontend for the input language: lexer, parser, AST, type checker.

The language is a small imperative one: fixed-width integer globals declared
up front (u8/u16/u32/i8/i16/i32, optional constant initializer), then a
statement list built from assignment, havoc, assert, assume, break, halt,
if/else-if/else, loop and while (while is parse-time sugar for
loop { if (!cond) { break; } ... }). Expressions are C-like with
two's-complement wraparound. `//` starts a line comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


class SourceError(Exception):
    """A frontend error with a category and a 1-based source position.

    Categories: lexical, syntax, undeclared-identifier, type-mismatch,
    duplicate-declaration, lowering.
    """

    def __init__(self, category: str, message: str, line: int, col: int):
        super().__init__(f"{category} error at {line}:{col}: {message}")
        self.category = category
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class BvType:
    width: int
    signed: bool

    def __str__(self) -> str:
        return f"{'i' if self.signed else 'u'}{self.width}"


BOOL = "bool"
TYPES = {
    "u8": BvType(8, False), "u16": BvType(16, False), "u32": BvType(32, False),
    "i8": BvType(8, True), "i16": BvType(16, True), "i32": BvType(32, True),
}


def type_max(ty: BvType) -> int:
    return (1 << (ty.width - 1)) - 1 if ty.signed else (1 << ty.width) - 1


def type_min(ty: BvType) -> int:
    return -(1 << (ty.width - 1)) if ty.signed else 0


# ---------------------------------------------------------------------------
# AST


@dataclass
class IntLit:
    value: int
    pos: tuple[int, int] = field(compare=False, default=(0, 0))
    ty: Optional[BvType] = field(compare=False, default=None)


@dataclass
class BoolLit:
    value: bool
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Name:
    ident: str
    pos: tuple[int, int] = field(compare=False, default=(0, 0))
    ty: Optional[BvType] = field(compare=False, default=None)


@dataclass
class Unary:
    op: str  # ! ~
    a: "Expr"
    pos: tuple[int, int] = field(compare=False, default=(0, 0))
    ty: Union[BvType, str, None] = field(compare=False, default=None)


@dataclass
class Binary:
    op: str  # || && | ^ & == != < <= > >= << >> + - * / %
    a: "Expr"
    b: "Expr"
    pos: tuple[int, int] = field(compare=False, default=(0, 0))
    ty: Union[BvType, str, None] = field(compare=False, default=None)


Expr = Union[IntLit, BoolLit, Name, Unary, Binary]


@dataclass
class VarDecl:
    name: str
    ty: BvType
    init: Optional[int]
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Assign:
    name: str
    expr: Expr
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Havoc:
    name: str
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Assert:
    expr: Expr
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Assume:
    expr: Expr
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Break:
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Halt:
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class If:
    arms: list[tuple[Expr, list["Stmt"]]]
    orelse: Optional[list["Stmt"]]
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass
class Loop:
    body: list["Stmt"]
    pos: tuple[int, int] = field(compare=False, default=(0, 0))


Stmt = Union[Assign, Havoc, Assert, Assume, Break, Halt, If, Loop]


@dataclass
class Program:
    decls: list[VarDecl]
    body: list[Stmt]


# ---------------------------------------------------------------------------
# lexer

KEYWORDS = {
    "var", "havoc", "assert", "assume", "break", "halt",
    "if", "else", "loop", "while", "true", "false",
} | set(TYPES)

_PUNCT = [
    "&&", "||", "==", "!=", "<=", ">=", "<<", ">>",
    "(", ")", "{", "}", ";", ":", "=", "<", ">",
    "+", "-", "*", "/", "%", "&", "|", "^", "!", "~",
]


@dataclass
class Token:
    kind: str  # keyword/punct literal, or IDENT, INT, EOF
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            start = i
            while i < n and source[i].isdigit():
                i += 1
            if i < n and (source[i].isalpha() or source[i] == "_"):
                raise SourceError("lexical", f"malformed number near {source[start:i + 1]!r}", line, col)
            tokens.append(Token("INT", source[start:i], line, col))
            col += i - start
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            text = source[start:i]
            kind = text if text in KEYWORDS else "IDENT"
            tokens.append(Token(kind, text, line, col))
            col += i - start
            continue
        for p in _PUNCT:
            if source.startswith(p, i):
                tokens.append(Token(p, p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise SourceError("lexical", f"unexpected character {c!r}", line, col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser

_BIN_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5,
    "==": 6, "!=": 6,
    "<": 7, "<=": 7, ">": 7, ">=": 7,
    "<<": 8, ">>": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise SourceError("syntax", f"expected {kind!r}, found {tok.text or 'end of input'!r}",
                              tok.line, tok.col)
        return self.next()

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    # program := decl* stmt*
    def program(self) -> Program:
        decls = []
        while self.at("var"):
            decls.append(self.decl())
        body = self.stmt_list(until="EOF")
        self.expect("EOF")
        if not decls and not body:
            raise SourceError("syntax", "expected a declaration or statement",
                              1, 1)
        return Program(decls, body)

    def decl(self) -> VarDecl:
        tok = self.expect("var")
        name = self.expect("IDENT").text
        self.expect(":")
        ty_tok = self.next()
        if ty_tok.kind not in TYPES:
            raise SourceError("syntax", f"expected a type, found {ty_tok.text!r}", ty_tok.line, ty_tok.col)
        init = None
        if self.at("="):
            self.next()
            init = int(self.expect("INT").text)
        self.expect(";")
        return VarDecl(name, TYPES[ty_tok.kind], init, (tok.line, tok.col))

    def stmt_list(self, until: str) -> list[Stmt]:
        out: list[Stmt] = []
        while not self.at(until):
            out.append(self.stmt())
        return out

    def block(self) -> list[Stmt]:
        self.expect("{")
        body = self.stmt_list(until="}")
        self.expect("}")
        return body

    def stmt(self) -> Stmt:
        tok = self.peek()
        pos = (tok.line, tok.col)
        if tok.kind == "IDENT":
            name = self.next().text
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return Assign(name, e, pos)
        if tok.kind == "havoc":
            self.next()
            name = self.expect("IDENT").text
            self.expect(";")
            return Havoc(name, pos)
        if tok.kind in ("assert", "assume"):
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Assert(e, pos) if tok.kind == "assert" else Assume(e, pos)
        if tok.kind == "break":
            self.next()
            self.expect(";")
            return Break(pos)
        if tok.kind == "halt":
            self.next()
            self.expect(";")
            return Halt(pos)
        if tok.kind == "if":
            return self.if_stmt()
        if tok.kind == "loop":
            self.next()
            return Loop(self.block(), pos)
        if tok.kind == "while":
            # sugar: while (e) { body } == loop { if (!e) { break; } body }
            self.next()
            cond = self.expr()
            body = self.block()
            guard = If([(Unary("!", cond, pos), [Break(pos)])], None, pos)
            return Loop([guard] + body, pos)
        raise SourceError("syntax", f"unexpected {tok.text or 'end of input'!r}", tok.line, tok.col)

    def if_stmt(self) -> If:
        tok = self.expect("if")
        arms = [(self.expr(), self.block())]
        orelse = None
        while self.at("else"):
            self.next()
            if self.at("if"):
                self.next()
                arms.append((self.expr(), self.block()))
            else:
                orelse = self.block()
                break
        return If(arms, orelse, (tok.line, tok.col))

    # precedence-climbing expression parser
    def expr(self, min_prec: int = 1) -> Expr:
        left = self.unary()
        while True:
            tok = self.peek()
            prec = _BIN_PREC.get(tok.kind)
            if prec is None or prec < min_prec:
                return left
            self.next()
            right = self.expr(prec + 1)
            left = Binary(tok.kind, left, right, (tok.line, tok.col))

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind in ("!", "~"):
            self.next()
            return Unary(tok.kind, self.unary(), (tok.line, tok.col))
        return self.primary()

    def primary(self) -> Expr:
        tok = self.next()
        if tok.kind == "INT":
            return IntLit(int(tok.text), (tok.line, tok.col))
        if tok.kind in ("true", "false"):
            return BoolLit(tok.kind == "true", (tok.line, tok.col))
        if tok.kind == "IDENT":
            return Name(tok.text, (tok.line, tok.col))
        if tok.kind == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise SourceError("syntax", f"unexpected {tok.text or 'end of input'!r} in expression",
                          tok.line, tok.col)


def parse(source: str) -> Program:
    """Parse a program; raises SourceError on lexical or syntax errors."""
    return _Parser(tokenize(source)).program()


# ---------------------------------------------------------------------------
# type checking

_ARITH = {"+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>"}
_COMPARE = {"==", "!=", "<", "<=", ">", ">="}
_LOGICAL = {"&&", "||"}


def _literal_only(e: Expr) -> bool:
    if isinstance(e, IntLit):
        return True
    if isinstance(e, Unary) and e.op == "~":
        return _literal_only(e.a)
    if isinstance(e, Binary) and e.op in _ARITH:
        return _literal_only(e.a) and _literal_only(e.b)
    return False


def check_expr(e: Expr, env: dict[str, BvType], expected: Union[BvType, str, None]):
    """Type an expression, adopting literal widths from context.

    Returns BvType or BOOL and annotates nodes. Every operator requires both
    operands at one width and signedness; comparisons and logical operators
    produce booleans, everything else stays a bit-vector.
    """
    line, col = e.pos
    if isinstance(e, IntLit):
        if expected is None:
            raise SourceError("type-mismatch", "cannot infer the width of this literal", line, col)
        if expected == BOOL:
            raise SourceError("type-mismatch", "integer literal where a boolean is needed", line, col)
        if not (0 <= e.value <= type_max(expected)):
            raise SourceError("type-mismatch", f"literal {e.value} does not fit {expected}", line, col)
        e.ty = expected
        return expected
    if isinstance(e, BoolLit):
        if expected is not None and expected != BOOL:
            raise SourceError("type-mismatch", f"boolean literal where {expected} is needed", line, col)
        return BOOL
    if isinstance(e, Name):
        ty = env.get(e.ident)
        if ty is None:
            raise SourceError("undeclared-identifier", f"{e.ident!r} is not declared", line, col)
        if expected is not None and expected != ty:
            raise SourceError("type-mismatch", f"expected {expected}, got {ty} ({e.ident!r})", line, col)
        e.ty = ty
        return ty
    if isinstance(e, Unary):
        if e.op == "!":
            if expected is not None and expected != BOOL:
                raise SourceError("type-mismatch", f"'!' produces a boolean, not {expected}", line, col)
            check_expr(e.a, env, BOOL)
            e.ty = BOOL
            return BOOL
        # ~ is bitwise and keeps the operand type
        if expected == BOOL:
            raise SourceError("type-mismatch", "'~' produces a bit-vector, not a boolean", line, col)
        ty = check_expr(e.a, env, expected)
        e.ty = ty
        return ty
    if isinstance(e, Binary):
        if e.op in _LOGICAL:
            if expected is not None and expected != BOOL:
                raise SourceError("type-mismatch", f"{e.op!r} produces a boolean, not {expected}", line, col)
            check_expr(e.a, env, BOOL)
            check_expr(e.b, env, BOOL)
            e.ty = BOOL
            return BOOL
        if e.op in _COMPARE:
            if expected is not None and expected != BOOL:
                raise SourceError("type-mismatch", f"{e.op!r} produces a boolean, not {expected}", line, col)
            ty = _check_same_width(e, env, None)
            e.ty = BOOL
            return BOOL
        # arithmetic / bitwise / shifts
        if expected == BOOL:
            raise SourceError("type-mismatch", f"{e.op!r} produces a bit-vector, not a boolean", line, col)
        ty = _check_same_width(e, env, expected)
        e.ty = ty
        return ty
    raise TypeError(f"not an expression: {e!r}")


def _check_same_width(e: Binary, env: dict[str, BvType], expected: Optional[BvType]) -> BvType:
    """Check both operands of a binary operator at one shared bit-vector type."""
    line, col = e.pos
    if expected is not None:
        check_expr(e.a, env, expected)
        check_expr(e.b, env, expected)
        return expected
    if _literal_only(e.a) and _literal_only(e.b):
        raise SourceError("type-mismatch", f"cannot infer operand width of {e.op!r}", line, col)
    if _literal_only(e.a):
        ty = check_expr(e.b, env, None)
        if ty == BOOL:
            raise SourceError("type-mismatch", f"{e.op!r} needs bit-vector operands", line, col)
        check_expr(e.a, env, ty)
        return ty
    ty = check_expr(e.a, env, None)
    if ty == BOOL:
        raise SourceError("type-mismatch", f"{e.op!r} needs bit-vector operands", line, col)
    check_expr(e.b, env, ty)
    return ty


def check_program(prog: Program) -> dict[str, BvType]:
    """Type-check a parsed program; returns the variable environment."""
    env: dict[str, BvType] = {}
    for d in prog.decls:
        line, col = d.pos
        if d.name in env:
            raise SourceError("duplicate-declaration", f"{d.name!r} declared twice", line, col)
        if d.init is not None and not (0 <= d.init <= type_max(d.ty)):
            raise SourceError("type-mismatch", f"initializer {d.init} does not fit {d.ty}", line, col)
        env[d.name] = d.ty
    _check_block(prog.body, env)
    return env


def _check_block(stmts: list[Stmt], env: dict[str, BvType]) -> None:
    for s in stmts:
        line, col = s.pos
        if isinstance(s, Assign):
            ty = env.get(s.name)
            if ty is None:
                raise SourceError("undeclared-identifier", f"{s.name!r} is not declared", line, col)
            check_expr(s.expr, env, ty)
        elif isinstance(s, Havoc):
            if s.name not in env:
                raise SourceError("undeclared-identifier", f"{s.name!r} is not declared", line, col)
        elif isinstance(s, (Assert, Assume)):
            check_expr(s.expr, env, BOOL)
        elif isinstance(s, If):
            for cond, block in s.arms:
                check_expr(cond, env, BOOL)
                _check_block(block, env)
            if s.orelse is not None:
                _check_block(s.orelse, env)
        elif isinstance(s, Loop):
            _check_block(s.body, env)
        # Break/Halt carry nothing to check


def parse_program(source: str) -> Program:
    """Parse and type-check in one step."""
    prog = parse(source)
    check_program(prog)
    return prog


# ---------------------------------------------------------------------------
# pretty printer (used by the parser round-trip tests)


def _expr_source(e: Expr, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Unary):
        return e.op + _expr_source(e.a, 11)
    if isinstance(e, Binary):
        prec = _BIN_PREC[e.op]
        text = f"{_expr_source(e.a, prec)} {e.op} {_expr_source(e.b, prec, right=True)}"
        if prec < parent_prec or (right and prec == parent_prec):
            return f"({text})"
        return text
    raise TypeError(f"not an expression: {e!r}")


def to_source(prog: Program) -> str:
    """Render a program back to concrete syntax (canonical formatting)."""
    lines: list[str] = []
    for d in prog.decls:
        init = f" = {d.init}" if d.init is not None else ""
        lines.append(f"var {d.name}: {d.ty}{init};")
    _stmts_source(prog.body, lines, "")
    return "\n".join(lines) + "\n"


def _stmts_source(stmts: list[Stmt], lines: list[str], indent: str) -> None:
    for s in stmts:
        if isinstance(s, Assign):
            lines.append(f"{indent}{s.name} = {_expr_source(s.expr)};")
        elif isinstance(s, Havoc):
            lines.append(f"{indent}havoc {s.name};")
        elif isinstance(s, Assert):
            lines.append(f"{indent}assert({_expr_source(s.expr)});")
        elif isinstance(s, Assume):
            lines.append(f"{indent}assume({_expr_source(s.expr)});")
        elif isinstance(s, Break):
            lines.append(f"{indent}break;")
        elif isinstance(s, Halt):
            lines.append(f"{indent}halt;")
        elif isinstance(s, If):
            for i, (cond, block) in enumerate(s.arms):
                head = "if" if i == 0 else "} else if"
                lines.append(f"{indent}{head} ({_expr_source(cond)}) {{")
                _stmts_source(block, lines, indent + "    ")
            if s.orelse is not None:
                lines.append(f"{indent}}} else {{")
                _stmts_source(s.orelse, lines, indent + "    ")
            lines.append(f"{indent}}}")
        elif isinstance(s, Loop):
            lines.append(f"{indent}loop {{")
            _stmts_source(s.body, lines, indent + "    ")
            lines.append(f"{indent}}}")
