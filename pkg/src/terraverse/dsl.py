"""Terrain program language: AST, parser, evaluator and canonical formatter.

A program describes an obstacle course as an ordered list of segments laid
out along the forward axis, plus eight goals. Every numeric field is an
arithmetic expression over the difficulty variable ``d`` in [0, 1].

    terrain "gap_run" {
      doc "Two gaps that widen with difficulty."
      platform { length: 2.0, height: 0.0 }
      gap { length: 0.2 + 0.6 * d, depth: 1.5 }
      platform { length: 3.0, height: 0.0 }
      goals auto
    }
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional, Union

SEGMENT_PARAMS: dict[str, tuple[str, ...]] = {
    "platform": ("length", "height"),
    "gap": ("length", "depth"),
    "ramp": ("length", "start_height", "end_height"),
    "stairs": ("steps", "step_length", "step_height"),
    "box": ("length", "height"),
    "beam": ("length", "height", "width"),
    "poles": ("count", "spacing", "pole_width"),
}
OPTIONAL_PARAMS = ("width", "lateral_offset")
FUNCTIONS = {"min": 2, "max": 2, "round": 1}
GOAL_COUNT = 8


class DslError(Exception):
    """Base class for every error raised while reading a terrain program."""


class DslSyntaxError(DslError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ArityError(DslError):
    """Wrong parameter set for a segment, function or goal list."""


class UnknownKindError(DslError):
    pass


class StructureError(DslError):
    """Program-level invariant broken (e.g. first segment is not a platform)."""


class EvalError(DslError):
    pass


class DivisionWarning(UserWarning):
    """A divisor expression reaches zero somewhere on the sampled difficulty range."""


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "d"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Segment:
    kind: str
    params: tuple[tuple[str, Expr], ...]

    def __post_init__(self):
        if self.kind not in SEGMENT_PARAMS:
            raise UnknownKindError(f"unknown segment kind {self.kind!r}")
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ArityError(f"{self.kind}: duplicate field")
        required = SEGMENT_PARAMS[self.kind]
        missing = [n for n in required if n not in names]
        if missing:
            raise ArityError(f"{self.kind}: missing field(s) {', '.join(missing)}")
        extra = [n for n in names if n not in required and n not in OPTIONAL_PARAMS]
        if extra:
            raise ArityError(f"{self.kind}: unexpected field(s) {', '.join(extra)}")
        # canonical order: required params, then width, then lateral_offset
        order = {n: i for i, n in enumerate(required + OPTIONAL_PARAMS)}
        object.__setattr__(self, "params", tuple(sorted(self.params, key=lambda p: order[p[0]])))

    def get(self, name: str) -> Optional[Expr]:
        for n, e in self.params:
            if n == name:
                return e
        return None

    def __getitem__(self, name: str) -> Expr:
        e = self.get(name)
        if e is None:
            raise KeyError(name)
        return e

    def replace(self, name: str, expr: Expr) -> "Segment":
        params = [(n, expr if n == name else e) for n, e in self.params]
        if self.get(name) is None:
            params.append((name, expr))
        return Segment(self.kind, tuple(params))


@dataclass(frozen=True)
class TerrainProgram:
    name: str
    segments: tuple[Segment, ...]
    goals: Optional[tuple[tuple[Expr, Expr], ...]] = None  # None means `goals auto`
    doc: str = ""

    def __post_init__(self):
        if not self.segments:
            raise StructureError("a program needs at least one segment")
        if self.segments[0].kind != "platform":
            raise StructureError("the first segment must be a platform (spawn area)")
        if self.goals is not None and len(self.goals) != GOAL_COUNT:
            raise ArityError(f"expected {GOAL_COUNT} goals, got {len(self.goals)}")


# --------------------------------------------------------------------------
# Evaluation

def round_half_away(x: float, ndigits: int = 0) -> float:
    scale = 10.0 ** ndigits
    return math.copysign(math.floor(abs(x) * scale + 0.5), x) / scale


def eval_expr(e: Expr, d: float) -> float:
    """Evaluate ``e`` at difficulty ``d``; raises EvalError on division by zero."""
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"difficulty must lie in [0, 1], got {d}")
    return _eval(e, d)


def _eval(e: Expr, d: float) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return d
    if isinstance(e, Neg):
        return -_eval(e.operand, d)
    if isinstance(e, BinOp):
        a = _eval(e.left, d)
        b = _eval(e.right, d)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise EvalError(f"division by zero at d={d}")
        return a / b
    if isinstance(e, Call):
        vals = [_eval(a, d) for a in e.args]
        if e.fn == "min":
            return min(vals)
        if e.fn == "max":
            return max(vals)
        return round_half_away(vals[0], int(vals[1]) if len(vals) > 1 else 0)
    raise TypeError(f"not an expression: {e!r}")


def iter_nodes(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Neg):
        yield from iter_nodes(e.operand)
    elif isinstance(e, BinOp):
        yield from iter_nodes(e.left)
        yield from iter_nodes(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from iter_nodes(a)


def program_exprs(p: TerrainProgram) -> Iterator[Expr]:
    for seg in p.segments:
        for _, e in seg.params:
            yield e
    for gx, gy in p.goals or ():
        yield gx
        yield gy


def _division_risk(divisor: Expr, samples: int = 101) -> bool:
    prev = None
    for k in range(samples):
        try:
            v = _eval(divisor, k / (samples - 1))
        except EvalError:
            return True
        if v == 0.0 or (prev is not None and (v > 0) != (prev > 0)):
            return True
        prev = v
    return False


# --------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<range>\.\.)
  | (?P<number>(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[{}()\[\],:+\-*/])
    """,
    re.VERBOSE,
)
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "string":
            raw = m.group()[1:-1]
            value = re.sub(r"\\(.)", lambda g: _ESCAPES.get(g.group(1), g.group(1)), raw)
            tokens.append(Token("string", value, line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return DslSyntaxError(f"{msg}, found {found}", tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("sym", "ident", "range") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        tok = self.tok
        self.i += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(f"expected {what}")
        tok = self.tok
        self.i += 1
        return tok

    def number(self) -> float:
        neg = False
        if self.at("-"):
            self.i += 1
            neg = True
        v = float(self.expect_kind("number", "number").text)
        return -v if neg else v

    def program(self) -> TerrainProgram:
        self.expect("terrain")
        name = self.expect_kind("string", "program name string").text
        self.expect("{")
        doc = ""
        if self.at("doc"):
            self.i += 1
            doc = self.expect_kind("string", "doc string").text
        if self.at("param"):
            self.i += 1
            self.expect("d")
            self.expect(":")
            self.number()
            self.expect("..")
            self.number()
        segments = []
        while self.tok.kind == "ident" and self.tok.text != "goals":
            segments.append(self.segment())
        if not segments:
            raise self.error("expected at least one segment")
        goals = self.goals()
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error("expected end of input")
        if segments[0].kind != "platform":
            raise StructureError("the first segment must be a platform (spawn area)")
        return TerrainProgram(name=name, segments=tuple(segments), goals=goals, doc=doc)

    def segment(self) -> Segment:
        kind_tok = self.tok
        if kind_tok.text not in SEGMENT_PARAMS:
            raise UnknownKindError(
                f"unknown segment kind {kind_tok.text!r} (line {kind_tok.line}, column {kind_tok.col})"
            )
        self.i += 1
        self.expect("{")
        fields = [self.field()]
        while self.at(","):
            self.i += 1
            fields.append(self.field())
        self.expect("}")
        return Segment(kind_tok.text, tuple(fields))

    def field(self) -> tuple[str, Expr]:
        name = self.expect_kind("ident", "field name").text
        self.expect(":")
        return name, self.expr()

    def goals(self) -> Optional[tuple[tuple[Expr, Expr], ...]]:
        self.expect("goals")
        if self.at("auto"):
            self.i += 1
            return None
        self.expect("[")
        goals = [self.goal()]
        while self.at(","):
            self.i += 1
            goals.append(self.goal())
        self.expect("]")
        if len(goals) != GOAL_COUNT:
            raise ArityError(f"expected {GOAL_COUNT} goals, got {len(goals)}")
        return tuple(goals)

    def goal(self) -> tuple[Expr, Expr]:
        self.expect("(")
        x = self.expr()
        self.expect(",")
        y = self.expr()
        self.expect(")")
        return x, y

    def expr(self) -> Expr:
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.at("*") or self.at("/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error("number out of range", tok)
            return Num(value)
        if self.at("-"):
            self.i += 1
            if self.tok.kind == "number":
                return Num(-self.factor().value)
            return Neg(self.factor())
        if self.at("("):
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            if tok.text == "d":
                self.i += 1
                return Var()
            if tok.text in FUNCTIONS:
                self.i += 1
                self.expect("(")
                args = [self.expr()]
                while self.at(","):
                    self.i += 1
                    args.append(self.expr())
                self.expect(")")
                want = FUNCTIONS[tok.text]
                ok = len(args) in (1, 2) if tok.text == "round" else len(args) == want
                if not ok:
                    raise ArityError(f"{tok.text}() takes {want} argument(s), got {len(args)}")
                return Call(tok.text, tuple(args))
            raise self.error("unknown name in expression (only `d` is defined)")
        raise self.error("expected expression")


def parse_program(text: str) -> TerrainProgram:
    """Parse DSL source; warns with DivisionWarning on divisors that may hit zero."""
    prog = _Parser(text).program()
    for e in program_exprs(prog):
        for node in iter_nodes(e):
            if isinstance(node, BinOp) and node.op == "/" and _division_risk(node.right):
                warnings.warn(
                    f"{prog.name}: divisor `{format_expr(node.right)}` reaches zero for some d",
                    DivisionWarning,
                    stacklevel=2,
                )
    return prog


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error("expected end of expression")
    return e


# --------------------------------------------------------------------------
# Formatter

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_number(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot format non-finite literal {v}")
    return repr(float(v))


def format_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Var):
        return "d"
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        if isinstance(e.operand, (BinOp, Num, Neg)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(format_expr(a) for a in e.args)})"
    prec = _PREC[e.op]
    left = format_expr(e.left)
    right = format_expr(e.right)
    if isinstance(e.left, BinOp) and _PREC[e.left.op] < prec:
        left = f"({left})"
    if isinstance(e.right, BinOp) and _PREC[e.right.op] <= prec:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def format_segment(seg: Segment) -> str:
    fields = ", ".join(f"{n}: {format_expr(e)}" for n, e in seg.params)
    return f"{seg.kind} {{ {fields} }}"


def format_program(p: TerrainProgram) -> str:
    lines = [f"terrain {_quote(p.name)} {{"]
    if p.doc:
        lines.append(f"  doc {_quote(p.doc)}")
    lines.append("  param d: 0.0..1.0")
    lines.extend(f"  {format_segment(s)}" for s in p.segments)
    if p.goals is None:
        lines.append("  goals auto")
    else:
        lines.append("  goals [")
        goal_lines = [f"    ({format_expr(x)}, {format_expr(y)})" for x, y in p.goals]
        lines.append(",\n".join(goal_lines))
        lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


# small constructors used by generators and tests

def num(v: float) -> Num:
    return Num(float(v))


def linear(a: float, b: float) -> Expr:
    """``a + b * d`` (with ``b`` possibly negative)."""
    return BinOp("+", Num(float(a)), BinOp("*", Num(float(b)), Var()))


def seg(kind: str, **params) -> Segment:
    return Segment(kind, tuple((k, v if isinstance(v, (Num, Var, Neg, BinOp, Call)) else num(v))
                               for k, v in params.items()))
