"""AST node types, diagnostics, and the canonical pretty-printer.

Node equality ignores source positions, so two parses of equivalent text
compare equal; that is what the parse/print round-trip tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

Pos = tuple[int, int]  # (line, col), 1-based

_NOPOS: Pos = (0, 0)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def render(self, filename: str = "<script>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class ScriptError(Exception):
    """Carries one or more diagnostics from lexing, parsing, or validation."""

    def __init__(self, diagnostics, filename: str = "<script>"):
        if isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        self.filename = filename
        super().__init__("\n".join(d.render(filename) for d in self.diagnostics))


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Name(Expr):
    id: str
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # one of < > <= >=
    left: Expr
    right: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Cond(Expr):
    """Python-style conditional: body if test else orelse."""
    body: Expr
    test: Expr
    orelse: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class TimeIndex(Expr):
    """Component value observed at a (grid-snapped) time: name[time_expr]."""
    name: str
    time: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class ShapeList(Expr):
    """Bracketed shape argument, e.g. the [batchsize] in ones([batchsize])."""
    items: tuple[Expr, ...]
    pos: Pos = field(default=_NOPOS, compare=False)


# -- statements -------------------------------------------------------------


class Kind(Enum):
    SDE = "sde"
    FUNCTION = "function"
    UPDATE = "update"


@dataclass(frozen=True)
class ComponentDef:
    name: str
    kind: Kind
    drift: Optional[Expr] = None                 # SDE only; None means zero drift
    vol_terms: tuple[tuple[Expr, str], ...] = ()  # SDE only: (coefficient, brownian)
    expr: Optional[Expr] = None                  # Function/Update right-hand side
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class FunctionDef:
    """Named expression macro, expanded at compile time."""
    name: str
    params: tuple[str, ...]
    body: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class CorrelationDef:
    brownian_a: str
    brownian_b: str
    expr: Expr
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class PayoffDef:
    at_time: Expr
    name: str
    expr: Expr
    discount: Optional[Expr] = None  # None means the bare, undiscounted payoff
    pos: Pos = field(default=_NOPOS, compare=False)


@dataclass(frozen=True)
class ScriptAST:
    function_defs: tuple[FunctionDef, ...]
    components: tuple[ComponentDef, ...]
    correlations: tuple[CorrelationDef, ...]
    inits: tuple[tuple[str, Expr], ...]  # (component name, expr), order preserved
    payoffs: tuple[PayoffDef, ...]

    def component(self, name: str) -> ComponentDef:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def init_map(self) -> dict[str, Expr]:
        return dict(self.inits)


RESERVED = frozenset({"t", "d_t", "batchsize"})
BUILTIN_ARITY = {
    "exp": 1, "log": 1, "sqrt": 1, "positivepart": 1,
    "oneslike": 1, "zeroslike": 1, "ones": 1, "zeros": 1, "max": 2,
}
UPDATE_SUFFIX = "_new"


def is_differential(name: str) -> bool:
    return name.startswith("d_") and len(name) > 2


# -- pretty printer ----------------------------------------------------------

_PREC_COND, _PREC_CMP, _PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_ATOM = range(6)


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return repr(float(v)) if "." in repr(float(v)) else f"{v:.1f}"
    return repr(v)


def format_expr(e: Expr, prec: int = _PREC_COND) -> str:
    if isinstance(e, Num):
        s, p = _fmt_num(e.value), _PREC_ATOM
    elif isinstance(e, Name):
        s, p = e.id, _PREC_ATOM
    elif isinstance(e, Bin):
        p = _PREC_ADD if e.op in "+-" else _PREC_MUL
        s = f"{format_expr(e.left, p)}{e.op}{format_expr(e.right, p + 1)}"
    elif isinstance(e, Neg):
        p = _PREC_UNARY
        s = f"-{format_expr(e.operand, p)}"
    elif isinstance(e, Cmp):
        p = _PREC_CMP
        s = f"{format_expr(e.left, p + 1)}{e.op}{format_expr(e.right, p + 1)}"
    elif isinstance(e, Cond):
        p = _PREC_COND
        s = (f"{format_expr(e.body, p + 1)} if {format_expr(e.test, p + 1)}"
             f" else {format_expr(e.orelse, p)}")
    elif isinstance(e, Call):
        s = f"{e.func}({','.join(format_expr(a) for a in e.args)})"
        p = _PREC_ATOM
    elif isinstance(e, TimeIndex):
        s, p = f"{e.name}[{format_expr(e.time)}]", _PREC_ATOM
    elif isinstance(e, ShapeList):
        s, p = f"[{','.join(format_expr(a) for a in e.items)}]", _PREC_ATOM
    else:  # pragma: no cover
        raise TypeError(f"unknown expression node {type(e).__name__}")
    return f"({s})" if p < prec else s


def _format_sde_terms(comp: ComponentDef) -> str:
    parts: list[str] = []

    def term(coef: Expr, sym: str) -> None:
        sign = "+"
        mag = coef
        if isinstance(mag, Neg):
            sign, mag = "-", mag.operand
        elif isinstance(mag, Num) and mag.value < 0:
            sign, mag = "-", Num(-mag.value)
        if isinstance(mag, Num) and mag.value == 1.0:
            body = sym
        else:
            body = f"{format_expr(mag, _PREC_MUL)}*{sym}"
        if not parts and sign == "+":
            parts.append(body)
        else:
            parts.append(f"{sign}{body}")

    if comp.drift is not None:
        term(comp.drift, "d_t")
    for coef, brownian in comp.vol_terms:
        term(coef, f"d_{brownian}")
    if not parts:
        parts.append("0.0*d_t")
    return "".join(parts)


def pretty_print(ast: ScriptAST) -> str:
    """Render an AST back to script text that reparses to an equal AST."""
    lines: list[str] = []
    if ast.function_defs:
        lines.append("# function definitions")
        for f in ast.function_defs:
            lines.append(f"{f.name}({','.join(f.params)}) = {format_expr(f.body)}")
        lines.append("")
    lines.append("# system")
    for c in ast.components:
        if c.kind is Kind.SDE:
            lines.append(f"d_{c.name} = {_format_sde_terms(c)}")
        else:
            lines.append(f"{c.name} = {format_expr(c.expr)}")
    if ast.correlations:
        lines.append("")
        lines.append("# correlations")
        for corr in ast.correlations:
            lines.append(f"d_{corr.brownian_a}*d_{corr.brownian_b}"
                         f" = {format_expr(corr.expr)}")
    if ast.inits:
        lines.append("")
        lines.append("# initial values")
        for name, expr in ast.inits:
            lines.append(f"init: {name} = {format_expr(expr)}")
    if ast.payoffs:
        lines.append("")
        lines.append("# payoffs")
        for p in ast.payoffs:
            disc = (f" discountby {format_expr(p.discount)}"
                    if p.discount is not None else " nodiscount")
            lines.append(f"{format_expr(p.at_time)}: {p.name}"
                         f" pays {format_expr(p.expr)}{disc}")
    return "\n".join(lines) + "\n"
