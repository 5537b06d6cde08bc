"""Recursive-descent parser producing a ScriptAST.

Component kinds are inferred from statement shape:

* ``d_name = ...``          stochastic (or ordinary) differential equation;
* ``name = f(...)``         plain function of already-computed components;
* ``name = g(name, x_new)`` update rule (self-reference or any ``_new`` ref);
* ``name(a, b) = expr``     named expression macro;
* ``d_A*d_B = expr``        correlation between two Brownian increments;
* ``init: name = expr``     initial value;
* ``T: name pays ... ``     payoff observed at time T.

An SDE right-hand side must reduce, after distributing products over sums,
to a sum of terms each carrying exactly one differential (d_t or one d_W);
the remaining factors form drift and volatility coefficients.
"""

from __future__ import annotations

from .lexer import EOF, IDENT, KEYWORD, NEWLINE, NUMBER, OP, Token, tokenize
from .nodes import (Bin, Call, Cmp, ComponentDef, Cond, CorrelationDef,
                    Diagnostic, Expr, FunctionDef, Kind, Name, Neg, Num,
                    PayoffDef, ScriptAST, ScriptError, ShapeList, TimeIndex,
                    UPDATE_SUFFIX, is_differential)

__all__ = ["parse_script"]


class _Cursor:
    def __init__(self, tokens: list[Token], filename: str):
        self.toks = tokens
        self.i = 0
        self.filename = filename

    def peek(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        tok = self.toks[self.i]
        if self.i < len(self.toks) - 1:
            self.i += 1
        return tok

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ScriptError(Diagnostic(tok.line, tok.col, message), self.filename)

    def expect(self, kind: str, value: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            got = tok.value or tok.kind
            self.error(f"expected {want!r}, found {got!r}")
        return self.advance()


# -- expression grammar ------------------------------------------------------

def _parse_expr(c: _Cursor) -> Expr:
    return _parse_cond(c)


def _parse_cond(c: _Cursor) -> Expr:
    body = _parse_cmp(c)
    tok = c.peek()
    if tok.kind == KEYWORD and tok.value == "if":
        c.advance()
        test = _parse_cmp(c)
        c.expect(KEYWORD, "else")
        orelse = _parse_cond(c)
        return Cond(body, test, orelse, pos=(tok.line, tok.col))
    return body


def _parse_cmp(c: _Cursor) -> Expr:
    left = _parse_add(c)
    tok = c.peek()
    if tok.kind == OP and tok.value in ("<", ">", "<=", ">="):
        c.advance()
        right = _parse_add(c)
        return Cmp(tok.value, left, right, pos=(tok.line, tok.col))
    return left


def _parse_add(c: _Cursor) -> Expr:
    left = _parse_mul(c)
    while True:
        tok = c.peek()
        if tok.kind == OP and tok.value in ("+", "-"):
            c.advance()
            right = _parse_mul(c)
            left = Bin(tok.value, left, right, pos=(tok.line, tok.col))
        else:
            return left


def _parse_mul(c: _Cursor) -> Expr:
    left = _parse_unary(c)
    while True:
        tok = c.peek()
        if tok.kind == OP and tok.value in ("*", "/"):
            c.advance()
            right = _parse_unary(c)
            left = Bin(tok.value, left, right, pos=(tok.line, tok.col))
        else:
            return left


def _parse_unary(c: _Cursor) -> Expr:
    tok = c.peek()
    if tok.kind == OP and tok.value == "-":
        c.advance()
        return Neg(_parse_unary(c), pos=(tok.line, tok.col))
    if tok.kind == OP and tok.value == "+":
        c.advance()
        return _parse_unary(c)
    return _parse_postfix(c)


def _parse_postfix(c: _Cursor) -> Expr:
    expr = _parse_atom(c)
    while True:
        tok = c.peek()
        if tok.kind == OP and tok.value == "[":
            if not isinstance(expr, Name):
                c.error("time-indexing applies to component names only", tok)
            c.advance()
            idx = _parse_expr(c)
            c.expect(OP, "]")
            expr = TimeIndex(expr.id, idx, pos=(tok.line, tok.col))
        else:
            return expr


def _parse_atom(c: _Cursor) -> Expr:
    tok = c.peek()
    if tok.kind == NUMBER:
        c.advance()
        return Num(float(tok.value), pos=(tok.line, tok.col))
    if tok.kind == IDENT:
        c.advance()
        nxt = c.peek()
        if nxt.kind == OP and nxt.value == "(":
            c.advance()
            args = []
            if not (c.peek().kind == OP and c.peek().value == ")"):
                args.append(_parse_expr(c))
                while c.peek().kind == OP and c.peek().value == ",":
                    c.advance()
                    args.append(_parse_expr(c))
            c.expect(OP, ")")
            return Call(tok.value, tuple(args), pos=(tok.line, tok.col))
        return Name(tok.value, pos=(tok.line, tok.col))
    if tok.kind == OP and tok.value == "(":
        c.advance()
        inner = _parse_expr(c)
        c.expect(OP, ")")
        return inner
    if tok.kind == OP and tok.value == "[":
        c.advance()
        items = [_parse_expr(c)]
        while c.peek().kind == OP and c.peek().value == ",":
            c.advance()
            items.append(_parse_expr(c))
        c.expect(OP, "]")
        return ShapeList(tuple(items), pos=(tok.line, tok.col))
    c.error(f"expected expression, found {tok.value or tok.kind!r}")


# -- SDE right-hand-side decomposition ----------------------------------------

_ONE = Num(1.0)


def _contains_diff(e: Expr) -> bool:
    if isinstance(e, Name):
        return is_differential(e.id)
    if isinstance(e, Bin):
        return _contains_diff(e.left) or _contains_diff(e.right)
    if isinstance(e, Neg):
        return _contains_diff(e.operand)
    if isinstance(e, (Cond, Cmp)):
        return any(_contains_diff(x) for x in
                   ((e.body, e.test, e.orelse) if isinstance(e, Cond)
                    else (e.left, e.right)))
    if isinstance(e, Call):
        return any(_contains_diff(a) for a in e.args)
    if isinstance(e, (TimeIndex, ShapeList)):
        return False
    return False


def _combine(c1: Expr, c2: Expr) -> Expr:
    if isinstance(c1, Num) and c1.value == 1.0:
        return c2
    if isinstance(c2, Num) and c2.value == 1.0:
        return c1
    return Bin("*", c1, c2)


def _negate(term):
    coef, sym = term
    if isinstance(coef, Num):
        return Num(-coef.value), sym
    if isinstance(coef, Neg):
        return coef.operand, sym
    return Neg(coef), sym


def _pos_of(e: Expr):
    return getattr(e, "pos", (0, 0))


def _expand_sde(e: Expr, c: _Cursor):
    """Flatten an SDE rhs into (coefficient, symbol) terms.

    symbol is "t" for the drift carrier d_t, the Brownian name for a d_W
    factor, and None for a differential-free term (illegal at top level).
    """
    if isinstance(e, Name) and is_differential(e.id):
        sym = "t" if e.id == "d_t" else e.id[2:]
        return [(_ONE, sym)]
    if not _contains_diff(e):
        return [(e, None)]
    if isinstance(e, Bin) and e.op == "+":
        return _expand_sde(e.left, c) + _expand_sde(e.right, c)
    if isinstance(e, Bin) and e.op == "-":
        return _expand_sde(e.left, c) + [_negate(t) for t in _expand_sde(e.right, c)]
    if isinstance(e, Neg):
        return [_negate(t) for t in _expand_sde(e.operand, c)]
    if isinstance(e, Bin) and e.op == "*":
        out = []
        for ca, sa in _expand_sde(e.left, c):
            for cb, sb in _expand_sde(e.right, c):
                if sa is not None and sb is not None:
                    line, col = _pos_of(e)
                    raise ScriptError(Diagnostic(
                        line, col, "product of two differentials"), c.filename)
                out.append((_combine(ca, cb), sa or sb))
        return out
    if isinstance(e, Bin) and e.op == "/":
        if _contains_diff(e.right):
            line, col = _pos_of(e.right)
            raise ScriptError(Diagnostic(
                line, col, "differential in a denominator"), c.filename)
        return [(Bin("/", coef, e.right), sym) for coef, sym in _expand_sde(e.left, c)]
    line, col = _pos_of(e)
    raise ScriptError(Diagnostic(
        line, col,
        "differentials may only appear as linear factors of an SDE"), c.filename)


def _check_no_diff(e: Expr, c: _Cursor, context: str):
    if isinstance(e, Name) and is_differential(e.id):
        line, col = _pos_of(e)
        raise ScriptError(Diagnostic(
            line, col,
            f"{e.id} may not appear in {context}"
            " (differentials belong to SDE right-hand sides)"), c.filename)
    for child in _children(e):
        _check_no_diff(child, c, context)


def _children(e: Expr):
    if isinstance(e, Bin):
        return (e.left, e.right)
    if isinstance(e, Cmp):
        return (e.left, e.right)
    if isinstance(e, Neg):
        return (e.operand,)
    if isinstance(e, Cond):
        return (e.body, e.test, e.orelse)
    if isinstance(e, Call):
        return e.args
    if isinstance(e, TimeIndex):
        return (e.time,)
    if isinstance(e, ShapeList):
        return e.items
    return ()


# -- statement parsing ---------------------------------------------------------

def _split_statements(tokens: list[Token]) -> list[list[Token]]:
    stmts, current = [], []
    for tok in tokens:
        if tok.kind in (NEWLINE, EOF):
            if current:
                stmts.append(current)
                current = []
        else:
            current.append(tok)
    return stmts


def _find_top_level_assign(stmt: list[Token]) -> int:
    depth = 0
    for i, tok in enumerate(stmt):
        if tok.kind == OP and tok.value in "([":
            depth += 1
        elif tok.kind == OP and tok.value in ")]":
            depth -= 1
        elif depth == 0 and tok.kind == OP and tok.value == "=":
            return i
    return -1


def _rhs_cursor(stmt: list[Token], start: int, filename: str) -> _Cursor:
    tail = stmt[start:] + [Token(EOF, "", stmt[-1].line, stmt[-1].col + 1)]
    return _Cursor(tail, filename)


def _finish(c: _Cursor, what: str):
    tok = c.peek()
    if tok.kind != EOF:
        c.error(f"unexpected {tok.value!r} after {what}")


def parse_script(source, filename: str = "<script>") -> ScriptAST:
    """Parse script text (or a token list from tokenize) into a ScriptAST."""
    tokens = tokenize(source, filename) if isinstance(source, str) else list(source)
    function_defs: list[FunctionDef] = []
    components: list[ComponentDef] = []
    correlations: list[CorrelationDef] = []
    inits: list[tuple[str, Expr]] = []
    payoffs: list[PayoffDef] = []
    seen: dict[str, Token] = {}

    for stmt in _split_statements(tokens):
        first = stmt[0]
        cursor = _Cursor(stmt + [Token(EOF, "", stmt[-1].line, stmt[-1].col + 1)],
                         filename)

        if first.kind == KEYWORD and first.value == "init":
            cursor.advance()
            cursor.expect(OP, ":")
            name_tok = cursor.expect(IDENT)
            cursor.expect(OP, "=")
            expr = _parse_expr(cursor)
            _finish(cursor, "initial value")
            _check_no_diff(expr, cursor, "an initial value")
            if any(name == name_tok.value for name, _ in inits):
                cursor.error(f"duplicate initial value for {name_tok.value!r}",
                             name_tok)
            inits.append((name_tok.value, expr))
            continue

        if any(t.kind == KEYWORD and t.value == "pays" for t in stmt):
            at_time = _parse_expr(cursor)
            cursor.expect(OP, ":")
            name_tok = cursor.expect(IDENT)
            cursor.expect(KEYWORD, "pays")
            expr = _parse_expr(cursor)
            tok = cursor.peek()
            discount = None
            if tok.kind == KEYWORD and tok.value == "discountby":
                cursor.advance()
                discount = _parse_expr(cursor)
            elif tok.kind == KEYWORD and tok.value == "nodiscount":
                cursor.advance()
            else:
                cursor.error("payoff needs 'discountby <expr>' or 'nodiscount'")
            _finish(cursor, "payoff")
            for e, ctx in ((at_time, "an observation time"),
                           (expr, "a payoff"),
                           (discount, "a discount expression")):
                if e is not None:
                    _check_no_diff(e, cursor, ctx)
            payoffs.append(PayoffDef(at_time, name_tok.value, expr, discount,
                                     pos=(name_tok.line, name_tok.col)))
            continue

        eq = _find_top_level_assign(stmt)
        if eq < 0:
            cursor.error("malformed statement (no '=' found)", first)
        lhs = stmt[:eq]

        # correlation: d_A*d_B = expr
        if (len(lhs) == 3 and lhs[0].kind == IDENT and lhs[2].kind == IDENT
                and lhs[1].kind == OP and lhs[1].value == "*"
                and is_differential(lhs[0].value) and is_differential(lhs[2].value)):
            for tok in (lhs[0], lhs[2]):
                if tok.value == "d_t":
                    cursor.error("d_t cannot be correlated", tok)
            rhs = _rhs_cursor(stmt, eq + 1, filename)
            expr = _parse_expr(rhs)
            _finish(rhs, "correlation")
            _check_no_diff(expr, rhs, "a correlation")
            correlations.append(CorrelationDef(
                lhs[0].value[2:], lhs[2].value[2:], expr,
                pos=(lhs[0].line, lhs[0].col)))
            continue

        # function macro: name(p1, p2) = expr
        if (len(lhs) >= 3 and lhs[0].kind == IDENT
                and lhs[1].kind == OP and lhs[1].value == "("):
            params = []
            j = 2
            while j < len(lhs) and lhs[j].kind == IDENT:
                params.append(lhs[j].value)
                j += 1
                if j < len(lhs) and lhs[j].kind == OP and lhs[j].value == ",":
                    j += 1
            if j != len(lhs) - 1 or lhs[j].value != ")" or not params:
                cursor.error("malformed function definition", lhs[0])
            rhs = _rhs_cursor(stmt, eq + 1, filename)
            body = _parse_expr(rhs)
            _finish(rhs, "function definition")
            _check_no_diff(body, rhs, "a function definition")
            name = lhs[0].value
            if name in seen:
                cursor.error(f"duplicate definition of {name!r}", lhs[0])
            seen[name] = lhs[0]
            function_defs.append(FunctionDef(name, tuple(params), body,
                                             pos=(lhs[0].line, lhs[0].col)))
            continue

        if len(lhs) != 1 or lhs[0].kind != IDENT:
            cursor.error("malformed statement", first)
        lhs_tok = lhs[0]
        rhs = _rhs_cursor(stmt, eq + 1, filename)

        if is_differential(lhs_tok.value):
            if lhs_tok.value == "d_t":
                cursor.error("cannot define d_t", lhs_tok)
            name = lhs_tok.value[2:]
            expr = _parse_expr(rhs)
            _finish(rhs, "SDE definition")
            terms = _expand_sde(expr, rhs)
            drift_parts = [coef for coef, sym in terms if sym == "t"]
            vol_terms = tuple((coef, sym) for coef, sym in terms if sym not in ("t", None))
            for coef, sym in terms:
                if sym is None:
                    line, col = _pos_of(coef)
                    raise ScriptError(Diagnostic(
                        line, col, "SDE term carries no d_t or d_W factor"),
                        filename)
                _check_no_diff(coef, rhs, "an SDE coefficient")
            drift = None
            if drift_parts:
                drift = drift_parts[0]
                for part in drift_parts[1:]:
                    drift = Bin("+", drift, part)
            if name in seen:
                cursor.error(f"duplicate definition of {name!r}", lhs_tok)
            seen[name] = lhs_tok
            components.append(ComponentDef(
                name, Kind.SDE, drift=drift, vol_terms=vol_terms,
                pos=(lhs_tok.line, lhs_tok.col)))
            continue

        # plain assignment: function component or update component
        name = lhs_tok.value
        expr = _parse_expr(rhs)
        _finish(rhs, "component definition")
        _check_no_diff(expr, rhs, "a function or update component")
        refs = _collect_names(expr)
        is_update = name in refs or any(r.endswith(UPDATE_SUFFIX) for r in refs)
        if name in seen:
            cursor.error(f"duplicate definition of {name!r}", lhs_tok)
        seen[name] = lhs_tok
        components.append(ComponentDef(
            name, Kind.UPDATE if is_update else Kind.FUNCTION, expr=expr,
            pos=(lhs_tok.line, lhs_tok.col)))

    return ScriptAST(tuple(function_defs), tuple(components),
                     tuple(correlations), tuple(inits), tuple(payoffs))


def _collect_names(e: Expr, out: set | None = None) -> set:
    if out is None:
        out = set()
    if isinstance(e, Name):
        out.add(e.id)
    elif isinstance(e, TimeIndex):
        out.add(e.name)
        _collect_names(e.time, out)
    for child in _children(e):
        _collect_names(child, out)
    return out
