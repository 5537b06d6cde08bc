"""Scripting language for stochastic systems and payoffs.

The language describes a system of SDE/ODE, function, and update components
plus correlated Brownian increments, initial values, and payoffs, in text
close to mathematical notation. This package tokenizes, parses, and
validates such scripts into a typed AST consumed by the simulator compiler.

All entry points are pure functions over immutable inputs and are safe to
call concurrently.
"""

from .lexer import Token, tokenize
from .nodes import (Bin, Call, Cmp, ComponentDef, Cond, CorrelationDef,
                    Diagnostic, Expr, FunctionDef, Kind, Name, Neg, Num,
                    PayoffDef, ScriptAST, ScriptError, ShapeList, TimeIndex,
                    format_expr, pretty_print)
from .parser import parse_script
from .validator import ValidatedScript, validate

__all__ = [
    "Token", "tokenize", "parse_script", "validate", "pretty_print",
    "format_expr", "check_script",
    "ScriptAST", "ValidatedScript", "ComponentDef", "FunctionDef",
    "CorrelationDef", "PayoffDef", "Kind", "Expr", "Num", "Name", "Bin",
    "Neg", "Cmp", "Cond", "Call", "TimeIndex", "ShapeList",
    "Diagnostic", "ScriptError",
]


def check_script(source: str, external_params, filename: str = "<script>"):
    """Parse + validate; returns the diagnostic list instead of raising."""
    try:
        validate(parse_script(source, filename), external_params)
    except ScriptError as err:
        return err.diagnostics
    return []
