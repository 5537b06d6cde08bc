"""Name resolution, dependency ordering, and structural checks for scripts.

A validated script carries the per-time-step evaluation order: all SDE
components advance first (from previous-step values), then function
components in declaration order, then update components in declaration
order. Function components may therefore reference only components declared
earlier, and never update components (whose same-step value would not yet
exist in that phase).
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

from .nodes import (BUILTIN_ARITY, Bin, Call, Cmp, ComponentDef, Cond,
                    Diagnostic, Expr, Kind, Name, Neg, Num, RESERVED,
                    ScriptAST, ScriptError, ShapeList, TimeIndex,
                    UPDATE_SUFFIX)

__all__ = ["validate", "ValidatedScript"]


@dataclass
class ValidatedScript:
    ast: ScriptAST
    external_params: frozenset[str]
    order: tuple[str, ...]           # per-step order over all components
    brownians: tuple[str, ...]       # stable order: first use in vol terms
    payoff_names: tuple[str, ...]
    referenced_externals: frozenset[str] = field(default_factory=frozenset)

    def component(self, name: str) -> ComponentDef:
        return self.ast.component(name)


class _Checker:
    def __init__(self, ast: ScriptAST, external_params):
        self.ast = ast
        self.externals = frozenset(external_params)
        self.diags: list[Diagnostic] = []
        self.comp_index = {c.name: i for i, c in enumerate(ast.components)}
        self.comps = {c.name: c for c in ast.components}
        self.funcs = {f.name: f for f in ast.function_defs}
        self.used_externals: set[str] = set()

    def fail(self, pos, message):
        line, col = pos if pos else (0, 0)
        self.diags.append(Diagnostic(line, col, message))

    def suggest(self, name):
        candidates = (set(self.comp_index) | self.externals | set(self.funcs)
                      | set(RESERVED) | set(BUILTIN_ARITY))
        close = difflib.get_close_matches(name, sorted(candidates), n=3)
        return f" (did you mean {', '.join(close)}?)" if close else ""

    # -- expression walk ----------------------------------------------------

    def check_expr(self, e: Expr, *, comp: ComponentDef | None = None,
                   allow_components: bool = True,
                   allow_new: bool = False,
                   allow_index: bool = False,
                   allow_time: bool = True,
                   earlier_only: bool = False,
                   formals: frozenset = frozenset(),
                   context: str = "expression"):
        if isinstance(e, Num):
            return
        if isinstance(e, Name):
            self._check_name(e, comp=comp, allow_components=allow_components,
                             allow_new=allow_new, allow_time=allow_time,
                             earlier_only=earlier_only, formals=formals,
                             context=context)
            return
        if isinstance(e, TimeIndex):
            if not allow_index:
                self.fail(e.pos, "time-indexing is only allowed inside payoffs")
            elif e.name not in self.comps:
                self.fail(e.pos,
                          f"time-indexing applies to components,"
                          f" {e.name!r} is not one{self.suggest(e.name)}")
            self.check_expr(e.time, comp=comp, allow_components=False,
                            allow_time=True, formals=formals,
                            context="a time index")
            return
        if isinstance(e, ShapeList):
            self.fail(e.pos, "bracketed shapes belong in ones(...)/zeros(...)")
            return
        if isinstance(e, Call):
            self._check_call(e, comp=comp, allow_components=allow_components,
                             allow_new=allow_new, allow_index=allow_index,
                             allow_time=allow_time, earlier_only=earlier_only,
                             formals=formals, context=context)
            return
        kids = ((e.left, e.right) if isinstance(e, (Bin, Cmp))
                else (e.operand,) if isinstance(e, Neg)
                else (e.body, e.test, e.orelse) if isinstance(e, Cond)
                else ())
        for kid in kids:
            self.check_expr(kid, comp=comp, allow_components=allow_components,
                            allow_new=allow_new, allow_index=allow_index,
                            allow_time=allow_time, earlier_only=earlier_only,
                            formals=formals, context=context)

    def _check_name(self, e: Name, *, comp, allow_components, allow_new,
                    allow_time, earlier_only, formals, context):
        name = e.id
        if name in formals:
            return
        if name == "t":
            if not allow_time:
                self.fail(e.pos, f"'t' is not available in {context}")
            return
        if name in ("d_t", "batchsize"):
            self.fail(e.pos, f"{name!r} is not usable in {context}")
            return
        if name.endswith(UPDATE_SUFFIX):
            base = name[:-len(UPDATE_SUFFIX)]
            if base in self.comps:
                if not allow_new:
                    self.fail(e.pos,
                              f"{name!r}: current-step references are only"
                              " allowed inside update components")
                    return
                target = self.comps[base]
                if comp is not None and base == comp.name:
                    self.fail(e.pos,
                              f"{name!r} refers to the component being updated;"
                              " use the plain name for its previous value")
                elif (target.kind is Kind.UPDATE
                      and self.comp_index[base] >= self.comp_index[comp.name]):
                    self.fail(e.pos,
                              f"{name!r} references an update component that"
                              " has not been computed yet this step")
                return
            # not a component's _new reference: fall through to plain lookup
        if name in self.comps:
            if not allow_components:
                self.fail(e.pos, f"component {name!r} cannot appear in {context}")
                return
            if comp is not None and comp.kind is Kind.FUNCTION:
                target = self.comps[name]
                if target.kind is Kind.UPDATE:
                    self.fail(e.pos,
                              "function components cannot reference update"
                              f" components ({name!r}); updates run later"
                              " in the step")
                elif earlier_only and self.comp_index[name] >= self.comp_index[comp.name]:
                    self.fail(e.pos,
                              f"{name!r} is declared after {comp.name!r};"
                              " function components may only reference"
                              " components declared earlier")
            return
        if name in self.externals:
            self.used_externals.add(name)
            return
        if name in self.funcs:
            self.fail(e.pos, f"{name!r} is a function and must be called")
            return
        self.fail(e.pos, f"unresolved symbol {name!r}{self.suggest(name)}")

    def _check_call(self, e: Call, **ctx):
        name = e.func
        if name in ("ones", "zeros"):
            if (len(e.args) != 1 or not isinstance(e.args[0], ShapeList)
                    or len(e.args[0].items) != 1
                    or e.args[0].items != (Name("batchsize"),)):
                self.fail(e.pos, f"{name} takes exactly ([batchsize])")
            return
        if name in BUILTIN_ARITY:
            if len(e.args) != BUILTIN_ARITY[name]:
                self.fail(e.pos,
                          f"{name} takes {BUILTIN_ARITY[name]} argument(s),"
                          f" got {len(e.args)}")
        elif name in self.funcs:
            if len(e.args) != len(self.funcs[name].params):
                self.fail(e.pos,
                          f"{name} takes {len(self.funcs[name].params)}"
                          f" argument(s), got {len(e.args)}")
        else:
            self.fail(e.pos, f"unknown function {name!r}{self.suggest(name)}")
        for a in e.args:
            self.check_expr(a, **ctx)

    # -- statement-level checks ----------------------------------------------

    def run(self) -> ValidatedScript:
        ast = self.ast
        if not ast.components:
            self.fail(None, "no components defined")

        for name in self.comps:
            if name in self.externals:
                self.fail(self.comps[name].pos,
                          f"component {name!r} collides with an externally"
                          " bound parameter")

        # macros may use formals, externals, and earlier macros only
        seen_funcs: set[str] = set()
        for f in ast.function_defs:
            saved = self.funcs
            self.funcs = {k: v for k, v in saved.items() if k in seen_funcs}
            saved_comps = self.comps
            self.comps = {}
            self.check_expr(f.body, formals=frozenset(f.params),
                            allow_components=False, allow_time=False,
                            context=f"the definition of {f.name}")
            self.comps = saved_comps
            self.funcs = saved
            seen_funcs.add(f.name)

        vol_brownians: list[str] = []
        for compdef in ast.components:
            if compdef.kind is Kind.SDE:
                if compdef.drift is not None:
                    self.check_expr(compdef.drift, comp=compdef,
                                    context=f"the drift of {compdef.name}")
                for coef, brownian in compdef.vol_terms:
                    self.check_expr(coef, comp=compdef,
                                    context=f"a volatility of {compdef.name}")
                    if brownian not in vol_brownians:
                        vol_brownians.append(brownian)
            elif compdef.kind is Kind.FUNCTION:
                self.check_expr(compdef.expr, comp=compdef, earlier_only=True,
                                context=f"the function component {compdef.name}")
            else:
                self.check_expr(compdef.expr, comp=compdef, allow_new=True,
                                context=f"the update component {compdef.name}")

        seen_pairs = set()
        for corr in ast.correlations:
            if corr.brownian_a == corr.brownian_b:
                self.fail(corr.pos, "a Brownian cannot be correlated with itself")
            pair = frozenset((corr.brownian_a, corr.brownian_b))
            if pair in seen_pairs:
                self.fail(corr.pos,
                          f"duplicate correlation for d_{corr.brownian_a}"
                          f"*d_{corr.brownian_b}")
            seen_pairs.add(pair)
            for b in (corr.brownian_a, corr.brownian_b):
                if b not in vol_brownians:
                    self.fail(corr.pos,
                              f"d_{b} appears in a correlation but in no"
                              " volatility term")
            self.check_expr(corr.expr, context="a correlation")

        init_map = {}
        for name, expr in ast.inits:
            init_map[name] = expr
            if name not in self.comps:
                self.fail(None, f"initial value for unknown component {name!r}"
                          f"{self.suggest(name)}")
                continue
            self.check_expr(expr, allow_components=False, allow_time=False,
                            context=f"the initial value of {name}")
        for compdef in ast.components:
            has_init = compdef.name in init_map
            if compdef.kind is Kind.FUNCTION and has_init:
                self.fail(compdef.pos,
                          f"function component {compdef.name!r} cannot have"
                          " an initial value")
            if compdef.kind in (Kind.SDE, Kind.UPDATE) and not has_init:
                self.fail(compdef.pos,
                          f"{compdef.kind.value} component {compdef.name!r}"
                          " needs an init: entry")

        payoff_names = []
        for payoff in ast.payoffs:
            if payoff.name in payoff_names:
                self.fail(payoff.pos, f"duplicate payoff {payoff.name!r}")
            if payoff.name in self.comps:
                self.fail(payoff.pos,
                          f"payoff {payoff.name!r} collides with a component")
            payoff_names.append(payoff.name)
            self.check_expr(payoff.at_time, allow_components=False,
                            allow_time=False,
                            context=f"the observation time of {payoff.name}")
            self.check_expr(payoff.expr, allow_index=True,
                            context=f"the payoff {payoff.name}")
            if payoff.discount is not None:
                self.check_expr(payoff.discount, allow_index=True,
                                context=f"the discount of {payoff.name}")

        order = tuple(
            [c.name for c in ast.components if c.kind is Kind.SDE]
            + [c.name for c in ast.components if c.kind is Kind.FUNCTION]
            + [c.name for c in ast.components if c.kind is Kind.UPDATE])

        if self.diags:
            raise ScriptError(self.diags)
        return ValidatedScript(
            ast=ast,
            external_params=self.externals,
            order=order,
            brownians=tuple(vol_brownians),
            payoff_names=tuple(payoff_names),
            referenced_externals=frozenset(self.used_externals),
        )


def validate(ast: ScriptAST, external_params) -> ValidatedScript:
    """Check every structural invariant and return the annotated script.

    Raises ScriptError with the full diagnostic list when anything fails;
    every diagnostic carries the line/column of the offending token.
    """
    return _Checker(ast, external_params).run()
