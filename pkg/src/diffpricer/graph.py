"""Batched computational graph with forward evaluation and reverse-mode gradients.

The graph is an append-only list of nodes; node inputs always reference
smaller node ids, so a single in-order pass evaluates the whole graph and a
single reverse pass accumulates adjoints. Values are 64-bit floats: scalars,
per-path vectors, or small matrices (weights in network cross-checks), with
numpy broadcasting between them.

Kink handling is deterministic: ``pospart`` has derivative 0 at exactly 0,
``max`` splits the adjoint 50/50 on exact ties, and ``sqrt`` takes derivative
0 at 0 (the one-sided limit of sqrt(pospart(x)) from below), which keeps
full-truncation schemes free of 0*inf artifacts.
"""

from __future__ import annotations

import numpy as np

from .activations import get_activation

__all__ = ["Graph", "Tape", "Ref", "GraphError", "EvalError"]

_F = np.float64


class GraphError(ValueError):
    """Malformed graph construction or gradient request."""


class EvalError(RuntimeError):
    """Evaluation failure (unbound input, shape mismatch, non-finite value)."""


class _Node:
    __slots__ = ("op", "args", "payload")

    def __init__(self, op, args=(), payload=None):
        self.op = op
        self.args = args
        self.payload = payload


class Ref:
    """Handle to a node; arithmetic on refs appends nodes to the graph."""

    __slots__ = ("graph", "id")

    def __init__(self, graph, node_id):
        self.graph = graph
        self.id = node_id

    def _wrap(self, other):
        if isinstance(other, Ref):
            if other.graph is not self.graph:
                raise GraphError("refs belong to different graphs")
            return other
        return self.graph.const(other)

    def __add__(self, other):
        return self.graph._emit("add", self, self._wrap(other))

    def __radd__(self, other):
        return self._wrap(other).__add__(self)

    def __sub__(self, other):
        return self.graph._emit("sub", self, self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other).__sub__(self)

    def __mul__(self, other):
        return self.graph._emit("mul", self, self._wrap(other))

    def __rmul__(self, other):
        return self._wrap(other).__mul__(self)

    def __truediv__(self, other):
        return self.graph._emit("div", self, self._wrap(other))

    def __rtruediv__(self, other):
        return self._wrap(other).__truediv__(self)

    def __neg__(self):
        return self.graph._emit("neg", self)

    def __lt__(self, other):
        return self.graph._emit("less", self, self._wrap(other))

    def __gt__(self, other):
        return self.graph._emit("greater", self, self._wrap(other))

    def __le__(self, other):
        return self.graph._emit("less_equal", self, self._wrap(other))

    def __ge__(self, other):
        return self.graph._emit("greater_equal", self, self._wrap(other))


def _unbroadcast(grad, shape):
    """Reduce a broadcasted adjoint back to the shape of its source value."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Graph:
    """Computational graph builder plus eval/grad driver."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.inputs: dict[str, int] = {}
        self.outputs: list[tuple[int, str]] = []
        self.pinned: set[int] = set()
        self._const_cache: dict[float, int] = {}

    def __len__(self):
        return len(self.nodes)

    # -- construction -----------------------------------------------------

    def _emit(self, op, *args, payload=None):
        ids = tuple(a.id for a in args)
        self.nodes.append(_Node(op, ids, payload))
        return Ref(self, len(self.nodes) - 1)

    def input(self, name: str) -> Ref:
        if name in self.inputs:
            return Ref(self, self.inputs[name])
        ref = self._emit("input", payload=name)
        self.inputs[name] = ref.id
        return ref

    def const(self, value) -> Ref:
        if isinstance(value, Ref):
            return value
        if np.ndim(value) == 0:
            key = float(value)
            hit = self._const_cache.get(key)
            if hit is not None:
                return Ref(self, hit)
            ref = self._emit("const", payload=np.asarray(key, dtype=_F))
            self._const_cache[key] = ref.id
            return ref
        return self._emit("const", payload=np.asarray(value, dtype=_F))

    def exp(self, x):
        return self._emit("exp", self.const(x))

    def log(self, x):
        return self._emit("log", self.const(x))

    def sqrt(self, x):
        return self._emit("sqrt", self.const(x))

    def maximum(self, a, b):
        return self._emit("max", self.const(a), self.const(b))

    def pospart(self, x):
        return self._emit("pospart", self.const(x))

    def where(self, cond, a, b):
        return self._emit("select", self.const(cond), self.const(a), self.const(b))

    def matmul(self, a, b):
        return self._emit("matmul", self.const(a), self.const(b))

    def activation(self, x, name: str):
        get_activation(name)  # fail fast on unknown names
        return self._emit("activation", self.const(x), payload=name)

    def reduce_mean(self, x):
        return self._emit("reduce_mean", self.const(x))

    def mark_output(self, ref: Ref, name: str | None = None) -> Ref:
        self.outputs.append((ref.id, name or f"out{len(self.outputs)}"))
        return ref

    def pin(self, ref: Ref) -> Ref:
        """Keep a node's value alive through memory-freeing evaluations."""
        self.pinned.add(ref.id)
        return ref

    # -- evaluation --------------------------------------------------------

    def _consumer_counts(self):
        counts = np.zeros(len(self.nodes), dtype=np.int64)
        for node in self.nodes:
            for a in node.args:
                counts[a] += 1
        for oid, _ in self.outputs:
            counts[oid] += 1
        for pid in self.pinned:
            counts[pid] += 1
        return counts

    def eval(self, bindings, *, resolver=None, keep_tape=True, check_finite=True):
        """Forward-evaluate all nodes.

        bindings maps input names to values; ``resolver(name, tape)`` is
        consulted for inputs missing from bindings (the simulator uses this
        to inject per-step Brownian increments). With keep_tape=False,
        intermediate values are freed as soon as their last consumer has run,
        which bounds memory for long unrolled simulations; the resulting tape
        can no longer back the gradient pass.
        """
        tape = Tape(self, keep_tape)
        values = tape.values
        counts = None if keep_tape else self._consumer_counts()
        live = None if keep_tape else counts.copy()
        for i, node in enumerate(self.nodes):
            op = node.op
            if op == "input":
                name = node.payload
                if name in bindings:
                    val = bindings[name]
                elif resolver is not None:
                    val = resolver(name, tape)
                    if val is None:
                        raise EvalError(f"unbound input {name!r}")
                else:
                    raise EvalError(f"unbound input {name!r}")
                out = np.asarray(val, dtype=_F)
            elif op == "const":
                out = node.payload
            else:
                a = node.args
                try:
                    with np.errstate(all="ignore"):
                        out = _FORWARD[op](values, a, node)
                except ValueError as exc:
                    raise EvalError(
                        f"shape mismatch at node {i} ({op}): {exc}"
                    ) from exc
            if check_finite and op not in ("const", "less", "greater",
                                           "less_equal", "greater_equal"):
                bad = ~np.isfinite(out)
                if bad.any():
                    where = np.argwhere(bad)
                    raise EvalError(
                        f"non-finite value at node {i} ({op}), "
                        f"first index {tuple(where[0])}, count {bad.sum()}"
                    )
            values[i] = out
            if live is not None:
                # release operands whose last consumer was this node
                for a in node.args:
                    live[a] -= 1
                    if live[a] == 0 and self.nodes[a].op != "const":
                        values[a] = None
        tape.output_values = {name: values[oid] for oid, name in self.outputs}
        if live is not None:
            keep = {oid for oid, _ in self.outputs} | set(self.inputs.values())
            for i in range(len(values)):
                if i not in keep and self.nodes[i].op != "const":
                    values[i] = None
        return tape

    def grad(self, tape: "Tape", output, wrt):
        """Adjoints of one output with respect to named inputs.

        The output adjoint is seeded with ones of the output's own shape, so
        batched outputs yield per-path derivatives in one sweep. Inputs not
        on any path to the output get zeros of their bound shape.
        """
        if not tape.full:
            raise GraphError("gradients need a tape kept from eval(keep_tape=True)")
        if isinstance(output, Ref):
            out_id = output.id
        else:
            matches = [oid for oid, name in self.outputs if name == output]
            if not matches:
                raise GraphError(f"{output!r} is not a marked output")
            out_id = matches[0]
        values = tape.values
        adj: list = [None] * len(self.nodes)
        adj[out_id] = np.ones_like(values[out_id])
        for i in range(out_id, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.op in ("input", "const"):
                continue
            contribs = _ADJOINT[node.op](values, node.args, node, g)
            for a, c in zip(node.args, contribs):
                if c is None:
                    continue
                c = _unbroadcast(np.asarray(c, dtype=_F), values[a].shape)
                adj[a] = c if adj[a] is None else adj[a] + c
        result = {}
        for name in wrt:
            nid = self.inputs.get(name)
            if nid is None:
                raise GraphError(f"unknown input {name!r}")
            g = adj[nid]
            result[name] = np.zeros_like(values[nid]) if g is None else g
        return result

    # -- debugging ---------------------------------------------------------

    def to_text(self):
        """One node per line: id, op, input ids, payload."""
        lines = []
        for i, node in enumerate(self.nodes):
            extra = ""
            if node.op == "input":
                extra = f" name={node.payload}"
            elif node.op == "const":
                extra = f" value={np.asarray(node.payload).ravel()[:4]}"
            elif node.op == "activation":
                extra = f" fn={node.payload}"
            args = ",".join(str(a) for a in node.args)
            lines.append(f"{i}\t{node.op}\t[{args}]{extra}")
        for oid, name in self.outputs:
            lines.append(f"output\t{name}\t{oid}")
        return "\n".join(lines)


class Tape:
    """Recorded forward values for one evaluation."""

    def __init__(self, graph, full):
        self.graph = graph
        self.full = full
        self.values: list = [None] * len(graph.nodes)
        self.output_values: dict[str, np.ndarray] = {}

    def value(self, ref: Ref):
        v = self.values[ref.id]
        if v is None:
            raise EvalError("value was freed (eval ran with keep_tape=False)")
        return v


def _fwd_max(values, a, node):
    return np.maximum(values[a[0]], values[a[1]])


_FORWARD = {
    "add": lambda v, a, n: v[a[0]] + v[a[1]],
    "sub": lambda v, a, n: v[a[0]] - v[a[1]],
    "mul": lambda v, a, n: v[a[0]] * v[a[1]],
    "div": lambda v, a, n: v[a[0]] / v[a[1]],
    "neg": lambda v, a, n: -v[a[0]],
    "exp": lambda v, a, n: np.exp(v[a[0]]),
    "log": lambda v, a, n: np.log(v[a[0]]),
    "sqrt": lambda v, a, n: np.sqrt(v[a[0]]),
    "max": _fwd_max,
    "pospart": lambda v, a, n: np.maximum(v[a[0]], 0.0),
    "select": lambda v, a, n: np.where(v[a[0]] != 0.0, v[a[1]], v[a[2]]),
    "less": lambda v, a, n: (v[a[0]] < v[a[1]]).astype(_F),
    "greater": lambda v, a, n: (v[a[0]] > v[a[1]]).astype(_F),
    "less_equal": lambda v, a, n: (v[a[0]] <= v[a[1]]).astype(_F),
    "greater_equal": lambda v, a, n: (v[a[0]] >= v[a[1]]).astype(_F),
    "matmul": lambda v, a, n: v[a[0]] @ v[a[1]],
    "activation": lambda v, a, n: get_activation(n.payload).value(v[a[0]]),
    "reduce_mean": lambda v, a, n: np.asarray(np.mean(v[a[0]]), dtype=_F),
}


def _adj_max(v, a, node, g):
    x, y = v[a[0]], v[a[1]]
    # gradient follows the strictly larger branch; exact ties split 50/50
    wx = (x > y).astype(_F) + 0.5 * (x == y)
    return g * wx, g * (1.0 - wx)


def _adj_sqrt(v, a, node, g):
    x = v[a[0]]
    root = np.sqrt(x)
    return (np.where(x > 0.0, g / np.where(x > 0.0, 2.0 * root, 1.0), 0.0),)


def _adj_div(v, a, node, g):
    x, y = v[a[0]], v[a[1]]
    return g / y, -g * x / (y * y)


def _adj_matmul(v, a, node, g):
    x, y = v[a[0]], v[a[1]]
    return g @ y.T, x.T @ g


def _adj_mean(v, a, node, g):
    x = v[a[0]]
    return (np.broadcast_to(g / x.size, x.shape),)


_ADJOINT = {
    "add": lambda v, a, n, g: (g, g),
    "sub": lambda v, a, n, g: (g, -g),
    "mul": lambda v, a, n, g: (g * v[a[1]], g * v[a[0]]),
    "div": _adj_div,
    "neg": lambda v, a, n, g: (-g,),
    "exp": lambda v, a, n, g: (g * np.exp(v[a[0]]),),
    "log": lambda v, a, n, g: (g / v[a[0]],),
    "sqrt": _adj_sqrt,
    "max": _adj_max,
    "pospart": lambda v, a, n, g: (g * (v[a[0]] > 0.0),),
    "select": lambda v, a, n, g: (None,
                                  g * (v[a[0]] != 0.0),
                                  g * (v[a[0]] == 0.0)),
    "less": lambda v, a, n, g: (None, None),
    "greater": lambda v, a, n, g: (None, None),
    "less_equal": lambda v, a, n, g: (None, None),
    "greater_equal": lambda v, a, n, g: (None, None),
    "matmul": _adj_matmul,
    "activation": lambda v, a, n, g: (g * get_activation(n.payload).deriv(v[a[0]]),),
    "reduce_mean": _adj_mean,
}
