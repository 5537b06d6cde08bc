"""Tests for the computational-graph core: forward eval and reverse gradients."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diffpricer.graph import EvalError, Graph, GraphError


def _grad_fd(build, bindings, wrt, h=1e-5):
    """Central finite differences of every marked output w.r.t. one input."""
    def run(b):
        g = Graph()
        build(g)
        tape = g.eval(b)
        return tape.output_values["out"]

    base = bindings[wrt]
    step = h * max(1.0, float(np.max(np.abs(base))))
    up = dict(bindings)
    up[wrt] = np.asarray(base) + step
    dn = dict(bindings)
    dn[wrt] = np.asarray(base) - step
    return (run(up) - run(dn)) / (2.0 * step)


class TestForward:
    def test_mul_batch(self):
        g = Graph()
        x, y = g.input("x"), g.input("y")
        g.mark_output(x * y, "p")
        tape = g.eval({"x": [2.0, 3.0], "y": [4.0, 5.0]})
        assert_allclose(tape.output_values["p"], [8.0, 15.0])

    def test_hinge(self):
        g = Graph()
        x, k = g.input("x"), g.input("k")
        g.mark_output(g.pospart(x - k), "h")
        tape = g.eval({"x": [1.0, 0.5], "k": 0.8})
        assert_allclose(tape.output_values["h"], [0.2, 0.0])

    def test_exp_zero(self):
        g = Graph()
        g.mark_output(g.exp(g.const(0.0)), "e")
        assert g.eval({}).output_values["e"] == 1.0

    def test_unbound_input(self):
        g = Graph()
        g.mark_output(g.input("x") * 2.0, "y")
        with pytest.raises(EvalError, match="unbound input 'x'"):
            g.eval({})

    def test_shape_mismatch(self):
        g = Graph()
        g.mark_output(g.input("x") + g.input("y"), "s")
        with pytest.raises(EvalError, match="shape mismatch"):
            g.eval({"x": np.zeros(3), "y": np.zeros(4)})

    def test_nonfinite_reported_with_node(self):
        g = Graph()
        g.mark_output(g.log(g.input("x")), "y")
        with pytest.raises(EvalError, match="non-finite value at node"):
            g.eval({"x": [1.0, -1.0]})

    def test_select(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(g.where(x < 2.0, x * 10.0, -x), "y")
        tape = g.eval({"x": [1.0, 3.0]})
        assert_allclose(tape.output_values["y"], [10.0, -3.0])

    def test_deterministic(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(g.exp(g.sqrt(x * x + 1.0)), "y")
        b = {"x": np.linspace(-2, 2, 64)}
        a = g.eval(b).output_values["y"]
        c = g.eval(b).output_values["y"]
        assert np.array_equal(a, c)

    def test_free_mode_matches_full(self):
        g = Graph()
        x = g.input("x")
        y = x
        for _ in range(20):
            y = y * 1.01 + 0.1
        g.mark_output(y, "y")
        b = {"x": np.arange(5.0)}
        full = g.eval(b, keep_tape=True).output_values["y"]
        free = g.eval(b, keep_tape=False).output_values["y"]
        assert np.array_equal(full, free)

    def test_dump_format(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(x * x, "sq")
        text = g.to_text()
        lines = text.splitlines()
        assert lines[0].startswith("0\tinput")
        assert "output\tsq" in lines[-1]


class TestGrad:
    def test_square(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(x * x, "y")
        tape = g.eval({"x": 3.0})
        d = g.grad(tape, "y", ["x"])
        assert_allclose(d["x"], 6.0)

    def test_hinge_subgradient(self):
        def build(xv):
            g = Graph()
            x, k = g.input("x"), g.input("k")
            g.mark_output(g.pospart(x - k), "h")
            tape = g.eval({"x": xv, "k": 0.8})
            return g.grad(tape, "h", ["x", "k"])

        d = build(1.0)
        assert_allclose(d["x"], 1.0)
        assert_allclose(d["k"], -1.0)
        d = build(0.5)
        assert_allclose(d["x"], 0.0)
        assert_allclose(d["k"], 0.0)

    def test_linearity(self):
        def make(a, b):
            g = Graph()
            x = g.input("x")
            f = g.exp(x * 0.3)
            h = g.sqrt(x + 2.0)
            g.mark_output(a * f + b * h, "y")
            tape = g.eval({"x": np.array([0.5, 1.5])})
            return g.grad(tape, "y", ["x"])["x"]

        lhs = make(2.0, -3.0)
        rhs = 2.0 * make(1.0, 0.0) + (-3.0) * make(0.0, 1.0)
        assert_allclose(lhs, rhs, rtol=1e-15)

    def test_fanout_accumulation(self):
        g = Graph()
        x = g.input("x")
        f = g.exp(x)
        g.mark_output(f + f, "y")
        g.mark_output(f, "f")
        tape = g.eval({"x": 0.7})
        two = g.grad(tape, "y", ["x"])["x"]
        one = g.grad(tape, "f", ["x"])["x"]
        assert_allclose(two, 2.0 * one, rtol=1e-15)

    def test_off_path_input_gets_zero(self):
        g = Graph()
        x, z = g.input("x"), g.input("z")
        g.mark_output(x * 2.0, "y")
        _ = z * 5.0
        tape = g.eval({"x": np.ones(3), "z": np.ones(3)})
        d = g.grad(tape, "y", ["z"])
        assert_allclose(d["z"], np.zeros(3))

    def test_not_an_output(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(x * x, "y")
        tape = g.eval({"x": 1.0})
        with pytest.raises(GraphError, match="not a marked output"):
            g.grad(tape, "nope", ["x"])

    def test_max_tie_splits(self):
        g = Graph()
        a, b = g.input("a"), g.input("b")
        g.mark_output(g.maximum(a, b), "m")
        tape = g.eval({"a": np.array([1.0, 2.0, 2.0]),
                       "b": np.array([2.0, 1.0, 2.0])})
        d = g.grad(tape, "m", ["a", "b"])
        assert_allclose(d["a"], [0.0, 1.0, 0.5])
        assert_allclose(d["b"], [1.0, 0.0, 0.5])

    def test_sqrt_zero_kink_is_zero(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(g.sqrt(g.pospart(x)), "y")
        tape = g.eval({"x": np.array([-1.0, 4.0])})
        d = g.grad(tape, "y", ["x"])["x"]
        assert_allclose(d, [0.0, 0.25])

    def test_matmul_grads(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 2))

        g = Graph()
        A, W = g.input("A"), g.input("W")
        g.mark_output(g.reduce_mean(g.matmul(A, W)), "m")
        tape = g.eval({"A": a, "W": w})
        d = g.grad(tape, "m", ["A", "W"])

        for name, val in [("A", a), ("W", w)]:
            fd = np.zeros_like(val)
            h = 1e-6
            for idx in np.ndindex(val.shape):
                up = {"A": a.copy(), "W": w.copy()}
                dn = {"A": a.copy(), "W": w.copy()}
                up[name][idx] += h
                dn[name][idx] -= h
                fd[idx] = (g.eval(up).output_values["m"]
                           - g.eval(dn).output_values["m"]) / (2 * h)
            assert_allclose(d[name], fd, rtol=1e-6, atol=1e-9)

    def test_grad_requires_full_tape(self):
        g = Graph()
        x = g.input("x")
        g.mark_output(x * x, "y")
        tape = g.eval({"x": 2.0}, keep_tape=False)
        with pytest.raises(GraphError, match="keep_tape"):
            g.grad(tape, "y", ["x"])


# one scalar probe point per op, away from kinks
_OP_CASES = [
    ("add", lambda g, x, y: x + y, 0.7, 1.3),
    ("sub", lambda g, x, y: x - y, 0.7, 1.3),
    ("mul", lambda g, x, y: x * y, 0.7, 1.3),
    ("div", lambda g, x, y: x / y, 0.7, 1.3),
    ("neg", lambda g, x, y: -x, 0.7, None),
    ("exp", lambda g, x, y: g.exp(x), 0.4, None),
    ("log", lambda g, x, y: g.log(x), 1.7, None),
    ("sqrt", lambda g, x, y: g.sqrt(x), 2.3, None),
    ("max", lambda g, x, y: g.maximum(x, y), 0.9, 0.2),
    ("pospart", lambda g, x, y: g.pospart(x), 0.6, None),
    ("select", lambda g, x, y: g.where(g.const(1.0), x * x, y), 0.8, 0.1),
    ("activation", lambda g, x, y: g.activation(x, "softplus"), 0.3, None),
]


@pytest.mark.parametrize("name,fn,xv,yv", _OP_CASES, ids=[c[0] for c in _OP_CASES])
def test_op_adjoint_matches_fd(name, fn, xv, yv):
    def build(g):
        x = g.input("x")
        y = g.input("y") if yv is not None else None
        return g.mark_output(fn(g, x, y), "out")

    bindings = {"x": np.float64(xv)}
    if yv is not None:
        bindings["y"] = np.float64(yv)

    g = Graph()
    build(g)
    tape = g.eval(bindings)
    ad = g.grad(tape, "out", ["x"])["x"]
    fd = _grad_fd(build, bindings, "x")
    assert_allclose(ad, fd, rtol=1e-6, atol=1e-9)


def test_random_graph_gradients_match_fd():
    """Composite expression probed at several random smooth points."""
    def build(g):
        x, y, z = g.input("x"), g.input("y"), g.input("z")
        e = g.exp(x * 0.5 - y)
        s = g.sqrt(y * y + 1.0)
        m = g.maximum(x * y, z + 2.0)
        return g.mark_output(e * s + m / (z + 3.0), "out")

    rng = np.random.default_rng(42)
    for _ in range(25):
        bindings = {k: rng.uniform(0.3, 1.8, size=4) for k in ("x", "y", "z")}
        g = Graph()
        build(g)
        tape = g.eval(bindings)
        # skip probes that land near the max kink
        gap = np.abs(tape.values[g.inputs["x"]] * tape.values[g.inputs["y"]]
                     - (tape.values[g.inputs["z"]] + 2.0))
        if np.any(gap < 1e-3):
            continue
        for name in ("x", "y", "z"):
            ad = g.grad(tape, "out", [name])[name]
            fd = _grad_fd(build, bindings, name)
            assert_allclose(ad, fd, rtol=1e-6, atol=1e-9)
