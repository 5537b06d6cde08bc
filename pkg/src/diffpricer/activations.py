"""Smooth activation functions with first and second derivatives.

Only everywhere-differentiable activations are offered: the derivative
networks built on top of them need rho' everywhere and training against
target gradients additionally needs rho''. ReLU is deliberately absent.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Activation", "get_activation", "ACTIVATIONS"]


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Activation:
    """Bundle of (value, first derivative, second derivative)."""

    def __init__(self, name, value, deriv, deriv2):
        self.name = name
        self.value = value
        self.deriv = deriv
        self.deriv2 = deriv2

    def __repr__(self):
        return f"Activation({self.name!r})"


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_d2(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _sigmoid_d(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _sigmoid_d2(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_d(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _elu_d2(x):
    return np.where(x > 0, 0.0, np.exp(np.minimum(x, 0.0)))


def _swish(x):
    return x * _sigmoid(x)


def _swish_d(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _swish_d2(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))


ACTIVATIONS = {
    "softplus": Activation("softplus", _softplus, _sigmoid, _softplus_d2),
    "sigmoid": Activation("sigmoid", _sigmoid, _sigmoid_d, _sigmoid_d2),
    "elu": Activation("elu", _elu, _elu_d, _elu_d2),
    "swish": Activation("swish", _swish, _swish_d, _swish_d2),
    "identity": Activation("identity", lambda x: x,
                           lambda x: np.ones_like(x),
                           lambda x: np.zeros_like(x)),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise KeyError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None
