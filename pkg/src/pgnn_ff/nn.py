"""Fixed-topology multilayer perceptron with analytic gradients."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import NNLayer, NNParams
from .errors import DimensionError


def _act(name, Z):
    return np.tanh(Z) if name == "tanh" else Z


def _act_slope(name, A):
    # derivative expressed through the activation output
    if name != "tanh":
        return 1.0
    s = A * A
    np.subtract(1.0, s, out=s)
    return s


def _check_input(nn: NNParams, X: np.ndarray):
    if X.shape[-1] != nn.n_in:
        raise DimensionError(f"network expects {nn.n_in} inputs, got {X.shape[-1]}")


def forward_batch(nn: NNParams, X: np.ndarray):
    """Outputs for every row of X plus the activations needed for backprop."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_input(nn, X)
    acts = [X]
    A = X
    for layer in nn.hidden:
        A = _act(nn.activation, A @ layer.W.T + layer.B)
        acts.append(A)
    out = A @ nn.output.W[0] + nn.output.B[0]
    return out, acts


def backward_batch(nn: NNParams, acts, g_out: np.ndarray) -> list:
    """Gradient of sum_t g_out[t] * f_NN(x_t) as [(dW, dB), ...] per layer."""
    grads = [None] * len(nn.layers)
    grads[-1] = ((g_out @ acts[-1])[None, :], np.array([g_out.sum()]))
    delta = g_out[:, None] * nn.output.W
    ones = np.ones(g_out.size)
    for i in range(len(nn.hidden) - 1, -1, -1):
        delta *= _act_slope(nn.activation, acts[i + 1])
        grads[i] = (delta.T @ acts[i], ones @ delta)
        if i:
            delta = delta @ nn.hidden[i].W
    return grads


def grads_to_params(nn: NNParams, grads) -> NNParams:
    return NNParams(tuple(NNLayer(dW, dB) for dW, dB in grads), nn.activation)


def nn_forward(nn: NNParams, phi_in) -> float:
    phi_in = np.asarray(phi_in, dtype=float)
    if phi_in.ndim != 1:
        raise DimensionError("nn_forward takes a single input vector")
    out, _ = forward_batch(nn, phi_in[None, :])
    return float(out[0])


def hidden_output(nn: NNParams, phi_in) -> np.ndarray:
    """Output of the last hidden layer."""
    phi_in = np.asarray(phi_in, dtype=float)
    if phi_in.ndim != 1:
        raise DimensionError("hidden_output takes a single input vector")
    _, acts = forward_batch(nn, phi_in[None, :])
    return acts[-1][0]


def hidden_output_batch(nn: NNParams, X: np.ndarray) -> np.ndarray:
    _, acts = forward_batch(nn, X)
    return acts[-1]


def nn_gradient(nn: NNParams, phi_in) -> NNParams:
    """d f_NN / d p for every weight and bias, in an NNParams-shaped container."""
    phi_in = np.asarray(phi_in, dtype=float)
    if phi_in.ndim != 1:
        raise DimensionError("nn_gradient takes a single input vector")
    _, acts = forward_batch(nn, phi_in[None, :])
    return grads_to_params(nn, backward_batch(nn, acts, np.ones(1)))


def init_hidden_random(widths: Sequence[int], seed: int, scale: float = 1.0,
                       activation: str = "tanh") -> NNParams:
    """Uniform fan-in-scaled hidden layers and a zero output layer.

    ``widths`` is ``[n_in, n_1, ..., n_l]``.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise ValueError(f"widths must list the input and at least one hidden width, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, width in zip(widths[:-1], widths[1:]):
        a = scale / np.sqrt(fan_in)
        W = rng.uniform(-a, a, size=(width, fan_in))
        B = rng.uniform(-a, a, size=width)
        layers.append(NNLayer(W, B))
    layers.append(NNLayer(np.zeros((1, widths[-1])), np.zeros(1)))
    return NNParams(tuple(layers), activation)
