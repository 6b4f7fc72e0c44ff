"""Dense tanh layers with hand-written backprop (linear last layer)."""

import math

import numpy as np


def init_layers(sizes, rng):
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        Ws.append(rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in))
        bs.append(np.zeros(fan_out))
    return Ws, bs


def mlp_forward(weights, biases, x):
    """Return the output and the list of layer activations (input first)."""
    acts = [np.asarray(x, dtype=float)]
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        h = acts[-1] @ W + b
        acts.append(np.tanh(h) if l < last else h)
    return acts[-1], acts


def mlp_backward(weights, acts, delta):
    """Parameter gradients and the gradient w.r.t. the input, given ``dL/d(output)``."""
    gW, gb = [None] * len(weights), [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        delta = delta @ weights[l].T
        if l:
            delta = delta * (1.0 - acts[l] ** 2)
    return gW, gb, delta
