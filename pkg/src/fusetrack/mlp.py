"""Small fully-connected network with hand-written backprop.

Inputs may carry any number of leading axes; layers act on the last one,
so the same object serves pooled vectors and per-cell pair tensors.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class Mlp:
    """ReLU on hidden layers, identity on the output layer."""

    def __init__(self, layer_sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.layer_sizes = sizes
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def params(self):
        """Yield ``(name, array)`` pairs; arrays are live references."""
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            yield f"W{k}", W
            yield f"b{k}", b

    def __call__(self, x):
        return self.forward(x)[0]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected last dimension {self.n_in}, got {x.shape[-1]}")
        cache = []
        h = x
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if k < last else z
        return h, cache

    def backward(self, dout, cache):
        """Returns ``(d_input, grads)`` with grads ordered like :meth:`params`."""
        grads = [None] * (2 * len(self.weights))
        g = np.asarray(dout, dtype=float)
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            h, z = cache[k]
            if k < last:
                g = g * (z > 0)
            W = self.weights[k]
            grads[2 * k] = h.reshape(-1, h.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            grads[2 * k + 1] = g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ W.T
        return g, grads

    # -- pairwise evaluation ------------------------------------------------
    #
    # For inputs of the form concat(a[..., i, :], b[..., j, :]) the first
    # layer separates into a row term plus a column term, so the
    # (..., M, M, Fa + Fb) tensor never has to be multiplied out.

    def _split_first(self, a_cols, b_cols):
        W = self.weights[0]
        return W[a_cols], W[b_cols]

    def forward_pair(self, a, b, a_cols=None, b_cols=None):
        """Evaluate on every (i, j) pair of rows of ``a`` (..., M, Fa) and
        ``b`` (..., N, Fb). ``a_cols``/``b_cols`` give where their features
        sit in the concatenated input (default: ``a`` first, then ``b``)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a_cols is None:
            a_cols = np.arange(a.shape[-1])
        if b_cols is None:
            b_cols = np.arange(a.shape[-1], a.shape[-1] + b.shape[-1])
        if len(a_cols) + len(b_cols) != self.n_in:
            raise ValueError(f"pair width {len(a_cols) + len(b_cols)} != {self.n_in}")
        Wa, Wb = self._split_first(a_cols, b_cols)
        z = (a @ Wa)[..., :, None, :] + (b @ Wb)[..., None, :, :] + self.biases[0]
        cache = [((a, b, a_cols, b_cols), z)]
        last = len(self.weights) - 1
        h = np.maximum(z, 0.0) if last > 0 else z
        for k in range(1, len(self.weights)):
            W, bias = self.weights[k], self.biases[k]
            z = h @ W + bias
            cache.append((h, z))
            h = np.maximum(z, 0.0) if k < last else z
        return h, cache

    def backward_pair(self, dout, cache):
        """Returns ``(d_a, d_b, grads)`` for a :meth:`forward_pair` cache."""
        grads = [None] * (2 * len(self.weights))
        g = np.asarray(dout, dtype=float)
        last = len(self.weights) - 1
        for k in range(last, 0, -1):
            h, z = cache[k]
            if k < last:
                g = g * (z > 0)
            grads[2 * k] = h.reshape(-1, h.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            grads[2 * k + 1] = g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ self.weights[k].T
        (a, b, a_cols, b_cols), z = cache[0]
        if last > 0:
            g = g * (z > 0)
        g_rows = g.sum(axis=-2)  # (..., M, H)
        g_cols = g.sum(axis=-3)  # (..., N, H)
        Wa, Wb = self._split_first(a_cols, b_cols)
        dW = np.zeros_like(self.weights[0])
        dW[a_cols] = a.reshape(-1, a.shape[-1]).T @ g_rows.reshape(-1, g.shape[-1])
        dW[b_cols] = b.reshape(-1, b.shape[-1]).T @ g_cols.reshape(-1, g.shape[-1])
        grads[0] = dW
        grads[1] = g_rows.reshape(-1, g.shape[-1]).sum(axis=0)
        return g_rows @ Wa.T, g_cols @ Wb.T, grads
