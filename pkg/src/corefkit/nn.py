"""Feedforward layers, the refinement gate, embedding tables, and a
finite-difference gradient checker over the autodiff engine."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform Glorot-style init drawn from the run RNG."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


class ParameterBag:
    """Named parameter registry shared by the model, optimizer and checkpoints."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def create(self, name, data):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def items(self):
        return sorted(self._params.items())

    def names(self):
        return [n for n, _ in self.items()]

    def zero_grad(self):
        for _, p in self._params.items():
            p.zero_grad()

    def n_floats(self):
        return sum(p.data.size for p in self._params.values())

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.items()}

    def load_state_dict(self, state):
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter set mismatch: {sorted(missing)}")
        for n, p in self._params.items():
            if p.data.shape != state[n].shape:
                raise ValueError(f"shape mismatch for {n}: {p.data.shape} vs {state[n].shape}")
            p.data[...] = state[n]


class Linear:
    def __init__(self, bag, name, in_dim, out_dim, rng, bias=True):
        self.w = bag.create(f"{name}.w", glorot(rng, in_dim, out_dim))
        self.b = bag.create(f"{name}.b", np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        out = ad.matmul(x, self.w)
        if self.b is not None:
            out = ad.add(out, ad.reshape(self.b, (1, -1)))
        return out


class FFNN:
    """Rectifier MLP with dropout on hidden activations and a linear head.

    The head row doubles as the output projection (the w-vector of each
    scorer), so a scorer is one FFNN with out_dim=1.
    """

    def __init__(self, bag, name, in_dim, hidden_size, depth, out_dim, dropout, rng):
        self.layers = []
        prev = in_dim
        for i in range(depth):
            self.layers.append(Linear(bag, f"{name}.h{i}", prev, hidden_size, rng))
            prev = hidden_size
        self.head = Linear(bag, f"{name}.out", prev, out_dim, rng)
        self.dropout = dropout
        self.out_dim = out_dim

    def __call__(self, x, train=False, rng=None):
        if x.data.ndim != 2:
            raise ValueError("FFNN expects a 2-D batch")
        h = x
        for layer in self.layers:
            h = ad.relu(layer(h))
            h = ad.dropout(h, self.dropout, rng, train)
        out = self.head(h)
        if out.data.shape[1] != self.out_dim:
            raise ValueError("FFNN head dimension mismatch")
        return out


class EmbeddingTable:
    def __init__(self, bag, name, n, dim, rng):
        self.table = bag.create(name, glorot(rng, n, dim, shape=(n, dim)))

    def __call__(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.min(initial=0) < 0 or (idx.size and idx.max() >= self.table.data.shape[0]):
            raise IndexError("embedding index out of range")
        return ad.gather_rows(self.table, idx)


def gate_update(g, a, w_gate, override=None):
    """Gated interpolation g' = f*g + (1-f)*a with f = sigmoid([g, a] @ W).

    `override` replaces f with a constant (a test hook: a sigmoid cannot
    produce exactly 0 or 1 at finite weights, and override=1.0 must make
    the update the bitwise identity on g).
    """
    if g.data.shape != a.data.shape:
        raise ValueError(f"gate operands differ in shape: {g.data.shape} vs {a.data.shape}")
    if override is not None:
        f = Tensor(np.full_like(g.data, float(override)))
    else:
        if w_gate.data.shape != (2 * g.data.shape[1], g.data.shape[1]):
            raise ValueError("gate weight shape mismatch")
        f = ad.sigmoid(ad.matmul(ad.concat([g, a], axis=1), w_gate))
    one_minus = ad.add(ad.mul(f, -1.0), 1.0)
    return ad.add(ad.mul(f, g), ad.mul(one_minus, a))


def finite_difference_check(fn, params, rng, h=1e-5, max_coords=8):
    """Compare analytic gradients of fn() against central differences.

    fn: nullary callable rebuilding the graph and returning the scalar loss
    Tensor (it must be deterministic; run dropout-free).  For each
    parameter up to `max_coords` random coordinates are perturbed.  Returns
    the worst relative error max(|a - n| / max(|a|, |n|, 1e-8)).
    """
    for p in params:
        p.zero_grad()
    loss = fn()
    loss.backward()
    analytic = {id(p): (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params}
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        k = min(max_coords, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(fn().data)
            flat[c] = orig - h
            down = float(fn().data)
            flat[c] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[id(p)].reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
