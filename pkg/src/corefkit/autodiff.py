"""Reverse-mode automatic differentiation over float64 numpy arrays.

Small tape-free design: each op returns a Tensor holding its value, its
parent tensors, and a closure that routes the incoming gradient to the
parents.  ``Tensor.backward()`` topologically sorts the graph and runs the
closures in reverse.  Only the op set this engine needs is implemented;
every differentiable op is covered by finite-difference tests.

All op outputs are checked for NaN/Inf (a NumericError is raised), since
a silent non-finite value in a long training run is much harder to track
down than the ~one extra pass per op costs at these problem sizes.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class NumericError(RuntimeError):
    """A computation produced NaN or Inf."""


CHECK_FINITE = True


def _check_finite(data, what):
    if CHECK_FINITE and not np.isfinite(data).all():
        raise NumericError(f"non-finite values in {what}")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the free functions below do the work.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, what):
    _check_finite(data, what)
    return Tensor(data, parents=tuple(parents), backward=backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward, "add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward, "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward, "matmul")


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0.0))

    return _make(out_data, (a,), backward, "relu")


def sigmoid(a):
    a = as_tensor(a)
    # Stable piecewise form; exp only of nonpositive arguments.
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward, "sigmoid")


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(out_data, tensors, backward, "concat")


def gather_rows(a, idx):
    """Select rows a[idx]; backward scatter-adds (duplicate indices allowed)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out_data = a.data[idx]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        a._accumulate(grad)

    return _make(out_data, (a,), backward, "gather_rows")


def scatter_columns(a, col_idx, width):
    """Scatter columns of `a` into a zero matrix of `width` columns.

    out[i, col_idx[i, j]] += a[i, j] where mask col_idx >= 0; negative
    indices are dropped.  Used to expand per-candidate rows into dense
    kept-span index space.
    """
    a = as_tensor(a)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    if col_idx.shape != a.data.shape:
        raise ValueError("scatter_columns index shape mismatch")
    n = a.data.shape[0]
    valid = col_idx >= 0
    rows = np.broadcast_to(np.arange(n)[:, None], col_idx.shape)
    out_data = np.zeros((n, width), dtype=np.float64)
    np.add.at(out_data, (rows[valid], col_idx[valid]), a.data[valid])

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[valid] = g[rows[valid], col_idx[valid]]
        a._accumulate(grad)

    return _make(out_data, (a,), backward, "scatter_columns")


def slice_cols(a, lo, hi):
    a = as_tensor(a)
    out_data = a.data[:, lo:hi]

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[:, lo:hi] = g
        a._accumulate(grad)

    return _make(out_data.copy(), (a,), backward, "slice_cols")


def weighted_gather_sum(source, idx, weights):
    """out[i] = sum_j weights[i, j] * source[idx[i, j]], skipping idx < 0.

    idx: [n, m] int; weights: [n, m] Tensor; source: [N, d] Tensor.
    Linear memory in n*m: the gathered [n, m, d] block is never
    materialised, the sum runs column-by-column.
    """
    source, weights = as_tensor(source), as_tensor(weights)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != weights.data.shape:
        raise ValueError("weighted_gather_sum index/weight shape mismatch")
    n, m = idx.shape
    d = source.data.shape[1]
    out_data = np.zeros((n, d), dtype=np.float64)
    for j in range(m):
        valid = idx[:, j] >= 0
        if valid.any():
            rows = idx[valid, j]
            out_data[valid] += weights.data[valid, j, None] * source.data[rows]

    def backward(g):
        if weights.requires_grad:
            dw = np.zeros_like(weights.data)
            for j in range(m):
                valid = idx[:, j] >= 0
                if valid.any():
                    dw[valid, j] = (g[valid] * source.data[idx[valid, j]]).sum(axis=1)
            weights._accumulate(dw)
        if source.requires_grad:
            ds = np.zeros_like(source.data)
            for j in range(m):
                valid = idx[:, j] >= 0
                if valid.any():
                    np.add.at(ds, idx[valid, j], weights.data[valid, j, None] * g[valid])
            source._accumulate(ds)

    return _make(out_data, (source, weights), backward, "weighted_gather_sum")


def segment_softmax(logits, seg_ids, n_segments):
    """Softmax of a [k, 1] logit column within each segment, max-subtracted."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2 or logits.data.shape[1] != 1:
        raise ValueError("segment_softmax expects a [k, 1] column")
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    flat = logits.data[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, seg_ids, flat)
    e = np.exp(flat - seg_max[seg_ids])
    seg_sum = np.zeros(n_segments)
    np.add.at(seg_sum, seg_ids, e)
    out_flat = e / seg_sum[seg_ids]
    out_data = out_flat[:, None]

    def backward(g):
        gf = g[:, 0]
        dot = np.zeros(n_segments)
        np.add.at(dot, seg_ids, gf * out_flat)
        logits._accumulate((out_flat * (gf - dot[seg_ids]))[:, None])

    return _make(out_data, (logits,), backward, "segment_softmax")


def segment_sum(a, seg_ids, n_segments):
    """Sum rows of a [k, d] tensor into [n_segments, d] by segment id."""
    a = as_tensor(a)
    seg_ids = np.asarray(seg_ids, dtype=np.int64)
    out_data = np.zeros((n_segments, a.data.shape[1]), dtype=np.float64)
    np.add.at(out_data, seg_ids, a.data)

    def backward(g):
        a._accumulate(g[seg_ids])

    return _make(out_data, (a,), backward, "segment_sum")


def broadcast_rows(row, n):
    """Tile a [1, d] row to [n, d]; backward sums over rows."""
    row = as_tensor(row)
    if row.data.ndim != 2 or row.data.shape[0] != 1:
        raise ValueError("broadcast_rows expects a [1, d] row")
    out_data = np.broadcast_to(row.data, (n, row.data.shape[1])).copy()

    def backward(g):
        row._accumulate(g.sum(axis=0, keepdims=True))

    return _make(out_data, (row,), backward, "broadcast_rows")


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")
    out_data = a.data.T.copy()

    def backward(g):
        a._accumulate(g.T)

    return _make(out_data, (a,), backward, "transpose")


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out_data, (a,), backward, "reshape")


def sum_all(a):
    a = as_tensor(a)
    out_data = np.asarray(a.data.sum())

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), backward, "sum")


def masked_softmax(a, mask, axis=1):
    """Row softmax over unmasked entries, computed with max-subtraction.

    Masked entries are exactly 0 in the output.  A row with no unmasked
    entry is an error.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ValueError("softmax mask shape mismatch")
    if not mask.any(axis=axis).all():
        raise ValueError("softmax row with all entries masked")
    neg = np.where(mask, a.data, -np.inf)
    m = neg.max(axis=axis, keepdims=True)
    e = np.exp(neg - m)
    e[~mask] = 0.0
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return _make(out_data, (a,), backward, "masked_softmax")


def masked_logsumexp(a, mask, axis=1):
    """Row log-sum-exp over unmasked entries, max-subtracted for stability."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ValueError("logsumexp mask shape mismatch")
    if not mask.any(axis=axis).all():
        raise ValueError("logsumexp row with all entries masked")
    neg = np.where(mask, a.data, -np.inf)
    m = neg.max(axis=axis, keepdims=True)
    e = np.exp(neg - m)
    e[~mask] = 0.0
    s = e.sum(axis=axis, keepdims=True)
    out_data = (m + np.log(s)).squeeze(axis)
    soft = e / s

    def backward(g):
        a._accumulate(np.expand_dims(g, axis) * soft)

    return _make(out_data, (a,), backward, "masked_logsumexp")


def entity_membership(pdense, peps):
    """Differentiable soft entity-membership matrix from antecedent mass.

    pdense: [n, n] Tensor, pdense[x, k] = antecedent mass of span x on
    preceding span k (zero off-candidate); peps: [n] Tensor of
    discourse-new mass.  Forward/backward run in the compiled kernels.
    """
    pdense, peps = as_tensor(pdense), as_tensor(peps)
    n = peps.data.shape[0]
    if pdense.data.shape != (n, n):
        raise ValueError("entity_membership expects square [n, n] mass matrix")
    q_data = kernels.entity_membership_forward(pdense.data, peps.data)

    def backward(g):
        dp, de = kernels.entity_membership_backward(pdense.data, q_data, g)
        if pdense.requires_grad:
            pdense._accumulate(dp)
        if peps.requires_grad:
            peps._accumulate(de)

    return _make(q_data, (pdense, peps), backward, "entity_membership")


def dropout(a, rate, rng, train):
    """Inverted dropout; identity when rate == 0 or train is False."""
    a = as_tensor(a)
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)
