"""Adaptive-moment optimizer with parameter groups, linear LR decay and
decoupled weight decay, plus a deterministic binary checkpoint format.

Checkpoints are written as a flat custom container rather than .npz:
zip archives embed timestamps, which would break the bitwise
run-to-run reproducibility the engine guarantees.
"""

from __future__ import annotations

import struct

import numpy as np

from .autodiff import NumericError

_CKPT_MAGIC = b"CKPT"
_CKPT_VERSION = 1


class AdamGroup:
    def __init__(self, names, lr, weight_decay=0.0):
        self.names = list(names)
        self.lr = lr
        self.weight_decay = weight_decay


class Adam:
    """Adam with bias correction, per-group LR / decoupled weight decay,
    and an optional linear decay to zero over `total_steps`."""

    def __init__(self, bag, groups, beta1=0.9, beta2=0.999, eps=1e-8, total_steps=None):
        self.bag = bag
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.total_steps = total_steps
        self.step_count = 0
        covered = [n for g in groups for n in g.names]
        if sorted(covered) != bag.names():
            raise ValueError("optimizer groups must cover every parameter exactly once")
        self.m = {n: np.zeros_like(bag[n].data) for n in covered}
        self.v = {n: np.zeros_like(bag[n].data) for n in covered}

    def decay_factor(self, step_index):
        """Linear decay over [0, total_steps); the final step lands at 0."""
        if self.total_steps is None:
            return 1.0
        span = max(self.total_steps - 1, 1)
        return max(0.0, 1.0 - step_index / span)

    def step(self):
        t = self.step_count + 1
        factor = self.decay_factor(self.step_count)
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for group in self.groups:
            lr = group.lr * factor
            for name in group.names:
                p = self.bag[name]
                g = p.grad
                if g is None:
                    g = np.zeros_like(p.data)
                if not np.isfinite(g).all():
                    raise NumericError(f"non-finite gradient for parameter {name}")
                m = self.m[name]
                v = self.v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                if group.weight_decay:
                    p.data -= lr * group.weight_decay * p.data
                p.data -= lr * update
        self.step_count = t

    def state_dict(self):
        state = {"step": self.step_count}
        for n in self.m:
            state[f"m.{n}"] = self.m[n].copy()
            state[f"v.{n}"] = self.v[n].copy()
        return state

    def load_state_dict(self, state):
        self.step_count = int(state["step"])
        for n in self.m:
            self.m[n][...] = state[f"m.{n}"]
            self.v[n][...] = state[f"v.{n}"]


def clip_global_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------------------
# Checkpoint container: magic, version, seed, then named float64 tensors in
# sorted order.  Byte-stable for identical contents.
# ---------------------------------------------------------------------------


def _write_tensor(fh, name, arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    nb = name.encode("utf-8")
    fh.write(struct.pack("<H", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(arr.astype("<f8", copy=False).tobytes())


def _read_tensor(fh):
    raw = fh.read(2)
    if not raw:
        return None
    (nlen,) = struct.unpack("<H", raw)
    name = fh.read(nlen).decode("utf-8")
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape).copy()
    return name, data


def save_checkpoint(path, bag, optimizer=None, seed=0, meta=None):
    """meta: optional JSON-serialisable dict (e.g. the resolved config)."""
    import json

    tensors = dict(bag.state_dict())
    if optimizer is not None:
        opt_state = optimizer.state_dict()
        tensors["__opt_step__"] = np.asarray(float(opt_state.pop("step")))
        for k, v in opt_state.items():
            tensors[f"__opt__.{k}"] = v
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<q", int(seed)))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])


def load_checkpoint(path):
    """Returns (params: dict name->array, opt_state or None, seed, meta)."""
    import json

    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (seed,) = struct.unpack("<q", fh.read(8))
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8")) if meta_len else {}
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            item = _read_tensor(fh)
            if item is None:
                raise ValueError(f"truncated checkpoint: {path}")
            tensors[item[0]] = item[1]
    params = {}
    opt_state = {}
    for name, arr in tensors.items():
        if name == "__opt_step__":
            opt_state["step"] = int(arr.reshape(-1)[0])
        elif name.startswith("__opt__."):
            opt_state[name[len("__opt__."):]] = arr
        else:
            params[name] = arr
    return params, (opt_state if opt_state else None), seed, meta
