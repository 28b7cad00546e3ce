"""Dense float64 tensors with reverse-mode gradients, Adam, checkpoints.

Every op validates shapes exactly (nothing broadcasts implicitly) and
records its inputs on the computation tape only when a gradient can flow.
backward() releases intermediate gradients as it walks the tape, so only
leaf parameters keep a .grad buffer. Non-finite values anywhere in a
forward op or a leaf gradient raise immediately rather than propagating.
"""

import struct

import numpy as np
from scipy.special import expit

from .errors import (DimensionError, MalformedInputError, NumericalError,
                     UsageError)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents")

    def __init__(self, value, requires_grad=False, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def constant(value):
    return Tensor(value)


def parameter(value):
    return Tensor(value, requires_grad=True)


def init_uniform(shape, fan_in, gen):
    """Uniform in +-1/sqrt(fan_in), drawn from the given generator."""
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(gen.uniform(-bound, bound, size=shape))


def _make(value, pairs, op):
    if not np.isfinite(value).all():
        raise NumericalError(f"non-finite output of {op}")
    live = tuple((p, fn) for p, fn in pairs if p.requires_grad)
    return Tensor(value, requires_grad=bool(live), parents=live)


def _want(cond, op, *shapes):
    if not cond:
        raise DimensionError(f"{op}: incompatible shapes {shapes}")


def matmul(a, b):
    va, vb = a.value, b.value
    _want(va.ndim == 2 and vb.ndim == 2 and va.shape[1] == vb.shape[0],
          "matmul", va.shape, vb.shape)
    return _make(va @ vb,
                 ((a, lambda g: g @ vb.T), (b, lambda g: va.T @ g)), "matmul")


def bmm(a, b):
    va, vb = a.value, b.value
    _want(va.ndim == 3 and vb.ndim == 3 and va.shape[0] == vb.shape[0]
          and va.shape[2] == vb.shape[1], "bmm", va.shape, vb.shape)
    return _make(va @ vb,
                 ((a, lambda g: g @ vb.transpose(0, 2, 1)),
                  (b, lambda g: va.transpose(0, 2, 1) @ g)), "bmm")


def add(a, b):
    _want(a.value.shape == b.value.shape, "add", a.value.shape, b.value.shape)
    return _make(a.value + b.value, ((a, lambda g: g), (b, lambda g: g)), "add")


def sub(a, b):
    _want(a.value.shape == b.value.shape, "sub", a.value.shape, b.value.shape)
    return _make(a.value - b.value, ((a, lambda g: g), (b, lambda g: -g)), "sub")


def mul(a, b):
    _want(a.value.shape == b.value.shape, "mul", a.value.shape, b.value.shape)
    va, vb = a.value, b.value
    return _make(va * vb, ((a, lambda g: g * vb), (b, lambda g: g * va)), "mul")


def scale(a, c):
    c = float(c)
    return _make(a.value * c, ((a, lambda g: g * c),), "scale")


def relu(a):
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0),
                 ((a, lambda g: g * mask),), "relu")


def sigmoid(a):
    s = expit(a.value)
    return _make(s, ((a, lambda g: g * s * (1.0 - s)),), "sigmoid")


def softplus(a):
    """log(1 + exp(x)), the stable building block for -log sigmoid losses."""
    va = a.value
    return _make(np.logaddexp(0.0, va),
                 ((a, lambda g: g * expit(va)),), "softplus")


def square(a):
    va = a.value
    return _make(va * va, ((a, lambda g: 2.0 * va * g),), "square")


def squared_error(a, b):
    _want(a.value.shape == b.value.shape, "squared_error",
          a.value.shape, b.value.shape)
    d = a.value - b.value
    return _make(d * d, ((a, lambda g: 2.0 * d * g),
                         (b, lambda g: -2.0 * d * g)), "squared_error")


def sum_axis(a, axis=None):
    va = a.value

    def back(g):
        if axis is None:
            return np.full_like(va, float(g))
        return np.broadcast_to(np.expand_dims(g, axis), va.shape).copy()

    return _make(va.sum(axis=axis), ((a, back),), "sum_axis")


def mean_axis(a, axis=None):
    va = a.value
    count = va.size if axis is None else va.shape[axis]

    def back(g):
        if axis is None:
            return np.full_like(va, float(g) / count)
        return np.broadcast_to(np.expand_dims(g, axis), va.shape) / count

    return _make(va.mean(axis=axis), ((a, back),), "mean_axis")


def reshape(a, shape):
    va = a.value
    return _make(va.reshape(shape),
                 ((a, lambda g: g.reshape(va.shape)),), "reshape")


def roll_rows(a, shift):
    return _make(np.roll(a.value, shift, axis=0),
                 ((a, lambda g: np.roll(g, -shift, axis=0)),), "roll_rows")


def slice_mid_rows(a, start, stop=None):
    """t[:, start:stop, :] on a rank-3 tensor."""
    va = a.value
    _want(va.ndim == 3, "slice_mid_rows", va.shape)
    stop_ = va.shape[1] if stop is None else stop

    def back(g):
        out = np.zeros_like(va)
        out[:, start:stop_, :] = g
        return out

    return _make(va[:, start:stop_, :], ((a, back),), "slice_mid_rows")


def backward(loss):
    """Populate .grad on every reachable requires_grad leaf."""
    if loss.value.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any parameter")
    topo, seen, stack = [], set(), [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    pending = {id(loss): np.ones(())}
    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if not np.isfinite(g).all():
                raise NumericalError("non-finite gradient reached a parameter")
            node.grad = np.array(g) if node.grad is None else node.grad + g
            continue
        for parent, fn in node._parents:
            contribution = fn(g)
            held = pending.get(id(parent))
            pending[id(parent)] = (contribution if held is None
                                   else held + contribution)


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


class Adam:
    """Adam with bias correction over a list of parameter tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.value) for p in self.params]
        self.second_moment = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self):
        zero_grads(self.params)


_MAGIC = b"SUBCRNNP"
_VERSION = 1


def save_params(named, path):
    """Checkpoint: versioned header + name-sorted parameter blobs."""
    items = sorted((name, np.ascontiguousarray(
        t.value if isinstance(t, Tensor) else t, dtype=np.float64))
        for name, t in named.items())
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", _MAGIC, _VERSION, len(items)))
        for name, arr in items:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<8sII"))
        try:
            magic, version, count = struct.unpack("<8sII", head)
        except struct.error as exc:
            raise MalformedInputError(f"{path}: truncated header") from exc
        if magic != _MAGIC:
            raise MalformedInputError(f"{path}: not a parameter checkpoint")
        if version != _VERSION:
            raise MalformedInputError(
                f"{path}: checkpoint version {version} unsupported")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(size * 8), dtype=np.float64)
            if data.size != size:
                raise MalformedInputError(f"{path}: truncated blob for {name}")
            out[name] = data.reshape(shape).copy()
    return out
