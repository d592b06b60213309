"""A small reverse-mode autodiff engine over dense 2-D numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure pushing the output gradient back to them. ``backward`` walks the
recorded graph in reverse topological order, accumulating into ``.grad``
of every tensor that requires gradients, then drops the recorded graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import (
    EmptyMask,
    InvalidProbability,
    LabelOutOfRange,
    MissingGradient,
    NonFiniteInput,
    NotAScalar,
    ShapeMismatch,
)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100  # keep numpy from hijacking ndarray @ Tensor

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise NotAScalar(f"item() on shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        backward(self)

    # operator sugar
    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __rmatmul__(self, other):
        return matmul(_wrap(other), self)

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    @property
    def T(self):
        return transpose(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with row/column broadcasting."""
    _check_broadcast(a, b, "mul")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    def bw(g):
        a._accumulate(c * g)

    return _make(c * a.data, (a,), bw)


def transpose(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), bw)


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeMismatch(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    return _make(np.concatenate([p.data for p in parts], axis=1), parts, bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(np.full(a.shape, g[0, 0], dtype=a.dtype))

    return _make(np.array([[a.data.sum()]], dtype=a.dtype), (a,), bw)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteInput("softmax_rows received non-finite entries")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        x._accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _make(y, (x,), bw)


def layer_norm(x: Tensor, scale_: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization (biased variance) followed by an affine map."""
    m = x.shape[1]
    if scale_.shape != (1, m) or shift.shape != (1, m):
        raise ShapeMismatch(
            f"layer_norm: input {x.shape}, scale {scale_.shape}, shift {shift.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat * scale_.data + shift.data

    def bw(g):
        if shift.requires_grad:
            shift._accumulate(g.sum(axis=0, keepdims=True))
        if scale_.requires_grad:
            scale_._accumulate((g * xhat).sum(axis=0, keepdims=True))
        if x.requires_grad:
            gx = g * scale_.data
            x._accumulate(
                inv_std
                * (
                    gx
                    - gx.mean(axis=1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=1, keepdims=True)
                )
            )

    return _make(out, (x, scale_, shift), bw)


def prelu(x: Tensor, a: Tensor) -> Tensor:
    if a.shape != (1, 1):
        raise ShapeMismatch(f"prelu slope must be 1x1, got {a.shape}")
    neg = x.data < 0
    slope = a.data[0, 0]
    out = np.where(neg, slope * x.data, x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(np.where(neg, slope * g, g))
        if a.requires_grad:
            a._accumulate(np.array([[np.sum(g * x.data * neg)]], dtype=a.dtype))

    return _make(out, (x, a), bw)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity outside training or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise InvalidProbability("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def bw(g):
        x._accumulate(g * keep)

    return _make(x.data * keep, (x,), bw)


def softmax_cross_entropy(logits: Tensor, labels, mask=None) -> Tensor:
    """Mean negative log-softmax of the true class over the masked rows."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, C = logits.shape
    if labels.shape[0] != n:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {n} logit rows")
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyMask("cross-entropy mask selects no rows")
    y = labels[idx]
    if np.any(y < 0) or np.any(y >= C):
        raise LabelOutOfRange(f"labels must lie in [0, {C})")
    z = logits.data[idx]
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(idx.size), y]
    loss = nll.mean()

    def bw(g):
        probs = np.exp(z - logsum[:, None])
        probs[np.arange(idx.size), y] -= 1.0
        full = np.zeros_like(logits.data)
        full[idx] = probs * (g[0, 0] / idx.size)
        logits._accumulate(full)

    return _make(np.array([[loss]], dtype=logits.dtype), (logits,), bw)


def multihead_mixed_attention(
    P: Tensor, L: np.ndarray, gamma: float, num_heads: int, d_k: int, d_q: int
) -> Tensor:
    """All heads of Laplacian-mixed attention in one graph node.

    ``P`` holds the stacked projections ``[Q_1..Q_h | K_1..K_h | V_1..V_h]``
    (``N x h*(2*d_k + d_q)``). Returns the head outputs concatenated
    column-wise (``N x h*d_q``). Heads are batched along a leading axis
    internally. At ``gamma == 0`` the softmax branch is never evaluated.
    """
    n = P.shape[0]
    h = num_heads
    if P.shape[1] != h * (2 * d_k + d_q) or L.shape != (n, n):
        raise ShapeMismatch(f"P {P.shape}, L {L.shape} for {h} heads, d_k={d_k}, d_q={d_q}")
    qk = h * d_k
    data = P.data
    Q = data[:, :qk].reshape(n, h, d_k).transpose(1, 0, 2)
    K = data[:, qk : 2 * qk].reshape(n, h, d_k).transpose(1, 0, 2)
    V = data[:, 2 * qk :].reshape(n, h, d_q).transpose(1, 0, 2)
    inv = 1.0 / np.sqrt(d_k)
    M = None
    if gamma > 0.0:
        S = np.matmul(Q, K.transpose(0, 2, 1))
        S *= inv
        if not np.all(np.isfinite(S)):
            raise NonFiniteInput("attention scores are not finite")
        S -= S.max(axis=2, keepdims=True)
        M = np.exp(S, out=S)
        M /= M.sum(axis=2, keepdims=True)
    if M is None:
        A = L
    elif gamma == 1.0:
        A = M
    else:
        A = gamma * M + (1.0 - gamma) * L
    O = np.matmul(A, V)  # (h, n, d_q)
    out = O.transpose(1, 0, 2).reshape(n, h * d_q)

    def bw(g):
        G = g.reshape(n, h, d_q).transpose(1, 0, 2)
        dP = np.zeros_like(data)
        dV = np.matmul(A.transpose(0, 2, 1) if A.ndim == 3 else A.T, G)
        dP[:, 2 * qk :] = dV.transpose(1, 0, 2).reshape(n, h * d_q)
        if M is not None:
            dM = np.matmul(G, V.transpose(0, 2, 1))
            dM *= gamma
            dS = M * (dM - (dM * M).sum(axis=2, keepdims=True))
            dS *= inv
            dP[:, :qk] = np.matmul(dS, K).transpose(1, 0, 2).reshape(n, qk)
            dP[:, qk : 2 * qk] = np.matmul(dS.transpose(0, 2, 1), Q).transpose(1, 0, 2).reshape(n, qk)
        P._accumulate(dP)

    return _make(out, (P,), bw)


# ------------------------------------------------------------------ backward


def backward(loss: Tensor):
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    Leaf gradients accumulate across calls; interior gradients are
    discarded and the recorded graph is released afterwards.
    """
    if loss.shape != (1, 1):
        raise NotAScalar(f"backward needs a 1x1 loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    interior = [n for n in order if n._backward is not None]
    for n in interior:
        n.grad = None
    loss._accumulate(np.ones((1, 1), dtype=loss.dtype))
    for node in reversed(interior):
        if node.grad is not None:
            node._backward(node.grad)
    for n in interior:
        n.grad = None
        n._parents = ()
        n._backward = None


# ---------------------------------------------------------------- parameters


class Params:
    """Named trainable tensors, iterated in sorted-name order."""

    def __init__(self, tensors=None):
        self._t: dict = {}
        for name, t in (tensors or {}).items():
            self[name] = t

    def __setitem__(self, name: str, t):
        if name in self._t:
            raise KeyError(f"duplicate parameter name {name!r}")
        if not isinstance(t, Tensor):
            t = Tensor(t)
        t.requires_grad = True
        t.name = name
        self._t[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name):
        return name in self._t

    def __len__(self):
        return len(self._t)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._t))

    def names(self):
        return list(self)

    def items(self):
        return [(n, self._t[n]) for n in self]

    def zero_grad(self):
        for t in self._t.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self._t.values())

    def copy(self) -> "Params":
        return Params({n: Tensor(t.data.copy()) for n, t in self.items()})

    def state(self) -> dict:
        return {n: t.data.copy() for n, t in self.items()}

    def astype(self, dtype) -> "Params":
        return Params({n: Tensor(t.data.astype(dtype)) for n, t in self.items()})


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class AdamState:
    lr: float = 0.01
    weight_decay: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None  # flat first moments, sorted-name order
    v: Optional[np.ndarray] = None


def adam_step(params: Params, state: AdamState, allow_missing: bool = False) -> Params:
    """One Adam update with bias correction and decoupled weight decay.

    The decay shrinks each weight by ``lr * weight_decay`` before the
    moment-based update. Gradients are cleared afterwards. With
    ``allow_missing`` a parameter the loss never reached is treated as
    having a zero gradient instead of raising ``MissingGradient``.
    Moments are kept as flat vectors over all parameters in sorted-name
    order.
    """
    items = params.items()
    grads = []
    for name, p in items:
        if p.grad is None:
            if not allow_missing:
                raise MissingGradient(f"parameter {name!r} has no gradient")
            grads.append(np.zeros(p.data.size, dtype=p.data.dtype))
        else:
            grads.append(p.grad.reshape(-1))
    g = np.concatenate(grads)
    if state.m is None:
        state.m = np.zeros_like(g)
        state.v = np.zeros_like(g)
    elif state.m.shape != g.shape:
        raise MissingGradient("parameter set changed between Adam steps")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    g *= g
    state.v *= b2
    state.v += (1.0 - b2) * g
    # lr * m_hat / (sqrt(v_hat) + eps), folded into two scalars
    update = np.sqrt(state.v, out=g)
    update *= 1.0 / np.sqrt(1.0 - b2**t)
    update += state.eps
    np.divide(state.m, update, out=update)
    update *= state.lr / (1.0 - b1**t)
    decay = 1.0 - state.lr * state.weight_decay
    offset = 0
    for _, p in items:
        size = p.data.size
        if decay != 1.0:
            p.data *= decay
        p.data -= update[offset : offset + size].reshape(p.data.shape)
        offset += size
        p.grad = None
    return params


# ------------------------------------------------------- finite differences


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tol: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def grad_check(f: Callable[[Params], Tensor], params: Params, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``f(params)`` with central differences.

    Relative error per entry is ``|a - n| / max(1, |a|, |n|)``; the report
    keeps the worst entry for each parameter.
    """
    params.zero_grad()
    backward(f(params))
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in params.items()}
    params.zero_grad()

    errors = {}
    for name, t in params.items():
        worst = 0.0
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(params).item()
            flat[i] = orig - h
            fm = f(params).item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            a = a_flat[i]
            err = abs(a - num) / max(1.0, abs(a), abs(num))
            worst = max(worst, err)
        errors[name] = worst
    params.zero_grad()
    return GradCheckReport(errors, tol)
