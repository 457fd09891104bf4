"""Minimal dense tensors with reverse-mode automatic differentiation.

Every operation is a plain function returning a new :class:`Tensor` that
remembers its parents and a closure that pushes the output gradient back
into them.  :func:`backward` orders the recorded graph topologically (the
"tape") and runs those closures in reverse.

Arrays are numpy ``float64`` by default; :func:`set_default_dtype` switches
new tensors to ``float32`` for speed, but gradient checks assume 64 bits.
"""

from __future__ import annotations

import contextlib
import logging
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_DTYPE = np.float64
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""


class NumericError(ArithmeticError):
    """An operation received non-finite input."""


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A numpy array that can take part in gradient computation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op != "leaf" else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.data.dtype)))

    def __getitem__(self, index):
        return index_select(self, index)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=_DTYPE))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _check_finite(op: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError(f"{op}: non-finite input")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if g.ndim > len(shape):
        g = g.sum(axis=tuple(range(g.ndim - len(shape))))
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape == b.data.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy semantics for 2-D and batched 3-D operands."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if a.ndim > 2 and b.ndim == 2:
                # fold leading axes into one product instead of a batched one
                a2 = a.data.reshape(-1, a.shape[-1])
                _accumulate(b, a2.T @ g.reshape(-1, g.shape[-1]))
            else:
                _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    def backward(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.shape))
        else:
            _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.shape))

    return _result(np.asarray(x.data.sum(axis=axis)), (x,), backward, "sum")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None

    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(out, (x,), backward, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * ndim
                idx[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward, "concat")


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    """Inverse of :func:`concat`: cut ``x`` into consecutive pieces."""
    ax = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[ax]:
        raise ShapeError(f"split: sizes {list(sizes)} do not cover axis of length {x.shape[ax]}")
    out = []
    lo = 0
    for n in sizes:
        idx = [slice(None)] * x.ndim
        idx[ax] = slice(lo, lo + n)
        out.append(index_select(x, tuple(idx)))
        lo += n
    return out


def index_select(x: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing, e.g. ``x[t]`` or ``x[:, a:b]``."""
    out = x.data[index]

    def backward(g):
        # write into the parent's buffer directly; slicing per time step
        # would otherwise cost a full-size temporary each time
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[index] += g

    return _result(out, (x,), backward, "index")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: inputs have differing shapes {sorted(shapes)}")

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accumulate(t, np.take(g, i, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward, "stack")


def where(cond, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select; exact, so masked positions keep their bits."""
    cond = np.asarray(cond, dtype=bool)
    _broadcast_shape("where", a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.where(cond, 0.0, g), b.shape))

    return _result(np.where(cond, a.data, b.data), (a, b), backward, "where")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(x, np.transpose(g, inverse))

    return _result(np.transpose(x.data, axes), (x,), backward, "transpose")


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup: ``weight[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError("embedding: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(f"embedding: id out of range for table of {weight.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        _accumulate(weight, full)

    return _result(weight.data[ids], (weight,), backward, "embedding")


def gather_steps(x: Tensor, index) -> Tensor:
    """Per-column time gather on a time-major tensor.

    ``x`` is ``[T, B, D]`` and ``index`` is ``[S, B]``; the result ``[S, B, D]``
    holds ``x[index[s, b], b]``.
    """
    index = np.asarray(index)
    if x.ndim != 3 or index.ndim != 2 or index.shape[1] != x.shape[1]:
        raise ShapeError(f"gather_steps: x {x.shape} and index {index.shape} do not conform")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise IndexError("gather_steps: index out of range")
    cols = np.broadcast_to(np.arange(x.shape[1]), index.shape)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (index, cols), g)
        _accumulate(x, full)

    return _result(x.data[index, cols], (x,), backward, "gather_steps")


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x: Tensor) -> Tensor:
    _check_finite("sigmoid", x.data)
    # tanh form never overflows
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        _accumulate(x, g * out * (1.0 - out))

    return _result(out, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    _check_finite("tanh", x.data)
    out = np.tanh(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - out * out))

    return _result(out, (x,), backward, "tanh")


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; ``mask`` zeros out positions exactly.

    Rows with no unmasked position are rejected.
    """
    _check_finite("softmax", x.data)
    z = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != z.shape:
            raise ShapeError(f"softmax: mask {mask.shape} does not match input {z.shape}")
        if not mask.any(axis=-1).all():
            raise ValueError("softmax: a row has every position masked")
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accumulate(x, out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return _result(out, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    _check_finite("log_softmax", x.data)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        _accumulate(x, g - np.exp(out) * g.sum(axis=-1, keepdims=True))

    return _result(out, (x,), backward, "log_softmax")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: training with rate > 0 needs a generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def backward(g):
        _accumulate(x, g * keep)

    return _result(x.data * keep, (x,), backward, "dropout")


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Summed negative log-likelihood of integer ``targets`` under ``softmax(logits)``.

    ``logits`` is ``[..., V]``; ``targets`` and the optional 0/1 ``mask`` have
    the leading shape.  Masked entries contribute exactly zero.
    """
    _check_finite("cross_entropy", logits.data)
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy: targets {targets.shape} vs logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[-1]):
        raise IndexError("cross_entropy: target id out of range")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    w = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=logits.data.dtype)
    # where() keeps masked entries at exactly zero whatever the padded content
    loss = -np.where(w > 0, picked * w, 0.0).sum()

    def backward(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], -1) - 1.0, -1)
        _accumulate(logits, g * grad * w[..., None])

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward, "cross_entropy")


def gru_cell(h: Tensor, xg: Tensor, xc: Tensor, U_g: Tensor, U_c: Tensor, keep=None) -> Tensor:
    """Fused GRU update as a single tape entry.

    ``xg``/``xc`` are the input projections (bias included) for the gates
    and the candidate.  With a boolean ``keep`` column ``[B, 1]`` rows where
    it is false return ``h`` unchanged.
    """
    n = U_c.shape[0]
    if h.shape[-1] != n or xg.shape[-1] != 2 * n or xc.shape[-1] != n or U_g.shape != (n, 2 * n):
        raise ShapeError(
            f"gru_cell: h {h.shape}, xg {xg.shape}, xc {xc.shape}, U_g {U_g.shape}, U_c {U_c.shape}"
        )
    hd = h.data
    gates = 0.5 * (1.0 + np.tanh(0.5 * (xg.data + hd @ U_g.data)))
    z, r = gates[:, :n], gates[:, n:]
    rh = r * hd
    cand = np.tanh(xc.data + rh @ U_c.data)
    out = hd + z * (cand - hd)
    if keep is not None:
        keep = np.asarray(keep, dtype=bool)
        out = np.where(keep, out, hd)

    def backward(g):
        g_cell = g if keep is None else np.where(keep, g, 0.0)
        da_c = g_cell * z * (1.0 - cand * cand)
        drh = da_c @ U_c.data.T
        da_g = np.concatenate([g_cell * (cand - hd), drh * hd], axis=1) * gates * (1.0 - gates)
        if h.requires_grad:
            dh = g_cell * (1.0 - z) + drh * r + da_g @ U_g.data.T
            if keep is not None:
                dh += np.where(keep, 0.0, g)
            _accumulate(h, dh)
        _accumulate(xg, _unbroadcast(da_g, xg.shape))
        _accumulate(xc, _unbroadcast(da_c, xc.shape))
        if U_g.requires_grad:
            _accumulate(U_g, hd.T @ da_g)
        if U_c.requires_grad:
            _accumulate(U_c, rh.T @ da_c)

    return _result(out, (h, xg, xc, U_g, U_c), backward, "gru_cell")


# ---------------------------------------------------------------------------
# reverse pass


def tape(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from ``root`` in topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaves listed in ``params`` that the loss never touched end up with a
    zero gradient instead of ``None``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if params is not None:
        for p in params:
            if p.grad is None:
                p.zero_grad()
    if not loss.requires_grad:
        return
    order = tape(loss)
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None:
            continue
        g = node.grad
        # interior nodes hold their gradient only until it is propagated
        node.grad = None
        if g is not None:
            node._backward(g)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-4,
    samples: int | None = 30,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` must rebuild the graph deterministically on every call.  Up to
    ``samples`` coordinates per parameter are probed (all when ``None``).
    The gap is ``|a - n| / max(1, |a| + |n|)``.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("grad_check: epsilon must lie in [1e-6, 1e-3]")
    rng = rng if rng is not None else np.random.default_rng(0)
    zero_grad(params)
    backward(f())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if samples is not None and flat.size > samples:
                coords = rng.choice(flat.size, size=samples, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + epsilon
                up = f().item()
                flat[i] = orig - epsilon
                down = f().item()
                flat[i] = orig
                num = (up - down) / (2 * epsilon)
                ana = a.reshape(-1)[i]
                worst = max(worst, abs(ana - num) / max(1.0, abs(ana) + abs(num)))
    return worst
