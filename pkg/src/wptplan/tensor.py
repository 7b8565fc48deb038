"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are double-precision numpy arrays. Every differentiable operation is a
method on a Tape, which records a backward closure per op; Tape.backward walks
the record in reverse and accumulates gradients into leaf tensors. A Tape is
single-threaded; independent tapes share parameters read-only.
"""
from __future__ import annotations

import base64
import json
import math

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the parent's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Ordered op record for one forward pass.

    With record=False the tape computes forward values only (inference mode).
    backward() may be called once per forward; gradients accumulate into the
    .grad field of leaf tensors, so callers can sum over several tapes.
    """

    def __init__(self, record: bool = True):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._record = record
        self._spent = False

    # ------------------------------------------------------------------
    # recording machinery
    # ------------------------------------------------------------------

    def _emit(self, out_data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
        needs = self._record and any(p.requires_grad for p in parents)
        out = Tensor(out_data, requires_grad=needs)
        if needs:
            self._ops.append((out, parents, backward))
        return out

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Propagate d(loss)/d(x) to every recorded leaf with requires_grad.

        Returns a map from leaf tensor to its accumulated gradient array.
        """
        if loss.data.size != 1:
            raise InvalidArgumentError(
                f"backward needs a scalar loss, got shape {loss.shape}"
            )
        if self._spent:
            raise InvalidStateError("backward already ran on this tape; rebuild the forward pass")
        self._spent = True
        if not loss.requires_grad:
            return {}

        produced = {id(out) for out, _, _ in self._ops}
        loss.grad = np.ones_like(loss.data)
        leaves: dict[Tensor, np.ndarray] = {}
        for out, parents, backward_fn in reversed(self._ops):
            grad_out = out.grad
            if grad_out is None:
                continue
            grads = backward_fn(grad_out)
            for parent, grad in zip(parents, grads):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += grad
                if id(parent) not in produced:
                    leaves[parent] = parent.grad
            out.grad = None
        return leaves

    # ------------------------------------------------------------------
    # primitives
    # ------------------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.ndim < 2 or b.ndim < 2:
            raise InvalidArgumentError(
                f"matmul needs 2-D or batched operands, got {a.shape} and {b.shape}"
            )
        if a.shape[-1] != b.shape[-2]:
            raise InvalidArgumentError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        out = np.matmul(a.data, b.data)
        a_data, b_data = a.data, b.data

        def backward(g):
            ga = _sum_to_shape(np.matmul(g, np.swapaxes(b_data, -1, -2)), a_data.shape)
            gb = _sum_to_shape(np.matmul(np.swapaxes(a_data, -1, -2), g), b_data.shape)
            return ga, gb

        return self._emit(out, (a, b), backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data + b.data
        except ValueError:
            raise InvalidArgumentError(f"add shape mismatch: {a.shape} vs {b.shape}") from None
        a_shape, b_shape = a.shape, b.shape

        def backward(g):
            return _sum_to_shape(g, a_shape), _sum_to_shape(g, b_shape)

        return self._emit(out, (a, b), backward)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data - b.data
        except ValueError:
            raise InvalidArgumentError(f"sub shape mismatch: {a.shape} vs {b.shape}") from None
        a_shape, b_shape = a.shape, b.shape

        def backward(g):
            return _sum_to_shape(g, a_shape), _sum_to_shape(-g, b_shape)

        return self._emit(out, (a, b), backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data * b.data
        except ValueError:
            raise InvalidArgumentError(f"mul shape mismatch: {a.shape} vs {b.shape}") from None
        a_data, b_data = a.data, b.data

        def backward(g):
            return (
                _sum_to_shape(g * b_data, a_data.shape),
                _sum_to_shape(g * a_data, b_data.shape),
            )

        return self._emit(out, (a, b), backward)

    def scale(self, a: Tensor, factor: float) -> Tensor:
        factor = float(factor)
        return self._emit(a.data * factor, (a,), lambda g: (g * factor,))

    def concat(self, parts: list[Tensor], axis: int = -1) -> Tensor:
        if not parts:
            raise InvalidArgumentError("concat needs at least one tensor")
        out = np.concatenate([p.data for p in parts], axis=axis)
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum(sizes)[:-1]

        def backward(g):
            return tuple(np.split(g, offsets, axis=axis))

        return self._emit(out, tuple(parts), backward)

    def relu(self, a: Tensor) -> Tensor:
        positive = a.data > 0.0
        return self._emit(a.data * positive, (a,), lambda g: (g * positive,))

    def tanh(self, a: Tensor) -> Tensor:
        out = np.tanh(a.data)

        def backward(g):
            return (g * (1.0 - out * out),)

        return self._emit(out, (a,), backward)

    def log(self, a: Tensor) -> Tensor:
        a_data = a.data
        return self._emit(np.log(a_data), (a,), lambda g: (g / a_data,))

    def softmax_with_mask(self, logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """Softmax over the last axis; masked entries get exactly zero probability.

        mask is a boolean array broadcastable to logits (True keeps an entry).
        Gradients flow only through unmasked entries.
        """
        x = logits.data
        if mask is None:
            shifted = x - x.max(axis=-1, keepdims=True)
        else:
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
            if not mask.any(axis=-1).all():
                raise InvalidStateError("softmax_with_mask: a row has every entry masked")
            shifted = np.where(mask, x, -np.inf)
            shifted -= shifted.max(axis=-1, keepdims=True)
        # masked entries carry -inf, so exp pins them to exactly zero; reuse
        # the buffer to keep large attention intermediates off the allocator
        exps = np.exp(shifted, out=shifted)
        probs = np.divide(exps, exps.sum(axis=-1, keepdims=True), out=exps)

        def backward(g):
            inner = (g * probs).sum(axis=-1, keepdims=True)
            return (probs * (g - inner),)

        return self._emit(probs, (logits,), backward)

    def layer_norm(self, x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
        """Per-row (last axis) normalization with learnable gain and bias."""
        data = x.data
        mean = data.mean(axis=-1, keepdims=True)
        centered = data - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        normed = centered * inv_std
        out = normed * gain.data + bias.data
        gain_data = gain.data

        def backward(g):
            g_gain = _sum_to_shape(g * normed, gain_data.shape)
            g_bias = _sum_to_shape(g, gain_data.shape)
            gh = g * gain_data
            gh_mean = gh.mean(axis=-1, keepdims=True)
            gh_dot = (gh * normed).mean(axis=-1, keepdims=True)
            gx = inv_std * (gh - gh_mean - normed * gh_dot)
            return gx, g_gain, g_bias

        return self._emit(out, (x, gain, bias), backward)

    def mean_rows(self, x: Tensor) -> Tensor:
        """Mean over axis 0, keeping a leading singleton row."""
        rows = x.data.shape[0]
        out = x.data.mean(axis=0, keepdims=True)

        def backward(g):
            return (np.broadcast_to(g / rows, x.data.shape).copy(),)

        return self._emit(out, (x,), backward)

    def gather_row(self, x: Tensor, index: int) -> Tensor:
        """Select row `index` of a 2-D tensor as a (1, D) tensor."""
        if x.ndim != 2:
            raise InvalidArgumentError(f"gather_row expects a 2-D tensor, got {x.shape}")
        index = int(index)
        out = x.data[index : index + 1, :].copy()
        shape = x.data.shape

        def backward(g):
            gx = np.zeros(shape)
            gx[index, :] = g[0, :]
            return (gx,)

        return self._emit(out, (x,), backward)

    def gather_rows(self, x: Tensor, indices: np.ndarray) -> Tensor:
        """Select rows of a 2-D tensor; duplicate indices accumulate gradient."""
        if x.ndim != 2:
            raise InvalidArgumentError(f"gather_rows expects a 2-D tensor, got {x.shape}")
        idx = np.asarray(indices, dtype=np.intp)
        out = x.data[idx, :].copy()
        shape = x.data.shape

        def backward(g):
            gx = np.zeros(shape)
            np.add.at(gx, idx, g)
            return (gx,)

        return self._emit(out, (x,), backward)

    def gather(self, x: Tensor, index: tuple[int, ...]) -> Tensor:
        """Select one element as a (1, 1) scalar tensor."""
        if len(index) != x.ndim:
            raise InvalidArgumentError(f"gather index {index} does not address shape {x.shape}")
        out = np.array([[float(x.data[index])]])
        shape = x.data.shape

        def backward(g):
            gx = np.zeros(shape)
            gx[index] = g[0, 0]
            return (gx,)

        return self._emit(out, (x,), backward)

    def reshape(self, x: Tensor, shape: tuple[int, ...]) -> Tensor:
        old = x.data.shape
        return self._emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))

    def transpose(self, x: Tensor, axes: tuple[int, ...]) -> Tensor:
        # a view, not a copy; matmul consumes strided operands natively
        inverse = tuple(np.argsort(axes))
        return self._emit(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))

    def sum_all(self, x: Tensor) -> Tensor:
        shape = x.data.shape
        out = np.array([[x.data.sum()]])

        def backward(g):
            return (np.full(shape, g[0, 0]),)

        return self._emit(out, (x,), backward)


# ----------------------------------------------------------------------
# parameter checkpoints
# ----------------------------------------------------------------------

CHECKPOINT_FORMAT = "wptplan-ckpt-v1"


def save_checkpoint(path: str, tensors: dict[str, Tensor], meta: dict | None = None) -> None:
    """Write named tensors to a JSON checkpoint with bit-exact values."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta or {},
        "tensors": {
            name: {
                "shape": list(t.data.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(t.data, dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for name, t in tensors.items()
        },
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back; values round-trip bit-exactly."""
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidArgumentError(
            f"unsupported checkpoint format: {payload.get('format')!r}"
        )
    tensors = {}
    for name, entry in payload["tensors"].items():
        flat = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8")
        tensors[name] = flat.reshape(entry["shape"]).astype(np.float64)
    return tensors, payload.get("meta", {})


def global_norm(tensors: list[Tensor]) -> float:
    """Euclidean norm over the concatenated gradients of the given tensors."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return math.sqrt(total)


def clip_gradients(tensors: list[Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most max_norm."""
    norm = global_norm(tensors)
    if norm > max_norm > 0.0:
        factor = max_norm / norm
        for t in tensors:
            if t.grad is not None:
                t.grad *= factor
    return norm
