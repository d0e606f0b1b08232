"""Dense float64 tensors with reverse-mode differentiation.

The design is deliberately small: a ``Tensor`` wraps a numpy array and, when
gradients are enabled, remembers its parents plus a closure that maps the
output adjoint to parent adjoint contributions. ``backward`` materializes the
tape (the graph in topological order) and accumulates adjoints in a dict keyed
by tensor identity, visiting each recorded operation exactly once in reverse
order. Leaf tensors created with ``requires_grad=True`` receive the summed
adjoint in ``.grad``.

Everything is float64: the package's value is verifiability, and the
finite-difference checks at the bottom of this file need the precision.
Tensors are treated as immutable after construction; only the optimizer
replaces parameter buffers, and only between forward passes.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    NumericError,
    ParameterError,
    ShapeError,
)

# Backward closures yield (parent, adjoint contribution) pairs.
BackwardRule = Callable[[np.ndarray], Iterable[tuple["Tensor", np.ndarray]]]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / benchmarking)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_nan(data: np.ndarray, op: str) -> None:
    # NaN is always a bug; +-inf is permitted so callers can mask in log-space.
    if np.isnan(data).any():
        raise NumericError(f"NaN produced by op '{op}'")


class Tensor:
    """A dense float64 array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_nan(arr, "leaf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: BackwardRule | None = None
        self._op = "leaf"

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(
        data: np.ndarray,
        parents: tuple["Tensor", ...],
        bwd: BackwardRule,
        op: str,
    ) -> "Tensor":
        _check_nan(data, op)
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = needs
        out.grad = None
        out._parents = parents if needs else ()
        out._bwd = bwd if needs else None
        out._op = op
        return out

    # -- basic introspection --------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """The underlying array. Callers must not mutate it."""
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other)
        data = self.data + other.data

        def bwd(g):
            return (
                (self, _unbroadcast(g, self.data.shape)),
                (other, _unbroadcast(g, other.data.shape)),
            )

        return Tensor._from_op(data, (self, other), bwd, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: ((self, -g),), "neg")

    def __sub__(self, other) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _as_tensor(other)
        data = self.data * other.data

        def bwd(g):
            return (
                (self, _unbroadcast(g * other.data, self.data.shape)),
                (other, _unbroadcast(g * self.data, other.data.shape)),
            )

        return Tensor._from_op(data, (self, other), bwd, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _as_tensor(other)
        data = self.data / other.data

        def bwd(g):
            return (
                (self, _unbroadcast(g / other.data, self.data.shape)),
                (other, _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)),
            )

        return Tensor._from_op(data, (self, other), bwd, "div")

    def pow(self, exponent: float) -> "Tensor":
        """Elementwise power with a constant exponent."""
        p = float(exponent)
        data = self.data ** p

        def bwd(g):
            return ((self, g * p * self.data ** (p - 1.0)),)

        return Tensor._from_op(data, (self,), bwd, "pow")

    def exp(self) -> "Tensor":
        data = np.exp(self.data)
        return Tensor._from_op(data, (self,), lambda g: ((self, g * data),), "exp")

    def log(self) -> "Tensor":
        data = np.log(self.data)
        return Tensor._from_op(data, (self,), lambda g: ((self, g / self.data),), "log")

    def relu(self) -> "Tensor":
        data = np.maximum(self.data, 0.0)
        mask = (self.data > 0.0).astype(np.float64)
        return Tensor._from_op(data, (self,), lambda g: ((self, g * mask),), "relu")

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)
        return Tensor._from_op(data, (self,), lambda g: ((self, g.reshape(old)),), "reshape")

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = tuple(np.argsort(axes))
        data = self.data.transpose(axes)
        return Tensor._from_op(data, (self,), lambda g: ((self, g.transpose(inv)),), "transpose")

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, key) -> "Tensor":
        # Basic indexing only (ints / slices): the reverse scatter then has no
        # duplicate targets and plain += is correct.
        data = self.data[key]

        def bwd(g):
            full = np.zeros_like(self.data)
            full[key] = g
            return ((self, full),)

        return Tensor._from_op(data, (self,), bwd, "getitem")

    def diagonal(self) -> "Tensor":
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ShapeError(f"diagonal() needs a square matrix, got {self.shape}")
        n = self.data.shape[0]
        data = self.data.diagonal().copy()

        def bwd(g):
            full = np.zeros_like(self.data)
            full[np.arange(n), np.arange(n)] = g
            return ((self, full),)

        return Tensor._from_op(data, (self,), bwd, "diagonal")

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            return ((self, _expand_reduced(g, self.data.shape, axis, keepdims)),)

        return Tensor._from_op(data, (self,), bwd, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in _normalize_axes(axis, self.data.ndim)]
        )
        data = self.data.mean(axis=axis, keepdims=keepdims)

        def bwd(g):
            return ((self, _expand_reduced(g, self.data.shape, axis, keepdims) / count),)

        return Tensor._from_op(data, (self,), bwd, "mean")

    # -- linear algebra -------------------------------------------------------

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- autodiff entry point -------------------------------------------------

    def backward(self) -> None:
        backward(self)

    def zero_grad(self) -> None:
        self.grad = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduced gradient back to the pre-reduction shape."""
    if axis is not None and not keepdims:
        for a in sorted(_normalize_axes(axis, len(shape))):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape).copy()


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, stacked over leading batch dimensions.

    Inner dimensions must agree; a mismatch raises ``ShapeError`` naming both
    shapes. Gradients flow to both operands.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (
            (a, _unbroadcast(ga, a.data.shape)),
            (b, _unbroadcast(gb, b.data.shape)),
        )

    return Tensor._from_op(data, (a, b), bwd, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; backward splits the adjoint."""
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        pieces = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            pieces.append((t, g[tuple(idx)]))
        return pieces

    return Tensor._from_op(data, tuple(tensors), bwd, "concat")


def softmax_rows(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax along the last axis with a temperature divisor.

    Row maxima are subtracted before exponentiation; this is mandatory for
    the temperatures this package runs at (logits reach +-100 at tau=0.01).
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    x = _as_tensor(x)
    z = x.data / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        return ((x, data * (g - inner) / temperature),)

    return Tensor._from_op(data, (x,), bwd, "softmax_rows")


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """log(sum(exp(x))) along ``axis``, computed with max subtraction.

    Entries equal to -inf contribute nothing, which is how loss code masks
    candidates out of a softmax denominator.
    """
    x = _as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # all -inf rows would otherwise yield nan
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = (np.log(s) + m).squeeze(axis=axis)

    def bwd(g):
        soft = e / s
        return ((x, np.expand_dims(g, axis) * soft),)

    return Tensor._from_op(data, (x,), bwd, "logsumexp")


NORM_EPS = 1e-12


def l2_normalize(v: Tensor) -> Tensor:
    """Scale vectors to unit L2 norm along the last axis.

    Rejects near-zero inputs (norm <= 1e-12) instead of dividing by ~0.
    Accepts a single vector or a batch of row vectors.
    """
    v = _as_tensor(v)
    norms = np.sqrt((v.data * v.data).sum(axis=-1, keepdims=True))
    if (norms <= NORM_EPS).any():
        raise DegenerateInputError("cannot normalize a (near-)zero vector")
    sq = (v * v).sum(axis=-1, keepdims=True)
    return v * sq.pow(-0.5)


def masked_mean(x: Tensor, mask) -> Tensor:
    """Mean over rows where ``mask`` is 1; padded rows are excluded.

    ``x`` is [L, d] with mask [L], or batched [B, L, d] with mask [B, L].
    The mask is data, not a differentiable input. An all-zero mask is an
    error: there is nothing to average.
    """
    x = _as_tensor(x)
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
    if m.shape != x.shape[:-1]:
        raise ShapeError(f"mask shape {m.shape} does not match rows of {x.shape}")
    counts = m.sum(axis=-1)
    if (counts <= 0).any():
        raise DegenerateInputError("masked_mean over an all-zero mask")
    weights = Tensor((m / counts[..., None])[..., None])
    return (x * weights).sum(axis=-2)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer id; backward scatter-adds."""
    ids = np.asarray(ids)
    data = table.data[ids]

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return ((table, full),)

    return Tensor._from_op(data, (table,), bwd, "embedding_lookup")


# ---------------------------------------------------------------------------
# Backward engine
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Builds the tape (recorded operations in topological order), seeds the
    loss adjoint with 1, and walks the tape once in reverse, accumulating
    adjoints per tensor identity. Leaves with ``requires_grad`` get the
    result added into ``.grad``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    tape: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            tape.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._bwd is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, contrib in node._bwd(g):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + contrib
            else:
                adjoint[key] = contrib


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    sample: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a zero-argument closure over ``params`` returning a scalar
    Tensor. For each checked coordinate the relative error is
    ``|analytic - central| / max(1, |analytic|)``; the max over coordinates
    is returned. ``sample`` limits the check to that many deterministically
    chosen coordinates per parameter (all coordinates when None), which keeps
    whole-model checks affordable while still touching every parameter.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ParameterError(f"step h must lie in [1e-7, 1e-3], got {h}")

    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = []
    for p in params:
        if p.grad is None:
            analytic.append(np.zeros_like(p.data))
        else:
            analytic.append(p.grad.copy())

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is None or sample >= n:
            coords = range(n)
        else:
            coords = rng.choice(n, size=sample, replace=False)
        a_flat = a.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            with no_grad():
                up = f().item()
            flat[c] = orig - h
            with no_grad():
                down = f().item()
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("objective is non-finite at a perturbed point")
            central = (up - down) / (2.0 * h)
            err = abs(a_flat[c] - central) / max(1.0, abs(a_flat[c]))
            if err > worst:
                worst = err
    return float(worst)
