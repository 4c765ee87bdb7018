"""Reverse-mode autodiff tensor on top of numpy.

A Tensor wraps a numpy array. Differentiable operations (see ops.py) record
a node per result: the parent tensors plus a backward closure mapping the
output gradient to per-parent gradients. backward() replays those closures
in reverse topological order and returns the gradients of all reachable
leaf tensors (parameters).

Values are checked finite after every forward op; NaN/Inf raises instead of
propagating. Default element type is float32; gradient-check suites switch
to float64 via use_dtype().
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, NumericError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextmanager
def use_dtype(dtype):
    """Set the element type for tensors created inside the block."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / perturbed replays)."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


class Tensor:
    """Immutable-by-convention numpy array with an optional tape node."""

    __slots__ = ("data", "requires_grad", "_op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _op=None, _parents=(), _backward=None):
        self.data = data
        self.requires_grad = requires_grad
        self._op = _op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad}, op={self._op})"

    # operator sugar delegates to ops (imported lazily to avoid a cycle)

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, axes):
        from . import ops
        return ops.transpose(self, axes)


class Parameter(Tensor):
    """A leaf tensor that always requires gradients (model weight)."""

    def __init__(self, data):
        data = np.ascontiguousarray(data)
        super().__init__(data, requires_grad=True)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    """Wrap data as a constant (or leaf) Tensor.

    Floating-point input is cast to the active default dtype unless an
    explicit dtype is given; integer input (token ids) is kept as-is.
    """
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype)
    elif arr.dtype.kind == "f":
        arr = arr.astype(_DEFAULT_DTYPE)
    return Tensor(arr, requires_grad=requires_grad)


def as_tensor(x, like: np.dtype | None = None) -> Tensor:
    """Coerce scalars/arrays to Tensor; scalars follow `like`'s dtype."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if arr.dtype.kind == "f":
        arr = arr.astype(like if like is not None else _DEFAULT_DTYPE)
    return Tensor(arr)


def check_finite(kind: str, out: np.ndarray) -> None:
    if out.dtype.kind == "f" and not np.isfinite(out).all():
        raise NumericError(f"op '{kind}' produced non-finite values")


def make_result(data, kind, parents, backward) -> Tensor:
    """Assemble an op result, recording a tape node when gradients are live."""
    check_finite(kind, data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _op=kind, _parents=tuple(parents),
                      _backward=backward)
    return Tensor(data, _op=kind)


class Grads:
    """Gradients returned by backward(), keyed by parameter identity.

    A missing entry means the parameter was unreachable from the loss,
    i.e. its gradient is exactly zero.
    """

    def __init__(self, table):
        self._table = table  # id(tensor) -> (tensor, grad array)

    def get(self, param: Tensor):
        entry = self._table.get(id(param))
        return entry[1] if entry is not None else None

    def items(self):
        return [(t, g) for t, g in self._table.values()]

    def __len__(self):
        return len(self._table)

    def global_norm(self) -> float:
        total = 0.0
        for _, g in self._table.values():
            total += float(np.sum(g.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def scale(self, factor: float) -> None:
        for _, g in self._table.values():
            g *= g.dtype.type(factor)


def backward(loss: Tensor) -> Grads:
    """Reverse-mode sweep from a scalar loss.

    Returns gradients for every reachable leaf tensor with requires_grad.
    Accumulation is the sum over all paths; each tape node's closure runs
    exactly once.
    """
    if loss.shape != ():
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad")

    # iterative postorder: parents precede children in `topo`
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    owned: set[int] = {id(next(iter(grads.values())))}
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        owned.discard(id(g))
        if node._backward is None:
            leaves[id(node)] = (node, g)
            owned.add(id(g))
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            # one closure may hand the same array to several parents; keep
            # every stored gradient a distinct, writable object
            if id(pg) in owned or not pg.flags.writeable:
                pg = pg.copy()
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = pg
                owned.add(id(pg))
            else:
                owned.discard(id(acc))
                merged = acc + pg
                grads[id(parent)] = merged
                owned.add(id(merged))
    return Grads(leaves)
