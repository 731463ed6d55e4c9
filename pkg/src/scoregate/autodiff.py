"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Graphs are built define-by-run: constructing a node evaluates it immediately.
``backward`` fills ``grad`` on every node reachable from a scalar loss, and
``grad_check`` verifies analytic gradients against central finite differences
by re-evaluating the graph under perturbed leaf values.

Vectors are represented as 1xN row matrices. The only broadcasting supported
is a 1xN right operand of ``add``/``hadamard`` repeated across the rows of an
MxN left operand (bias rows, per-feature gates).
"""

from __future__ import annotations

import numpy as np

BCE_CLIP = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ValueError):
    """A forward evaluation produced NaN or Inf."""


def as_matrix(values) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"expected a non-empty 2-D array, got shape {arr.shape}")
    return arr


class Node:
    """One step of the computation: an op kind, parent nodes, and a value.

    ``grad`` is populated by ``backward`` and has the same shape as ``value``.
    ``aux`` carries op-specific constants (scale factor, loss target).
    """

    __slots__ = ("op", "parents", "value", "grad", "aux")

    def __init__(self, op: str, parents: tuple["Node", ...], value: np.ndarray, aux=None):
        self.op = op
        self.parents = parents
        self.value = value
        self.grad: np.ndarray | None = None
        self.aux = aux

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def _check_finite(op: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced a non-finite value")
    return value


def _broadcast_ok(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape or (b.shape == (1, a.shape[1]))


def leaf(values) -> Node:
    value = as_matrix(values)
    _check_finite("leaf", value)
    return Node("leaf", (), value)


def _stable_softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(op: str, parent_values: list[np.ndarray], aux) -> np.ndarray:
    if op == "matmul":
        a, b = parent_values
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
        return _check_finite(op, a @ b)
    if op == "add":
        a, b = parent_values
        if not _broadcast_ok(a, b):
            raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
        return _check_finite(op, a + b)
    if op == "hadamard":
        a, b = parent_values
        if not _broadcast_ok(a, b):
            raise ShapeError(f"hadamard shapes incompatible: {a.shape} * {b.shape}")
        return _check_finite(op, a * b)
    if op == "softmax_rows":
        return _check_finite(op, _stable_softmax_rows(parent_values[0]))
    if op == "sigmoid":
        return _check_finite(op, _stable_sigmoid(parent_values[0]))
    if op == "relu":
        return _check_finite(op, np.maximum(parent_values[0], 0.0))
    if op == "mean":
        return _check_finite(op, np.array([[parent_values[0].mean()]]))
    if op == "scale":
        return _check_finite(op, aux * parent_values[0])
    if op == "transpose":
        return parent_values[0].T.copy()
    if op == "bce_loss":
        p, t = parent_values
        if p.shape != t.shape:
            raise ShapeError(f"bce shapes differ: {p.shape} vs {t.shape}")
        pc = np.clip(p, BCE_CLIP, 1.0 - BCE_CLIP)
        v = -np.mean(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))
        return _check_finite(op, np.array([[v]]))
    if op == "mse_loss":
        p, t = parent_values
        if p.shape != t.shape:
            raise ShapeError(f"mse shapes differ: {p.shape} vs {t.shape}")
        return _check_finite(op, np.array([[np.mean((p - t) ** 2)]]))
    raise ValueError(f"unknown op kind: {op}")


def _unary(op: str, a: Node, aux=None) -> Node:
    return Node(op, (a,), _forward(op, [a.value], aux), aux)


def matmul(a: Node, b: Node) -> Node:
    return Node("matmul", (a, b), _forward("matmul", [a.value, b.value], None))


def add(a: Node, b: Node) -> Node:
    return Node("add", (a, b), _forward("add", [a.value, b.value], None))


def hadamard(a: Node, b: Node) -> Node:
    return Node("hadamard", (a, b), _forward("hadamard", [a.value, b.value], None))


def softmax_rows(a: Node) -> Node:
    return _unary("softmax_rows", a)


def sigmoid(a: Node) -> Node:
    return _unary("sigmoid", a)


def relu(a: Node) -> Node:
    return _unary("relu", a)


def mean(a: Node) -> Node:
    return _unary("mean", a)


def scale(a: Node, factor: float) -> Node:
    factor = float(factor)
    if not np.isfinite(factor):
        raise NumericError("scale factor must be finite")
    return _unary("scale", a, aux=factor)


def transpose(a: Node) -> Node:
    return _unary("transpose", a)


def bce_loss(pred: Node, target: Node) -> Node:
    """Mean binary cross-entropy; predictions clipped to [1e-12, 1 - 1e-12].

    Targets must be exactly 0 or 1. Gradient flows to both parents, but is
    zeroed where the clip is active.
    """
    if not np.all((target.value == 0.0) | (target.value == 1.0)):
        raise ValueError("bce targets must be 0 or 1")
    return Node("bce_loss", (pred, target), _forward("bce_loss", [pred.value, target.value], None))


def mse_loss(pred: Node, target: Node) -> Node:
    """Mean squared error over all entries."""
    return Node("mse_loss", (pred, target), _forward("mse_loss", [pred.value, target.value], None))


def topo_order(root: Node) -> list[Node]:
    """Topological order of the graph under ``root`` (leaves first)."""
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def recompute(root: Node) -> np.ndarray:
    """Re-run the forward pass from current leaf values; returns root value."""
    for node in topo_order(root):
        if node.op != "leaf":
            node.value = _forward(node.op, [p.value for p in node.parents], node.aux)
    return root.value


def _accumulate(node: Node) -> None:
    g = node.grad
    op = node.op
    if op == "matmul":
        a, b = node.parents
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g
    elif op in ("add", "hadamard"):
        a, b = node.parents
        if op == "add":
            ga, gb = g, g
        else:
            ga = g * b.value  # b broadcasts if 1xN
            gb = g * a.value
        a.grad += ga
        if b.value.shape == g.shape:
            b.grad += gb
        else:
            b.grad += gb.sum(axis=0, keepdims=True)
    elif op == "softmax_rows":
        (a,) = node.parents
        w = node.value
        a.grad += w * (g - (g * w).sum(axis=1, keepdims=True))
    elif op == "sigmoid":
        (a,) = node.parents
        a.grad += g * node.value * (1.0 - node.value)
    elif op == "relu":
        (a,) = node.parents
        a.grad += g * (a.value > 0.0)
    elif op == "mean":
        (a,) = node.parents
        a.grad += np.full(a.value.shape, g[0, 0] / a.value.size)
    elif op == "scale":
        (a,) = node.parents
        a.grad += node.aux * g
    elif op == "transpose":
        (a,) = node.parents
        a.grad += g.T
    elif op == "bce_loss":
        p, t = node.parents
        pc = np.clip(p.value, BCE_CLIP, 1.0 - BCE_CLIP)
        unclipped = p.value == pc
        n = p.value.size
        p.grad += g[0, 0] * unclipped * (-t.value / pc + (1.0 - t.value) / (1.0 - pc)) / n
        t.grad += g[0, 0] * (np.log(1.0 - pc) - np.log(pc)) / n
    elif op == "mse_loss":
        p, t = node.parents
        d = g[0, 0] * 2.0 * (p.value - t.value) / p.value.size
        p.grad += d
        t.grad += -d
    elif op != "leaf":
        raise ValueError(f"unknown op kind: {op}")


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Populate ``grad`` on every node reachable from a 1x1 loss.

    Grads are reset first, so repeated calls are idempotent. Returns a map
    from each reachable leaf to its gradient array.
    """
    if loss.value.shape != (1, 1):
        raise ValueError(f"backward requires a scalar (1x1) loss, got {loss.value.shape}")
    order = topo_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad[0, 0] = 1.0
    for node in reversed(order):
        _accumulate(node)
    return {n: n.grad for n in order if n.op == "leaf"}


def grad_check(loss: Node, target_leaf: Node, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per entry the error is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-12). A leaf the loss does not depend on yields 0. The leaf's values
    are restored (and the graph re-evaluated) before returning.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = backward(loss)
    analytic = grads.get(target_leaf)
    if analytic is None:
        analytic = np.zeros_like(target_leaf.value)
    else:
        analytic = analytic.copy()

    original = target_leaf.value.copy()
    worst = 0.0
    try:
        for i in range(original.shape[0]):
            for j in range(original.shape[1]):
                target_leaf.value[i, j] = original[i, j] + eps
                f_plus = recompute(loss)[0, 0]
                target_leaf.value[i, j] = original[i, j] - eps
                f_minus = recompute(loss)[0, 0]
                target_leaf.value[i, j] = original[i, j]
                numeric = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(analytic[i, j]), abs(numeric), 1e-12)
                worst = max(worst, abs(analytic[i, j] - numeric) / denom)
    finally:
        target_leaf.value = original
        recompute(loss)
    return worst
