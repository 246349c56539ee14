"""Minimal reverse-mode differentiation over dense numpy matrices.

Operations executed inside an active :class:`GradTape` are recorded in order;
:meth:`GradTape.gradient` replays them in exact reverse order.  Outside a tape
the same functions run as plain forward numpy code.

Example::

    W = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    with GradTape() as tape:
        loss = dm.sum(dm.elu(dm.matmul(X, W)))
    (gW,) = tape.gradient(loss, [W])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

COSINE_EPS = 1e-12

_TAPES: list["GradTape"] = []


class Tensor:
    """A dense array that can take part in recorded computations."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


@dataclass
class _Record:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


class GradTape:
    """Records differentiable operations for one backward pass."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "GradTape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    @property
    def ops(self) -> list[str]:
        return [r.op for r in self.records]

    def gradient(self, target: Tensor, sources: Sequence[Tensor], seed=None) -> list[np.ndarray]:
        """Gradients of ``target`` with respect to each source.

        ``seed`` defaults to ones (so a scalar target gives d target / d source).
        Sources that do not influence the target get zero arrays.
        """
        grads: dict[int, np.ndarray] = {}
        if seed is None:
            seed = np.ones_like(target.data)
        grads[id(target)] = np.asarray(seed, dtype=target.dtype)
        for rec in reversed(self.records):
            g = grads.get(id(rec.out))
            if g is None:
                continue
            parent_grads = rec.backward(g)
            for parent, pg in zip(rec.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        out = []
        for s in sources:
            g = grads.get(id(s))
            out.append(np.zeros_like(s.data) if g is None else g.reshape(s.shape))
        return out


def _active_tape() -> GradTape | None:
    return _TAPES[-1] if _TAPES else None


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite value produced by {op}")
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.records.append(_Record(out, parents, backward, op))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# --- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return _make(out, (a, b), backward, "div")


def scale(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    return _make(x.data * c, (x,), lambda g: (g * c,), "scale")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a bias row vector to every row of ``x``."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.data.size != x.shape[1]:
        raise ValueError(f"bias of size {bias.data.size} does not match {x.shape[1]} columns")
    b = bias.data.reshape(1, -1)
    return _make(
        x.data + b,
        (x, bias),
        lambda g: (g, g.sum(axis=0).reshape(bias.shape)),
        "add_bias",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T if a.requires_grad else None, a.data.T @ g if b.requires_grad else None),
        "matmul",
    )


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _make(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,), "transpose")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise FloatingPointError("log of a non-positive value")
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def log_sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = -np.logaddexp(0.0, -x.data)
    sig = np.exp(out)
    return _make(out.astype(x.dtype), (x,), lambda g: (g * (1.0 - sig),), "log_sigmoid")


# --- nonlinearities -----------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,), "relu")


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    factor = np.where(pos, 1.0, negative_slope).astype(x.dtype)
    return _make(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """PReLU with a learnable slope (scalar or one per column)."""
    x, slope = as_tensor(x), as_tensor(slope)
    a = slope.data.reshape(1, -1) if slope.data.size > 1 else slope.data.reshape(())
    pos = x.data > 0
    out = np.where(pos, x.data, a * x.data)

    def backward(g):
        gx = np.where(pos, g, a * g)
        gs = np.where(pos, 0.0, g * x.data)
        gs = gs.sum(axis=0) if slope.data.size > 1 else gs.sum()
        return gx, np.asarray(gs, dtype=slope.dtype).reshape(slope.shape)

    return _make(out.astype(x.dtype), (x, slope), backward, "prelu")


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    em1 = np.expm1(np.minimum(x.data, 0))
    out = np.where(pos, x.data, alpha * em1)
    dydx = np.where(pos, 1.0, alpha * (em1 + 1.0)).astype(x.dtype)
    return _make(out.astype(x.dtype), (x,), lambda g: (g * dydx,), "elu")


# --- reductions and row operations -------------------------------------------


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=axis is not None)
    if axis is None:
        return _make(np.asarray(out), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")
    return _make(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / n)


def l2_normalize_rows(x: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """Divide each row by ``max(norm, eps)``; all-zero rows stay zero."""
    x = as_tensor(x)
    r = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    small = r <= eps
    norm = np.where(small, eps, r)
    y = x.data / norm

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (np.where(small, g / eps, (g - y * dot) / norm),)

    return _make(y, (x,), backward, "l2_normalize_rows")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_cols needs at least one matrix")
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward, "concat_cols")


def select_rows(x: Tensor, index) -> Tensor:
    """Gather rows ``x[index]`` (indices may repeat)."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def backward(g):
        if g.ndim == 1 or g.shape[1] == 1:
            flat = g.reshape(len(index), -1)
            out = np.stack(
                [np.bincount(index, weights=flat[:, c], minlength=n) for c in range(flat.shape[1])],
                axis=1,
            )
            return (out.astype(g.dtype).reshape((n,) + x.shape[1:]),)
        scatter = sp.csr_matrix(
            (np.ones(len(index), dtype=g.dtype), (index, np.arange(len(index)))), shape=(n, len(index))
        )
        return (np.asarray(scatter @ g),)

    return _make(x.data[index], (x,), backward, "select_rows")


def mask_rows(x: Tensor, keep) -> Tensor:
    """Zero every row whose ``keep`` flag is false; kept rows pass through unchanged."""
    x = as_tensor(x)
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (x.shape[0],):
        raise ValueError("row mask length does not match row count")
    out = np.where(keep[:, None], x.data, 0).astype(x.dtype)
    return _make(out, (x,), lambda g: (np.where(keep[:, None], g, 0).astype(g.dtype),), "mask_rows")


def diagonal(m: Tensor) -> Tensor:
    """Main diagonal of a square matrix as an n x 1 column."""
    m = as_tensor(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("diagonal needs a square matrix")

    def backward(g):
        out = np.zeros_like(m.data)
        out[np.arange(n), np.arange(n)] = g.ravel()
        return (out,)

    return _make(np.diagonal(m.data).reshape(n, 1).copy(), (m,), backward, "diagonal")


def logsumexp_rows(m: Tensor, mask=None) -> Tensor:
    """Row-wise ``log(sum_j exp(m_ij))`` with max-shift stabilization.

    ``mask`` (boolean, same shape) restricts each row's sum to the True
    entries; every row must keep at least one entry.
    """
    m = as_tensor(m)
    data = m.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise ValueError("mask shape does not match matrix")
        if not mask.any(axis=1).all():
            raise ValueError("every row needs at least one unmasked entry")
        data = np.where(mask, data, -np.inf)
    rowmax = data.max(axis=1, keepdims=True)
    shifted = np.exp(data - rowmax)
    total = shifted.sum(axis=1, keepdims=True)
    out = rowmax + np.log(total)
    weights = shifted / total

    return _make(out.astype(m.dtype), (m,), lambda g: ((g * weights).astype(m.dtype),), "logsumexp_rows")


def cosine_matrix(p: Tensor, q: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """Pairwise cosine similarities between the rows of ``p`` and ``q``."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape[1] != q.shape[1]:
        raise ValueError(f"cosine_matrix dimension mismatch: {p.shape[1]} vs {q.shape[1]}")
    if p is q:
        return gram(l2_normalize_rows(p, eps))
    return matmul(l2_normalize_rows(p, eps), transpose(l2_normalize_rows(q, eps)))


def gram(x: Tensor) -> Tensor:
    """``x @ x.T``; the backward pass needs a single product."""
    x = as_tensor(x)
    return _make(x.data @ x.data.T, (x,), lambda g: ((g + g.T) @ x.data,), "gram")


def contrastive_log_ratio(cross: Tensor, intra, columns: bool = False) -> Tensor:
    """Per-row ``cross_ii - log(sum_j exp(cross_ij) + sum_{j != i} exp(intra_ij))``.

    With ``columns=True`` the roles of rows and columns of ``cross`` are
    swapped (the same as passing ``cross.T``).  ``intra`` is square; a plain
    array is treated as a constant.
    """
    cross, intra = as_tensor(cross), as_tensor(intra)
    c = cross.data.T if columns else cross.data
    n = c.shape[0]
    if c.shape != (n, n) or intra.shape != (n, n):
        raise ValueError("contrastive_log_ratio needs two square matrices of equal size")
    diag = np.arange(n)
    rowmax = np.maximum(c.max(axis=1, keepdims=True), intra.data.max(axis=1, keepdims=True))
    ec = np.exp(c - rowmax)
    ei = np.exp(intra.data - rowmax)
    ei[diag, diag] = 0.0
    total = ec.sum(axis=1, keepdims=True) + ei.sum(axis=1, keepdims=True)
    # the numerator is one of the denominator terms, so the exact value is <= 0;
    # the clamp only removes rounding residue of order 1e-16
    out = np.minimum(c[diag, diag].reshape(n, 1) - rowmax - np.log(total), 0.0)

    def backward(g):
        scale_rows = g / total
        gc = -ec * scale_rows
        gc[diag, diag] += g.ravel()
        gi = -ei * scale_rows if intra.requires_grad else None
        return (gc.T if columns else gc, gi)

    return _make(out.astype(cross.dtype), (cross, intra), backward, "contrastive_log_ratio")


# --- graph primitives -------------------------------------------------------


def segment_sum(x: Tensor, segment, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets given by ``segment``."""
    x = as_tensor(x)
    segment = np.asarray(segment, dtype=np.int64)
    flat = x.data.reshape(len(segment), -1)
    out = np.stack(
        [np.bincount(segment, weights=flat[:, c], minlength=num_segments) for c in range(flat.shape[1])],
        axis=1,
    ).astype(x.dtype)
    return _make(out, (x,), lambda g: (g[segment].reshape(x.shape),), "segment_sum")


def edge_aggregate(weights: Tensor, h: Tensor, dst, src, num_nodes: int) -> Tensor:
    """``out[i] = sum over edges e with dst[e] == i of weights[e] * h[src[e]]``.

    ``weights`` is an E x 1 column.  Edges must be unique (dst, src) pairs.
    """
    weights, h = as_tensor(weights), as_tensor(h)
    dst = np.asarray(dst, dtype=np.int64)
    src = np.asarray(src, dtype=np.int64)
    w = weights.data.ravel()
    adj = sp.csr_matrix((w, (dst, src)), shape=(num_nodes, h.shape[0]))
    out = np.asarray(adj @ h.data)

    def backward(g):
        gh = np.asarray(adj.T @ g) if h.requires_grad else None
        gw = None
        if weights.requires_grad:
            gw = np.einsum("ij,ij->i", g[dst], h.data[src]).reshape(weights.shape)
        return gw, gh

    return _make(out, (weights, h), backward, "edge_aggregate")


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Multiply a constant sparse matrix by a dense tensor."""
    x = as_tensor(x)
    matrix = sp.csr_matrix(matrix, dtype=x.dtype)
    return _make(np.asarray(matrix @ x.data), (x,), lambda g: (np.asarray(matrix.T @ g),), "spmm")


# --- forward-only linear algebra ----------------------------------------------


def svd_topk(m, k: int):
    """Top-``k`` singular triplets ``(U, s, V)`` with ``m ~= U @ diag(s) @ V.T``.

    Signs are fixed so that the largest-magnitude entry of each column of
    ``V`` is positive.
    """
    m = np.asarray(m.data if isinstance(m, Tensor) else m, dtype=np.float64)
    n, d = m.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} outside [1, {min(n, d)}]")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge: {exc}") from exc
    u, s, v = u[:, :k], s[:k], vt[:k].T
    pivot = np.abs(v).argmax(axis=0)
    signs = np.sign(v[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    return u * signs, s, v * signs


# --- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], tolerance: float = 1e-4, h: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` with central differences.

    The error for each parameter is ``max|analytic - numeric|`` divided by
    ``max(max|numeric|, max|analytic|, floor)``.  The floor is the rounding
    resolution of the difference quotient, ``4 * eps * max(1, |f|) / h``,
    divided by ``tolerance``: a gradient that is zero up to round-off can
    only be checked in absolute terms.
    """
    with GradTape() as tape:
        out = f()
    value = float(np.asarray(out.data).sum())
    if not np.isfinite(value):
        raise FloatingPointError("non-finite value at the base point")
    analytic = tape.gradient(out, list(params))
    resolution = 4 * np.finfo(np.float64).eps * max(1.0, abs(value)) / h
    floor = max(resolution / tolerance, 1e-8)
    errors = []
    for p, ga in zip(params, analytic):
        numeric = np.zeros_like(p.data, dtype=np.float64)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(np.asarray(f().data).sum())
            flat[i] = orig - h
            fm = float(np.asarray(f().data).sum())
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite value probing {p.name or 'parameter'}[{i}]")
            numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
        scale_ = max(np.abs(numeric).max(initial=0.0), np.abs(ga).max(initial=0.0), floor)
        errors.append(float(np.abs(ga - numeric).max(initial=0.0) / scale_))
    return GradCheckReport(max(errors, default=0.0), errors, tolerance)
