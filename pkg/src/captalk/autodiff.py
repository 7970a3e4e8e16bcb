"""Dense-tensor reverse-mode automatic differentiation on float64 numpy arrays.

Every operation records its inputs and a backward closure on the output
tensor. Calling :func:`backward` on a scalar output walks the recorded graph
in reverse creation order (which is a valid reverse topological order) and
accumulates gradients into ``.grad`` of every reachable tensor. Repeated
backward calls without resetting gradients accumulate additively.

All values are float64 and checked for NaN/Inf as they are produced.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .errors import DomainError, NumericError, ShapeError

_ids = itertools.count()

# Additive attention-mask value. exp(x - rowmax) underflows to exactly 0.0
# for masked entries, which is what makes block-causality bit-exact.
MASK_NEG = -1.0e30


def _require_finite(arr: np.ndarray, ctx: str) -> None:
    # One-pass probe: NaN/Inf poison the sum. Cheaper than isfinite().all().
    with np.errstate(over="ignore", invalid="ignore"):
        total = arr.sum()
    if not np.isfinite(total):
        raise NumericError(f"non-finite values produced by {ctx}")


class Tensor:
    """A float64 array plus gradient and provenance for reverse-mode AD."""

    __slots__ = ("values", "grad", "_parents", "_backward", "_id")

    def __init__(self, values, parents=(), backward=None, *, _check=True):
        arr = np.asarray(values, dtype=np.float64)
        if _check:
            _require_finite(arr, "tensor construction")
        self.values = arr
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward
        self._id = next(_ids)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        return self.grad

    def __repr__(self):
        return f"Tensor(shape={self.shape}, id={self._id})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, parents, backward, ctx: str) -> Tensor:
    _require_finite(values, ctx)
    return Tensor(values, parents, backward, _check=False)


def backward(scalar_output: Tensor) -> None:
    """Accumulate d(output)/d(node) into ``.grad`` of every reachable node."""
    if scalar_output.values.size != 1:
        raise ShapeError(
            f"backward requires a scalar output, got shape {scalar_output.shape}"
        )
    # Reachable ancestors, found without recursion.
    reachable = {scalar_output._id: scalar_output}
    stack = [scalar_output]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p._id not in reachable:
                reachable[p._id] = p
                stack.append(p)

    # Creation ids are a topological order: an op's output id exceeds all of
    # its input ids, so descending id is a valid reverse traversal.
    flow: dict[int, np.ndarray] = {
        scalar_output._id: np.ones_like(scalar_output.values)
    }
    for nid in sorted(reachable, reverse=True):
        node = reachable[nid]
        gout = flow.pop(nid, None)
        if gout is None:
            # Reachable but received no contribution (e.g. the target side of
            # pass_through): its gradient is zero, and so are its ancestors'.
            gout = np.zeros_like(node.values)
        _require_finite(gout, "gradient")
        node.ensure_grad()
        node.grad = node.grad + gout
        if node._backward is None:
            continue
        for parent, g in zip(node._parents, node._backward(gout)):
            if g is None:
                continue
            if g.shape != parent.values.shape:
                raise ShapeError(
                    f"backward produced gradient of shape {g.shape} for parent "
                    f"of shape {parent.values.shape}"
                )
            if parent._id in flow:
                flow[parent._id] = flow[parent._id] + g
            else:
                flow[parent._id] = g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / broadcasting ops
# ---------------------------------------------------------------------------

def _broadcast_check(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "add")
    out = a.values + b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bwd, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "sub")
    out = a.values - b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "mul")
    out = a.values * b.values

    def bwd(g):
        return (
            _unbroadcast(g * b.values, a.shape),
            _unbroadcast(g * a.values, b.shape),
        )

    return _make(out, (a, b), bwd, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.values / b.values

    def bwd(g):
        return (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.shape),
        )

    return _make(out, (a, b), bwd, "div")


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.values, 0.0)
    mask = (x.values > 0.0).astype(np.float64)

    def bwd(g):
        return (g * mask,)

    return _make(out, (x,), bwd, "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x.values))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), bwd, "sigmoid")


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.values)

    def bwd(g):
        return (g * out,)

    return _make(out, (x,), bwd, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.values <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    out = np.log(x.values)

    def bwd(g):
        return (g / x.values,)

    return _make(out, (x,), bwd, "log")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.values < 0.0):
        raise DomainError("sqrt requires non-negative inputs")
    out = np.sqrt(x.values)

    def bwd(g):
        # Subgradient 0 at x == 0 keeps values finite.
        denom = np.where(out > 0.0, 2.0 * out, np.inf)
        return (g / denom,)

    return _make(out, (x,), bwd, "sqrt")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Tensor:
    """Tanh-approximation GELU."""
    x = as_tensor(x)
    v = x.values
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def bwd(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
        d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner
        return (g * d,)

    return _make(out, (x,), bwd, "gelu")


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul requires tensors of rank >= 2")
    if a.ndim != b.ndim:
        raise ShapeError(f"matmul: mixed ranks {a.ndim} and {b.ndim} not supported")
    if a.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims {a.shape[:-2]} != {b.shape[:-2]}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def bwd(g):
        return (
            g @ b.values.swapaxes(-1, -2),
            a.values.swapaxes(-1, -2) @ g,
        )

    return _make(out, (a, b), bwd, "matmul")


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for rank {x.ndim}")
    inv = tuple(np.argsort(axes))
    out = np.transpose(x.values, axes)

    def bwd(g):
        return (np.transpose(g, inv).copy(),)

    return _make(out, (x,), bwd, "transpose")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape {x.shape} -> {shape}") from exc

    def bwd(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), bwd, "reshape")


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along one axis."""
    x = as_tensor(x)
    if not (0 <= start and start + length <= x.shape[axis]):
        raise ShapeError(
            f"narrow: [{start}, {start + length}) outside axis {axis} of {x.shape}"
        )
    sl = tuple(
        slice(start, start + length) if ax == axis else slice(None)
        for ax in range(x.ndim)
    )
    out = x.values[sl].copy()

    def bwd(g):
        gx = np.zeros_like(x.values)
        gx[sl] = g
        return (gx,)

    return _make(out, (x,), bwd, "slice")


def slice_bounds(x, bounds) -> Tensor:
    """General basic slice; ``bounds`` is a (start, stop)-or-None per axis."""
    x = as_tensor(x)
    if len(bounds) != x.ndim:
        raise ShapeError(f"slice: {len(bounds)} bounds for rank {x.ndim}")
    sl = tuple(slice(None) if b is None else slice(b[0], b[1]) for b in bounds)
    out = x.values[sl].copy()

    def bwd(g):
        gx = np.zeros_like(x.values)
        gx[sl] = g
        return (gx,)

    return _make(out, (x,), bwd, "slice")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        grads = []
        for i in range(len(tensors)):
            sl = tuple(
                slice(offsets[i], offsets[i + 1]) if ax == axis else slice(None)
                for ax in range(g.ndim)
            )
            grads.append(g[sl].copy())
        return tuple(grads)

    return _make(out, tuple(tensors), bwd, "concat")


def _restore_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if not keepdims and axis is not None:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape).copy()


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        return (_restore_reduced(g, x.shape, axis, keepdims),)

    return _make(np.asarray(out), (x,), bwd, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.values.mean(axis=axis, keepdims=keepdims)
    count = x.values.size if axis is None else x.values.size // np.asarray(out).size

    def bwd(g):
        return (_restore_reduced(g, x.shape, axis, keepdims) / count,)

    return _make(np.asarray(out), (x,), bwd, "mean")


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (x,), bwd, "softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine shapes {gamma.shape}/{beta.shape} vs d={d}")
    mu = x.values.mean(axis=-1, keepdims=True)
    var = x.values.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv
    out = xhat * gamma.values + beta.values

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=lead) if lead else (g * xhat)
        g_beta = g.sum(axis=lead) if lead else g
        gy = g * gamma.values
        gx = inv * (
            gy
            - gy.mean(axis=-1, keepdims=True)
            - xhat * (gy * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, np.asarray(g_gamma), np.asarray(g_beta)

    return _make(out, (x, gamma, beta), bwd, "layer_norm")


def l2_norm(x) -> Tensor:
    """Euclidean norm over the last axis, keepdims."""
    x = as_tensor(x)
    out = np.sqrt((x.values * x.values).sum(axis=-1, keepdims=True))

    def bwd(g):
        denom = np.where(out > 0.0, out, np.inf)
        return (g * x.values / denom,)

    return _make(out, (x,), bwd, "l2_norm")


# ---------------------------------------------------------------------------
# time resize / rotary / gather / straight-through
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _resize_taps(src_len: int, dst_len: int):
    """Align-corners linear interpolation taps: (i0, i1, w) per target index."""
    if src_len == 1:
        i0 = np.zeros(dst_len, dtype=np.intp)
        return i0, i0, np.zeros(dst_len)
    if dst_len == 1:
        pos = np.array([(src_len - 1) / 2.0])
    else:
        pos = np.arange(dst_len) * ((src_len - 1) / (dst_len - 1))
    i0 = np.minimum(pos.astype(np.intp), src_len - 2)
    w = pos - i0
    return i0, i0 + 1, w


def resize_time_array(arr: np.ndarray, target_len: int) -> np.ndarray:
    """Non-differentiating resize of a (T, D) array along axis 0."""
    if arr.ndim != 2:
        raise ShapeError(f"resize_time expects a (T, D) array, got {arr.shape}")
    if target_len < 1:
        raise ShapeError(f"resize_time: target_len {target_len} < 1")
    if target_len == arr.shape[0]:
        return arr.copy()
    i0, i1, w = _resize_taps(arr.shape[0], target_len)
    x0 = arr[i0]
    # Lerp as x0 + w*(x1-x0) so constant signals are preserved exactly.
    return x0 + w[:, None] * (arr[i1] - x0)


def linear_resize_time(x, target_len: int) -> Tensor:
    """Differentiable align-corners linear resize along the time (first) axis.

    Length-1 targets sample the temporal midpoint; length-1 sources broadcast.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"linear_resize_time expects (T, D), got {x.shape}")
    if target_len < 1:
        raise ShapeError(f"linear_resize_time: target_len {target_len} < 1")
    src_len = x.shape[0]
    if target_len == src_len:
        out = x.values.copy()

        def bwd_id(g):
            return (g.copy(),)

        return _make(out, (x,), bwd_id, "linear_resize_time")

    i0, i1, w = _resize_taps(src_len, target_len)
    x0 = x.values[i0]
    out = x0 + w[:, None] * (x.values[i1] - x0)

    def bwd(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, i0, (1.0 - w)[:, None] * g)
        np.add.at(gx, i1, w[:, None] * g)
        return (gx,)

    return _make(out, (x,), bwd, "linear_resize_time")


def rope_rotate(x, times: np.ndarray, freqs: np.ndarray) -> Tensor:
    """Rotate interleaved channel pairs of x[..., t, :] by angle time[t]*freq.

    ``times`` has length T (the second-to-last axis of x) and ``freqs`` has
    length D/2. Neither is differentiated.
    """
    x = as_tensor(x)
    times = np.asarray(times, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    d = x.shape[-1]
    if d % 2 != 0:
        raise ShapeError(f"rope_rotate: last dim {d} must be even")
    if times.shape != (x.shape[-2],) or freqs.shape != (d // 2,):
        raise ShapeError(
            f"rope_rotate: times {times.shape} / freqs {freqs.shape} vs x {x.shape}"
        )
    ang = times[:, None] * freqs[None, :]
    cos, sin = np.cos(ang), np.sin(ang)

    def rotate(v, cos, sin):
        even, odd = v[..., 0::2], v[..., 1::2]
        out = np.empty_like(v)
        out[..., 0::2] = even * cos - odd * sin
        out[..., 1::2] = even * sin + odd * cos
        return out

    out = rotate(x.values, cos, sin)

    def bwd(g):
        return (rotate(g, cos, -sin),)

    return _make(out, (x,), bwd, "rope_rotate")


def gather_rows(x, indices, axis: int = 0) -> Tensor:
    """Select rows along ``axis`` (duplicates allowed; gradients scatter-add)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows expects a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise ShapeError(f"gather_rows: index out of range for axis {axis} of {x.shape}")
    out = np.take(x.values, idx, axis=axis)
    key = tuple(slice(None) for _ in range(axis)) + (idx,)

    def bwd(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, key, g)
        return (gx,)

    return _make(out, (x,), bwd, "gather_rows")


def pass_through(target, surrogate) -> Tensor:
    """Forward = target; backward routes the full gradient to surrogate.

    The straight-through estimator used by the binary quantizer.
    """
    target, surrogate = as_tensor(target), as_tensor(surrogate)
    if target.shape != surrogate.shape:
        raise ShapeError(f"pass_through: {target.shape} != {surrogate.shape}")

    def bwd(g):
        return None, g.copy()

    return _make(target.values.copy(), (target, surrogate), bwd, "pass_through")


# ---------------------------------------------------------------------------
# rigid rotation (Rodrigues, axis-angle)
# ---------------------------------------------------------------------------

_SMALL_SQ_ANGLE = 1e-6


def _rot_coeffs(s: np.ndarray):
    """cos(t), sin(t)/t, (1-cos(t))/t^2 as smooth functions of s = t^2."""
    small = s < _SMALL_SQ_ANGLE
    s_safe = np.where(small, 1.0, s)
    t = np.sqrt(s_safe)
    c = np.where(small, 1.0 - s / 2.0 + s * s / 24.0, np.cos(t))
    a = np.where(small, 1.0 - s / 6.0 + s * s / 120.0, np.sin(t) / t)
    b = np.where(small, 0.5 - s / 24.0 + s * s / 720.0, (1.0 - np.cos(t)) / s_safe)
    return c, a, b, small, s_safe


def axis_angle_rotate(points, angles, center) -> Tensor:
    """Rotate (N, V, 3) points about ``center`` by per-frame axis-angle (N, 3).

    Rodrigues in even-power form: R(w)p = cos(t) p + (sin t / t)(w x p)
    + ((1-cos t)/t^2) w (w . p), with series fallbacks near t = 0 so the
    map and its Jacobian stay smooth. ``center`` is a constant.
    """
    points, angles = as_tensor(points), as_tensor(angles)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ShapeError(f"axis_angle_rotate: points {points.shape} != (N, V, 3)")
    if angles.shape != (points.shape[0], 3):
        raise ShapeError(f"axis_angle_rotate: angles {angles.shape} != ({points.shape[0]}, 3)")
    center = np.asarray(center, dtype=np.float64).reshape(3)

    p = points.values - center
    w = angles.values
    s = (w * w).sum(axis=-1)
    c, a, b, small, s_safe = _rot_coeffs(s)

    cross = np.cross(w[:, None, :], p)
    wdotp = (p * w[:, None, :]).sum(axis=-1)
    out = (
        c[:, None, None] * p
        + a[:, None, None] * cross
        + b[:, None, None] * w[:, None, :] * wdotp[:, :, None]
        + center
    )

    def bwd(g):
        # d/dp is the rotation itself, so its transpose is rotation by -w.
        g_cross = np.cross(w[:, None, :], g)
        g_dot = (g * w[:, None, :]).sum(axis=-1)
        gp = (
            c[:, None, None] * g
            - a[:, None, None] * g_cross
            + b[:, None, None] * w[:, None, :] * g_dot[:, :, None]
        )

        # Coefficient derivatives w.r.t. s (series near 0 mirror _rot_coeffs).
        da = np.where(
            small,
            -1.0 / 6.0 + s / 60.0 - s * s / 1680.0,
            (c - a) / (2.0 * s_safe),
        )
        db = np.where(
            small,
            -1.0 / 24.0 + s / 360.0 - s * s / 13440.0,
            (a / 2.0 - b) / s_safe,
        )
        s1 = (g * p).sum(axis=(1, 2))
        s2 = (g * cross).sum(axis=(1, 2))
        s3 = (g_dot * wdotp).sum(axis=1)
        t1 = np.cross(p, g).sum(axis=1)
        t2 = (wdotp[:, :, None] * g + g_dot[:, :, None] * p).sum(axis=1)
        gw = (
            (-a * s1 + 2.0 * da * s2 + 2.0 * db * s3)[:, None] * w
            + a[:, None] * t1
            + b[:, None] * t2
        )
        return gp, gw

    return _make(out, (points, angles), bwd, "axis_angle_rotate")


# ---------------------------------------------------------------------------
# name-based dispatch
# ---------------------------------------------------------------------------

def op_forward(op_name: str, inputs, attrs: dict | None = None) -> Tensor:
    """Run a registered operation by name; records provenance like the
    direct functions do."""
    attrs = attrs or {}
    try:
        fn = _DISPATCH[op_name]
    except KeyError as exc:
        raise ValueError(f"unknown operation {op_name!r}") from exc
    return fn(inputs, attrs)


_DISPATCH = {
    "add": lambda ins, at: add(ins[0], ins[1]),
    "sub": lambda ins, at: sub(ins[0], ins[1]),
    "mul": lambda ins, at: mul(ins[0], ins[1]),
    "div": lambda ins, at: div(ins[0], ins[1]),
    "matmul": lambda ins, at: matmul(ins[0], ins[1]),
    "transpose": lambda ins, at: transpose(ins[0], at["axes"]),
    "reshape": lambda ins, at: reshape(ins[0], at["shape"]),
    "slice": lambda ins, at: slice_bounds(ins[0], at["bounds"]),
    "concat": lambda ins, at: concat(ins, at.get("axis", 0)),
    "sum": lambda ins, at: sum_(ins[0], at.get("axis"), at.get("keepdims", False)),
    "mean": lambda ins, at: mean(ins[0], at.get("axis"), at.get("keepdims", False)),
    "softmax": lambda ins, at: softmax(ins[0]),
    "layer_norm": lambda ins, at: layer_norm(ins[0], ins[1], ins[2], at.get("eps", 1e-5)),
    "gelu": lambda ins, at: gelu(ins[0]),
    "relu": lambda ins, at: relu(ins[0]),
    "sigmoid": lambda ins, at: sigmoid(ins[0]),
    "exp": lambda ins, at: exp(ins[0]),
    "log": lambda ins, at: log(ins[0]),
    "sqrt": lambda ins, at: sqrt(ins[0]),
    "l2_norm": lambda ins, at: l2_norm(ins[0]),
    "linear_resize_time": lambda ins, at: linear_resize_time(ins[0], at["target_len"]),
    "rope_rotate": lambda ins, at: rope_rotate(ins[0], at["times"], at["freqs"]),
    "gather_rows": lambda ins, at: gather_rows(ins[0], at["indices"], at.get("axis", 0)),
    "pass_through": lambda ins, at: pass_through(ins[0], ins[1]),
    "axis_angle_rotate": lambda ins, at: axis_angle_rotate(ins[0], ins[1], at["center"]),
}
