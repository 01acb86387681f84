"""Dense NCHW tensors with reverse-mode automatic differentiation.

Feature maps use the (batch, channels, height, width) layout. Conv kernels
are (out_c, in_c/groups, kh, kw); per-channel parameters are 1-D vectors;
scalar losses have shape (). float64 is the default dtype so the
finite-difference checks stay meaningful.

Every operation validates its output for NaN/Inf and raises
:class:`NonFiniteError` instead of propagating silently. Elementwise
broadcasting is deliberately restricted to the attention-map shapes
(C,1,1) and (1,H,W) against (C,H,W); anything else raises
:class:`ShapeError` so shape bugs surface at the op that caused them.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "no_grad",
    "stat_freeze",
    "backward",
    "conv2d",
    "depthwise_conv2d",
    "layer_norm",
    "simple_gate",
    "sca",
    "pool_reduce",
    "pointwise",
    "add",
    "mul",
    "sigmoid",
    "relu",
    "absolute",
    "sqrt",
    "softplus",
    "interp2x_up",
    "interp2x_down",
    "concat_channels",
    "channel_slice",
    "soft_histogram",
    "tensor_sum",
    "tensor_mean",
    "grad_check",
    "GradCheckReport",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / probing)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class _StatFreezer:
    """Record/replay store for normalization and pooled-attention statistics.

    Receptive-field probing needs the spatial conv pathway isolated from the
    global statistics computed by layer_norm and channel-pooling attention.
    In ``record`` mode those ops push the statistics they computed; in
    ``replay`` mode they pop and reuse them instead of recomputing, so a
    perturbed input flows only through the spatially local structure.
    """

    def __init__(self):
        self.mode = "off"
        self._slots: list[np.ndarray | tuple] = []
        self._cursor = 0

    def record(self, value):
        self._slots.append(value)
        return value

    def replay(self):
        if self._cursor >= len(self._slots):
            raise RuntimeError("stat replay exhausted: call graph changed between record and replay")
        value = self._slots[self._cursor]
        self._cursor += 1
        return value

    def start_record(self):
        self.mode = "record"
        self._slots = []
        self._cursor = 0

    def start_replay(self):
        self.mode = "replay"
        self._cursor = 0

    def stop(self):
        self.mode = "off"


_FREEZER = _StatFreezer()


@contextlib.contextmanager
def stat_freeze(mode: str):
    """Context manager entering ``record`` or ``replay`` statistics mode."""
    if mode not in ("record", "replay"):
        raise ValueError(f"unknown stat_freeze mode: {mode!r}")
    if mode == "record":
        _FREEZER.start_record()
    else:
        _FREEZER.start_replay()
    try:
        yield _FREEZER
    finally:
        _FREEZER.stop()


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")


class Tensor:
    """Array container participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        _check_finite(arr, "Tensor()")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._op = "leaf"

    # -- basic introspection -------------------------------------------------

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
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag}, op={self._op})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def mean(self) -> "Tensor":
        return tensor_mean(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    """Wrap an op result, recording the node when gradients are live."""
    _check_finite(data, op)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
        out._op = op
    return out


class Tape:
    """Topologically ordered record of the op nodes reaching a root tensor.

    Construction walks the recorded graph once; :meth:`run` visits every
    node exactly once in reverse order, accumulating gradients into leaf
    tensors and releasing intermediate records as it goes.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order  # parents precede children; root is last

    def run(self, seed: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                parent_grads = node._vjp(g)
                for parent, pg in zip(node._parents, parent_grads):
                    if pg is None or not parent.requires_grad:
                        continue
                    if parent._parents:
                        key = id(parent)
                        grads[key] = grads[key] + pg if key in grads else pg
                    else:
                        parent.grad = pg if parent.grad is None else parent.grad + pg
                node._parents = ()
                node._vjp = None
            else:
                node.grad = g if node.grad is None else node.grad + g


def backward(loss: Tensor) -> None:
    """Reverse-mode gradients of a scalar onto all requires_grad leaves.

    The recorded tape is consumed: node records are cleared as they are
    visited, so a second backward through the same graph is impossible.
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("backward on a tensor with no recorded graph")
    tape = Tape(loss)
    tape.run(np.ones_like(loss.data))


# ---------------------------------------------------------------------------
# elementwise ops with restricted broadcasting
# ---------------------------------------------------------------------------


def _broadcast_check(sa: tuple, sb: tuple) -> None:
    """Allow same-shape, scalar, and the two attention-map patterns only."""
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 4 and len(sb) == 4 and (sa[0] == sb[0] or 1 in (sa[0], sb[0])):
        pa, pb = sa[1:], sb[1:]
        full = tuple(max(x, y) for x, y in zip(pa, pb))
        for pat in (pa, pb):
            if pat == full:
                continue
            if pat == (full[0], 1, 1):  # channel map C,1,1
                continue
            if pat == (1, full[1], full[2]):  # spatial map 1,H,W
                continue
            raise ShapeError(f"broadcast not allowed between {sa} and {sb}")
        return
    raise ShapeError(f"broadcast not allowed between {sa} and {sb}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.shape, b.shape)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _from_op(out, (a, b), vjp, "add")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.shape, b.shape)
    out = a.data * b.data
    da, db = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * db, a.shape), _unbroadcast(g * da, b.shape)

    return _from_op(out, (a, b), vjp, "mul")


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _from_op(out, (x,), vjp, "sigmoid")


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def vjp(g):
        return (g * mask,)

    return _from_op(np.where(mask, x.data, 0.0), (x,), vjp, "relu")


def absolute(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    sgn = np.sign(x.data)

    def vjp(g):
        return (g * sgn,)

    return _from_op(np.abs(x.data), (x,), vjp, "abs")


def sqrt(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data < 0):
        raise ShapeError("sqrt requires non-negative input")
    out = np.sqrt(x.data)

    def vjp(g):
        return (g * 0.5 / np.maximum(out, 1e-300),)

    return _from_op(out, (x,), vjp, "sqrt")


def softplus(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    d = x.data

    def vjp(g):
        s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
        return (g * s,)

    return _from_op(out, (x,), vjp, "softplus")


def tensor_sum(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape

    def vjp(g):
        return (np.full(shape, float(g), dtype=x.dtype),)

    return _from_op(np.asarray(x.data.sum()), (x,), vjp, "sum")


def tensor_mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape, n = x.shape, x.size

    def vjp(g):
        return (np.full(shape, float(g) / n, dtype=x.dtype),)

    return _from_op(np.asarray(x.data.mean()), (x,), vjp, "mean")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _resolve_padding(padding, kh, kw, dilation):
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("'same' padding requires odd kernel sizes")
        return (dilation * (kh - 1)) // 2, (dilation * (kw - 1)) // 2
    if isinstance(padding, int):
        return padding, padding
    ph, pw = padding
    return int(ph), int(pw)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           dilation: int = 1, groups: int = 1, padding="same") -> Tensor:
    """2-D cross-correlation with stride, dilation, and channel groups.

    ``x`` is (N, Cin, H, W); ``kernel`` is (Cout, Cin/groups, kh, kw);
    ``bias`` is (Cout,). ``padding`` is ``\"same\"`` (odd kernels; preserves
    H, W at stride 1), an int, or an (ph, pw) pair.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    n, cin, h, w = x.shape
    cout, cpg, kh, kw = kernel.shape
    if cin % groups or cout % groups:
        raise ShapeError(f"groups={groups} must divide in/out channels ({cin}, {cout})")
    if cpg * groups != cin:
        raise ShapeError(f"kernel expects {cpg * groups} input channels, input has {cin}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} != ({cout},)")
    ph, pw = _resolve_padding(padding, kh, kw, dilation)
    eh, ew = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
    ho = (h + 2 * ph - eh) // stride + 1
    wo = (w + 2 * pw - ew) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    sn, sc, sh, sw = xp.strides
    cols = as_strided(
        xp,
        shape=(n, cin, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh * dilation, sw * dilation),
    )
    og = cout // groups
    cols_g = cols.reshape(n, groups, cpg, ho, wo, kh, kw)
    k_g = kernel.data.reshape(groups, og, cpg, kh, kw)
    out = np.einsum("ngchwuv,gocuv->ngohw", cols_g, k_g, optimize=True).reshape(n, cout, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def vjp(g):
        gg = g.reshape(n, groups, og, ho, wo)
        dk = None
        if kernel.requires_grad:
            dk = np.einsum("ngchwuv,ngohw->gocuv", cols_g, gg, optimize=True).reshape(kernel.shape)
        dx = None
        if x.requires_grad:
            dcols = np.einsum("ngohw,gocuv->ngchwuv", gg, k_g, optimize=True).reshape(n, cin, ho, wo, kh, kw)
            dxp = np.zeros_like(xp)
            for u in range(kh):
                iu = u * dilation
                for v in range(kw):
                    iv = v * dilation
                    dxp[:, :, iu:iu + (ho - 1) * stride + 1:stride,
                        iv:iv + (wo - 1) * stride + 1:stride] += dcols[:, :, :, :, u, v]
            dx = dxp[:, :, ph:ph + h, pw:pw + w]
        if bias is None:
            return dx, dk
        db = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return dx, dk, db

    return _from_op(out, parents, vjp, "conv2d")


def depthwise_conv2d(x: Tensor, kernel3x3: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel 3x3 conv: conv2d with groups equal to the channel count."""
    kernel3x3 = _as_tensor(kernel3x3)
    if kernel3x3.shape[1] != 1 or kernel3x3.shape[2:] != (3, 3):
        raise ShapeError(f"depthwise kernel must be (C,1,3,3), got {kernel3x3.shape}")
    c = _as_tensor(x).shape[1]
    if kernel3x3.shape[0] != c:
        raise ShapeError(f"depthwise kernel has {kernel3x3.shape[0]} filters for {c} channels")
    return conv2d(x, kernel3x3, bias=bias, groups=c, padding="same")


# ---------------------------------------------------------------------------
# normalization / gating / attention primitives
# ---------------------------------------------------------------------------


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-item normalization over (C,H,W) followed by per-channel affine."""
    x, scale, shift = _as_tensor(x), _as_tensor(scale), _as_tensor(shift)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.ndim != 4 or x.size == 0:
        raise ShapeError(f"layer_norm expects a non-empty NCHW tensor, got {x.shape}")
    c = x.shape[1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeError("scale/shift must be per-channel vectors")

    if _FREEZER.mode == "record":
        mu = x.data.mean(axis=(1, 2, 3), keepdims=True)
        var = x.data.var(axis=(1, 2, 3), keepdims=True)
        _FREEZER.record((mu, var))
    elif _FREEZER.mode == "replay":
        mu, var = _FREEZER.replay()
    else:
        mu = x.data.mean(axis=(1, 2, 3), keepdims=True)
        var = x.data.var(axis=(1, 2, 3), keepdims=True)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    sb = scale.data.reshape(1, c, 1, 1)
    out = xhat * sb + shift.data.reshape(1, c, 1, 1)
    m = x.size // x.shape[0]
    frozen = _FREEZER.mode == "replay"

    def vjp(g):
        dxhat = g * sb
        dx = None
        if x.requires_grad:
            if frozen:
                dx = dxhat * inv_std
            else:
                mean_d = dxhat.mean(axis=(1, 2, 3), keepdims=True)
                mean_dx = (dxhat * xhat).mean(axis=(1, 2, 3), keepdims=True)
                dx = inv_std * (dxhat - mean_d - xhat * mean_dx)
        ds = (g * xhat).sum(axis=(0, 2, 3)) if scale.requires_grad else None
        db = g.sum(axis=(0, 2, 3)) if shift.requires_grad else None
        return dx, ds, db

    return _from_op(out, (x, scale, shift), vjp, "layer_norm")


def simple_gate(x: Tensor) -> Tensor:
    """Split channels into halves and multiply them elementwise."""
    x = _as_tensor(x)
    c = x.shape[1]
    if c % 2:
        raise ShapeError(f"simple_gate needs an even channel count, got {c}")
    half = c // 2
    a, b = x.data[:, :half], x.data[:, half:]

    def vjp(g):
        return (np.concatenate([g * b, g * a], axis=1),)

    return _from_op(a * b, (x,), vjp, "simple_gate")


def sca(x: Tensor, weight1x1: Tensor, bias: Tensor | None = None) -> Tensor:
    """Simplified channel attention: rescale by a 1x1 projection of the
    spatially pooled channel vector (no activation)."""
    x = _as_tensor(x)
    weight1x1 = _as_tensor(weight1x1)
    c = x.shape[1]
    if weight1x1.shape[0] != c or weight1x1.shape[1] != c or weight1x1.shape[2:] != (1, 1):
        raise ShapeError(f"sca weight must be ({c},{c},1,1), got {weight1x1.shape}")
    scale_map = conv2d(pool_reduce(x, "gap_c"), weight1x1, bias=bias, padding=0)
    return mul(x, scale_map)


def pool_reduce(x: Tensor, kind: str) -> Tensor:
    """Global pooling: ``gap_s``/``gmp_s`` reduce across channels to a
    (N,1,H,W) map; ``gap_c`` reduces across space to (N,C,1,1)."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("pool_reduce expects NCHW input")
    n, c, h, w = x.shape
    if kind == "gap_s":
        out = x.data.mean(axis=1, keepdims=True)

        def vjp(g):
            return (np.broadcast_to(g / c, x.shape).copy(),)

        return _from_op(out, (x,), vjp, "gap_s")
    if kind == "gmp_s":
        idx = x.data.argmax(axis=1)
        out = np.take_along_axis(x.data, idx[:, None], axis=1)

        def vjp(g):
            dx = np.zeros(x.shape, dtype=x.dtype)
            np.put_along_axis(dx, idx[:, None], g, axis=1)
            return (dx,)

        return _from_op(out, (x,), vjp, "gmp_s")
    if kind == "gap_c":
        # Spatial pooling is a global statistic: record/replay it under
        # stat freezing so receptive-field probes stay conv-local.
        if _FREEZER.mode == "replay":
            out = _FREEZER.replay()
            return _from_op(out, (x,), lambda g: (np.zeros(x.shape, dtype=x.dtype),), "gap_c")
        out = x.data.mean(axis=(2, 3), keepdims=True)
        if _FREEZER.mode == "record":
            _FREEZER.record(out)

        def vjp(g):
            return (np.broadcast_to(g / (h * w), x.shape).copy(),)

        return _from_op(out, (x,), vjp, "gap_c")
    raise ValueError(f"unknown pool kind: {kind!r}")


# ---------------------------------------------------------------------------
# resampling / structural ops
# ---------------------------------------------------------------------------


_UP_CACHE: dict[int, np.ndarray] = {}
_DOWN_CACHE: dict[int, np.ndarray] = {}


def _up_matrix(n: int) -> np.ndarray:
    """(2n, n) bilinear 2x upsampling weights, edges clamped."""
    mat = _UP_CACHE.get(n)
    if mat is None:
        mat = np.zeros((2 * n, n))
        for i in range(2 * n):
            src = i / 2.0 - 0.25
            lo = int(np.floor(src))
            t = src - lo
            mat[i, min(max(lo, 0), n - 1)] += 1.0 - t
            mat[i, min(max(lo + 1, 0), n - 1)] += t
        _UP_CACHE[n] = mat
    return mat


def _down_matrix(n: int) -> np.ndarray:
    """(n/2, n) 2x2 block-average downsampling weights."""
    mat = _DOWN_CACHE.get(n)
    if mat is None:
        mat = np.zeros((n // 2, n))
        for i in range(n // 2):
            mat[i, 2 * i] = 0.5
            mat[i, 2 * i + 1] = 0.5
        _DOWN_CACHE[n] = mat
    return mat


def interp2x_up(x: Tensor) -> Tensor:
    """Bilinear 2x upsampling (separable, edge-clamped)."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("interp2x_up expects NCHW input")
    n, c, h, w = x.shape
    uh, uw = _up_matrix(h), _up_matrix(w)
    out = np.einsum("ih,nchw,jw->ncij", uh, x.data, uw, optimize=True)

    def vjp(g):
        return (np.einsum("ih,ncij,jw->nchw", uh, g, uw, optimize=True),)

    return _from_op(out, (x,), vjp, "interp2x_up")


def interp2x_down(x: Tensor) -> Tensor:
    """2x downsampling by 2x2 block averaging."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("interp2x_down expects NCHW input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"interp2x_down needs even spatial dims, got {h}x{w}")
    dh, dw = _down_matrix(h), _down_matrix(w)
    out = np.einsum("ih,nchw,jw->ncij", dh, x.data, dw, optimize=True)

    def vjp(g):
        return (np.einsum("ih,ncij,jw->nchw", dh, g, dw, optimize=True),)

    return _from_op(out, (x,), vjp, "interp2x_down")


def concat_channels(tensors) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    base = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != 4 or t.shape[0] != base[0] or t.shape[2:] != base[2:]:
            raise ShapeError("concat_channels requires matching N, H, W")
    widths = [t.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)
    edges = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(widths)))

    return _from_op(out, tuple(tensors), vjp, "concat")


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"channel slice [{start}:{stop}] out of range for {x.shape}")

    def vjp(g):
        dx = np.zeros(x.shape, dtype=x.dtype)
        dx[:, start:stop] = g
        return (dx,)

    return _from_op(x.data[:, start:stop].copy(), (x,), vjp, "channel_slice")


def pointwise(x: Tensor, op: str, other: Tensor | None = None) -> Tensor:
    """Dispatcher over the elementwise / resampling primitives."""
    if op == "add":
        return add(x, other)
    if op == "mul":
        return mul(x, other)
    if op == "sigmoid":
        return sigmoid(x)
    if op == "relu":
        return relu(x)
    if op == "interp2x_up":
        return interp2x_up(x)
    if op == "interp2x_down":
        return interp2x_down(x)
    raise ValueError(f"unknown pointwise op: {op!r}")


def soft_histogram(x: Tensor, bins: int) -> Tensor:
    """Differentiable normalized histogram over [0,1] with linear binning.

    Each value splits its unit mass linearly between the two nearest bin
    centers (triangular kernel of one-bin width), so bins always sum to 1.
    Returns a (bins,) tensor.
    """
    x = _as_tensor(x)
    if bins < 2:
        raise ValueError("need at least 2 bins")
    flat = x.data.reshape(-1)
    n = flat.size
    pos = np.clip(flat * bins - 0.5, 0.0, bins - 1.0)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, bins - 2)
    frac = pos - lo
    hist = np.zeros(bins)
    np.add.at(hist, lo, (1.0 - frac) / n)
    np.add.at(hist, lo + 1, frac / n)
    interior = (flat * bins - 0.5 > 0.0) & (flat * bins - 0.5 < bins - 1.0)

    def vjp(g):
        dx = (g[lo + 1] - g[lo]) * bins / n
        dx[~interior] = 0.0
        return (dx.reshape(x.shape),)

    return _from_op(hist, (x,), vjp, "soft_histogram")


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Result of comparing tape gradients against central differences."""

    max_rel_err: float
    per_input: list[float] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(fn, inputs, tolerance: float = 1e-4, step: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps the given tensors to a scalar Tensor. Fresh float64 copies
    of ``inputs`` with requires_grad set are passed in, so callers can hand
    over plain tensors. The relative error for each input is
    ``max|g_tape - g_fd| / max(1, |g_tape|_inf, |g_fd|_inf)``.
    """
    probes = [Tensor(np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64).copy(),
                     requires_grad=True) for t in inputs]
    loss = fn(*probes)
    if loss.size != 1:
        raise ShapeError("grad_check requires fn to return a scalar")
    backward(loss)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in probes]

    per_input = []
    with no_grad():
        for k, probe in enumerate(probes):
            numeric = np.zeros(probe.shape)
            flat = probe.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = fn(*probes).item()
                flat[i] = orig - step
                lo = fn(*probes).item()
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * step)
            scale = max(1.0, np.abs(analytic[k]).max(initial=0.0), np.abs(numeric).max(initial=0.0))
            per_input.append(float(np.abs(analytic[k] - numeric).max(initial=0.0) / scale))
    return GradCheckReport(max_rel_err=max(per_input), per_input=per_input, tolerance=tolerance)
