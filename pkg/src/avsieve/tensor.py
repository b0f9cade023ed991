"""Dense float64 numeric core with tape-recorded reverse-mode differentiation.

Values are C-contiguous 64-bit float arrays. Every operation is recorded on a
:class:`Tape` as a node holding the output value, references to its parent
nodes, and a closure that maps an upstream gradient to per-parent gradients.
``Tape.backward`` walks the record in reverse once, accumulating gradients by
summation wherever a node feeds several consumers.

The core also hosts two instruments used by the benchmark harness:

* :class:`LiveValueMeter` counts simultaneously live float64 values (tensor
  allocations plus declared transients inside fused kernels).
* :class:`FlopCounter` tallies dense and attention work.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray

GELU_C = 0.7978845608028654  # sqrt(2/pi)
GELU_K = 0.044715
LAYER_NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, *shapes):
        self.primitive = primitive
        self.shapes = tuple(tuple(int(n) for n in s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{primitive}: incompatible shapes {joined}")


class LiveValueMeter:
    """Tracks the number of simultaneously live float64 values.

    Disabled by default; when measuring, tensor allocations increment the
    count and garbage collection decrements it (via weakref finalizers bound
    to the measurement generation, so stale releases are ignored).
    """

    def __init__(self):
        self.enabled = False
        self.generation = 0
        self.live = 0
        self.peak = 0

    def start(self):
        self.generation += 1
        self.live = 0
        self.peak = 0
        self.enabled = True

    def stop(self):
        self.enabled = False

    def track(self, n: int):
        if not self.enabled:
            return None
        self.live += n
        if self.live > self.peak:
            self.peak = self.live
        return self.generation

    def release(self, n: int, token):
        if self.enabled and token == self.generation:
            self.live -= n

    @contextmanager
    def measure(self):
        self.start()
        try:
            yield self
        finally:
            self.stop()

    @contextmanager
    def transient(self, n: int):
        """Declare ``n`` values that live only inside a fused kernel."""
        token = self.track(n)
        try:
            yield
        finally:
            self.release(n, token)


class FlopCounter:
    """Accumulates floating-point operation tallies by category."""

    def __init__(self):
        self.enabled = False
        self.counts: dict[str, int] = {}

    def add(self, key: str, n: int):
        if self.enabled:
            self.counts[key] = self.counts.get(key, 0) + int(n)

    @contextmanager
    def count(self):
        previous = self.counts
        self.counts = {}
        self.enabled = True
        try:
            yield self.counts
        finally:
            self.enabled = False
            self.counts = previous


METER = LiveValueMeter()
FLOPS = FlopCounter()


class Tensor:
    """Dense array of 64-bit floats, row-major.

    ``shape`` is the dimension list and ``data`` the flat row-major view.
    Creation and collection are reported to the live-value meter.
    """

    __slots__ = ("array", "__weakref__")

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.array = arr
        token = METER.track(arr.size)
        if token is not None:
            weakref.finalize(self, METER.release, arr.size, token)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def data(self) -> Array:
        return self.array.reshape(-1)

    @property
    def size(self) -> int:
        return self.array.size

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


@dataclass(eq=False)
class Node:
    """One recorded primitive application (or leaf) on a tape."""

    nid: int
    tensor: Tensor
    parents: tuple["Node", ...]
    vjp: Callable[[Array], tuple[Array | None, ...]] | None
    name: str

    @property
    def value(self) -> Array:
        return self.tensor.array

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape


def _as_2d(a: Array) -> Array:
    return a if a.ndim == 2 else a.reshape(1, -1)


def _softmax_rows(x: Array, mask: Array | None) -> Array:
    """Row softmax; masked-out entries get exactly 0 and never affect a row."""
    x2 = _as_2d(x)
    if mask is None:
        m = x2.max(axis=1, keepdims=True)
        e = np.exp(x2 - m)
        out = e / e.sum(axis=1, keepdims=True)
    else:
        mk = _as_2d(np.asarray(mask, dtype=bool))
        if mk.shape != x2.shape:
            raise ShapeError("softmax", x2.shape, mk.shape)
        if not mk.any(axis=1).all():
            raise ValueError("softmax: a row has no unmasked entries")
        m = np.max(x2, axis=1, keepdims=True, initial=-np.inf, where=mk)
        with np.errstate(over="ignore"):
            e = np.where(mk, np.exp(np.where(mk, x2, m) - m), 0.0)
        out = e / e.sum(axis=1, keepdims=True)
    return out.reshape(x.shape)


def _gelu_tanh(x: Array) -> Array:
    return np.tanh(GELU_C * (x + GELU_K * x * x * x))


def _gelu_value(x: Array) -> Array:
    return 0.5 * x * (1.0 + _gelu_tanh(x))


def _gelu_grad(x: Array, t: Array | None = None) -> Array:
    if t is None:
        t = _gelu_tanh(x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)


def rotate_pairs_value(x: Array, angles: Array, sign: float = 1.0) -> Array:
    """Rotate coordinate pairs (2j, 2j+1) of each row by ``sign * angles[.., j]``."""
    if x.shape[-1] % 2 != 0 or angles.shape != x.shape[:-1] + (x.shape[-1] // 2,):
        raise ShapeError("rotate_pairs", x.shape, angles.shape)
    pairs = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    c = np.cos(angles)
    s = np.sin(sign * angles) if sign != 1.0 else np.sin(angles)
    out = np.empty_like(pairs)
    out[..., 0] = pairs[..., 0] * c - pairs[..., 1] * s
    out[..., 1] = pairs[..., 0] * s + pairs[..., 1] * c
    return out.reshape(x.shape)


class Tape:
    """Append-only record of primitive applications with reverse replay.

    Nodes are recorded in topological order by construction; ``backward``
    visits each node at most once, in reverse record order, and accumulates
    gradients by summation when a node feeds multiple consumers.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    # -- recording ---------------------------------------------------------

    def leaf(self, values, name: str = "leaf") -> Node:
        tensor = values if isinstance(values, Tensor) else Tensor(values)
        node = Node(len(self.nodes), tensor, (), None, name)
        self.nodes.append(node)
        return node

    def custom(self, value: Array, parents: Sequence[Node], vjp, name: str) -> Node:
        """Record a caller-defined primitive with an explicit vjp closure."""
        node = Node(len(self.nodes), Tensor(value), tuple(parents), vjp, name)
        self.nodes.append(node)
        return node

    # -- core primitives ----------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
            raise ShapeError("matmul", av.shape, bv.shape)
        FLOPS.add("matmul", 2 * int(np.prod(av.shape)) * (bv.shape[-1] if bv.ndim == 2 else 1))
        value = av @ bv

        def vjp(g: Array):
            if av.ndim == 1 and bv.ndim == 1:
                return (g * bv, g * av)
            a2, b2 = _as_2d(av), bv if bv.ndim == 2 else bv.reshape(-1, 1)
            gm = g.reshape(a2.shape[0], b2.shape[1])
            ga = (gm @ b2.T).reshape(av.shape)
            gb = (a2.T @ gm).reshape(bv.shape)
            return (ga, gb)

        return self.custom(value, (a, b), vjp, "matmul")

    def add(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape == bv.shape:
            def vjp(g: Array):
                return (g, g)
        elif av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
            def vjp(g: Array):
                return (g, g.sum(axis=0))
        else:
            raise ShapeError("add", av.shape, bv.shape)
        return self.custom(av + bv, (a, b), vjp, "add")

    def multiply(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            raise ShapeError("multiply", av.shape, bv.shape)

        def vjp(g: Array):
            return (g * bv, g * av)

        return self.custom(av * bv, (a, b), vjp, "multiply")

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)

        def vjp(g: Array):
            return (g * c,)

        return self.custom(a.value * c, (a,), vjp, "scale")

    def softmax(self, a: Node, mask: Array | None = None) -> Node:
        out = _softmax_rows(a.value, mask)

        def vjp(g: Array):
            o2, g2 = _as_2d(out), _as_2d(g)
            inner = (g2 * o2).sum(axis=1, keepdims=True)
            return ((o2 * (g2 - inner)).reshape(a.value.shape),)

        return self.custom(out, (a,), vjp, "softmax")

    def layer_norm(self, a: Node, gain: Node | None = None, bias: Node | None = None,
                   eps: float = LAYER_NORM_EPS) -> Node:
        av = a.value
        x = _as_2d(av)
        n = x.shape[1]
        if (gain is None) != (bias is None):
            raise ValueError("layer_norm: gain and bias must be given together")
        if gain is not None and (gain.value.shape != (n,) or bias.value.shape != (n,)):
            raise ShapeError("layer_norm", av.shape, gain.value.shape, bias.value.shape)
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        y = (x - mu) * inv_std
        out = (y * gain.value + bias.value) if gain is not None else y

        def vjp(g: Array):
            g2 = _as_2d(g)
            gy = g2 * gain.value if gain is not None else g2
            gx = inv_std * (gy - gy.mean(axis=1, keepdims=True)
                            - y * (gy * y).mean(axis=1, keepdims=True))
            gx = gx.reshape(av.shape)
            if gain is None:
                return (gx,)
            return (gx, (g2 * y).sum(axis=0), g2.sum(axis=0))

        parents = (a,) if gain is None else (a, gain, bias)
        return self.custom(out.reshape(av.shape), parents, vjp, "layer_norm")

    def gelu(self, a: Node) -> Node:
        av = a.value
        t = _gelu_tanh(av)

        def vjp(g: Array):
            return (g * _gelu_grad(av, t),)

        return self.custom(0.5 * av * (1.0 + t), (a,), vjp, "gelu")

    def gather(self, a: Node, rows) -> Node:
        av = a.value
        idx = np.asarray(rows, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= av.shape[0]):
            raise ValueError(f"gather: index out of range for {av.shape[0]} rows")

        def vjp(g: Array):
            # Scatter-add: rows gathered more than once accumulate; rows never
            # gathered keep an exactly-zero gradient.
            gin = np.zeros_like(av)
            np.add.at(gin, idx, g)
            return (gin,)

        return self.custom(av[idx], (a,), vjp, "gather")

    def concat(self, parts: Sequence[Node]) -> Node:
        parts = tuple(parts)
        if not parts:
            raise ValueError("concat: needs at least one input")
        ndim = parts[0].value.ndim
        if any(p.value.ndim != ndim for p in parts) or (
            ndim == 2 and len({p.value.shape[1] for p in parts}) != 1
        ):
            raise ShapeError("concat", *(p.value.shape for p in parts))
        value = np.concatenate([p.value for p in parts], axis=0)
        sizes = [p.value.shape[0] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def vjp(g: Array):
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

        return self.custom(value, parts, vjp, "concat")

    def transpose(self, a: Node) -> Node:
        if a.value.ndim != 2:
            raise ShapeError("transpose", a.value.shape)

        def vjp(g: Array):
            return (np.ascontiguousarray(g.T),)

        return self.custom(a.value.T, (a,), vjp, "transpose")

    # -- composite kernels ---------------------------------------------------

    def affine(self, x: Node, w: Node, b: Node) -> Node:
        """x @ w + b for 2-D x; fused to keep tapes short."""
        xv, wv, bv = x.value, w.value, b.value
        if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0] or bv.shape != (wv.shape[1],):
            raise ShapeError("affine", xv.shape, wv.shape, bv.shape)
        FLOPS.add("matmul", 2 * xv.shape[0] * xv.shape[1] * wv.shape[1])

        def vjp(g: Array):
            return (g @ wv.T, xv.T @ g, g.sum(axis=0))

        return self.custom(xv @ wv + bv, (x, w, b), vjp, "affine")

    def sum_all(self, a: Node) -> Node:
        av = a.value

        def vjp(g: Array):
            return (np.full(av.shape, float(np.reshape(g, -1)[0])),)

        return self.custom(np.asarray(av.sum()), (a,), vjp, "sum_all")

    def rotate_pairs(self, a: Node, angles: Array) -> Node:
        angles = np.asarray(angles, dtype=np.float64)
        value = rotate_pairs_value(a.value, angles)

        def vjp(g: Array):
            return (rotate_pairs_value(g, angles, sign=-1.0),)

        return self.custom(value, (a,), vjp, "rotate_pairs")

    def attention(self, q: Node, k: Node, v: Node, n_heads: int,
                  allowed: Array | None = None) -> Node:
        """Multi-head scaled dot-product attention over (L, D) inputs.

        ``allowed`` is an optional (L, L) boolean mask: query i may attend key
        j iff allowed[i, j]. Disallowed weights are exactly zero, so outputs
        are bit-invariant to the content of never-attended rows. Backward
        recomputes per-head weights instead of retaining the L x L matrices.
        """
        qv, kv, vv = q.value, k.value, v.value
        if qv.shape != kv.shape or qv.shape != vv.shape or qv.ndim != 2:
            raise ShapeError("attention", qv.shape, kv.shape, vv.shape)
        L, D = qv.shape
        if D % n_heads != 0:
            raise ShapeError("attention", qv.shape, (n_heads,))
        d = D // n_heads
        inv_sqrt_d = 1.0 / np.sqrt(d)
        disallowed = None
        if allowed is not None:
            allowed = np.asarray(allowed, dtype=bool)
            if allowed.shape != (L, L):
                raise ShapeError("attention", qv.shape, allowed.shape)
            if not allowed.any(axis=1).all():
                raise ValueError("attention: a query row attends to nothing")
            disallowed = ~allowed
        FLOPS.add("attention_pairs", L * L)
        FLOPS.add("attention", 4 * L * L * D)

        def head_weights(h: int) -> Array:
            # Disallowed entries are forced to -inf before the row max, so
            # their weights are exactly 0.0 and never see the raw scores.
            cols = slice(h * d, (h + 1) * d)
            scores = qv[:, cols] @ kv[:, cols].T
            scores *= inv_sqrt_d
            if allowed is not None:
                np.copyto(scores, -np.inf, where=disallowed)
            m = scores.max(axis=1, keepdims=True)
            np.subtract(scores, m, out=scores)
            np.exp(scores, out=scores)
            denom = scores.sum(axis=1, keepdims=True)
            np.divide(scores, denom, out=scores)
            return scores

        out = np.empty_like(qv)
        for h in range(n_heads):
            with METER.transient(L * L):
                w = head_weights(h)
                out[:, h * d:(h + 1) * d] = w @ vv[:, h * d:(h + 1) * d]

        def vjp(g: Array):
            gq = np.empty_like(qv)
            gk = np.empty_like(kv)
            gv = np.empty_like(vv)
            for h in range(n_heads):
                cols = slice(h * d, (h + 1) * d)
                with METER.transient(L * L):
                    w = head_weights(h)
                    gh = g[:, cols]
                    gv[:, cols] = w.T @ gh
                    gw = gh @ vv[:, cols].T
                    gs = w * (gw - (gw * w).sum(axis=1, keepdims=True))
                    gq[:, cols] = (gs @ kv[:, cols]) * inv_sqrt_d
                    gk[:, cols] = (gs.T @ qv[:, cols]) * inv_sqrt_d
            return (gq, gk, gv)

        return self.custom(out, (q, k, v), vjp, "attention")

    def cross_entropy(self, logits: Node, target: int) -> Node:
        lv = logits.value.reshape(-1)
        if not 0 <= target < lv.size:
            raise ValueError(f"cross_entropy: target {target} out of range {lv.size}")
        m = lv.max()
        lse = m + np.log(np.exp(lv - m).sum())
        value = np.asarray(lse - lv[target])

        def vjp(g: Array):
            p = np.exp(lv - lse)
            p[target] -= 1.0
            return ((float(np.reshape(g, -1)[0]) * p).reshape(logits.value.shape),)

        return self.custom(value, (logits,), vjp, "cross_entropy")

    # -- reverse pass --------------------------------------------------------

    def backward(self, loss: Node) -> dict[Node, Array]:
        """Gradients of a scalar loss node w.r.t. every node that feeds it."""
        if loss.value.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[int, Array] = {loss.nid: np.ones(loss.value.shape)}
        result: dict[Node, Array] = {}
        for node in reversed(self.nodes):
            g = grads.pop(node.nid, None)
            if g is None:
                continue
            result[node] = g
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                acc = grads.get(parent.nid)
                grads[parent.nid] = pg if acc is None else acc + pg
        return result


def grad_check_fd(fn, at, step: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` maps ``(tape, input_node) -> scalar loss node`` and must be
    deterministic. The relative error for coordinate i is
    ``|analytic_i - numeric_i| / max(1, |analytic_i|)``.
    """
    if step <= 0:
        raise ValueError("grad_check_fd: step must be positive")
    base = np.array(at.array if isinstance(at, Tensor) else at, dtype=np.float64)
    tape = Tape()
    x = tape.leaf(base.copy(), name="fd_input")
    grads = tape.backward(fn(tape, x))
    analytic = grads.get(x, np.zeros_like(base)).reshape(-1)

    def value_now() -> float:
        t = Tape()
        return float(fn(t, t.leaf(base, name="fd_input")).value)

    flat = base.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = value_now()
        flat[i] = orig - step
        down = value_now()
        flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        if err > worst:
            worst = err
    return worst
