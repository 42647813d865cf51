"""Dense layers over 2-D activations with hand-derived backward passes.

Every layer records the forward intermediates it needs (its tape) and
consumes them on backward, so calling backward twice, or before any
forward, raises. Activations are (seq, features) float32 by default;
row-wise reductions (softmax sums, norm statistics) accumulate in float64.
A ``dtype`` of float64 turns the whole stack into the high-precision
configuration used by the finite-difference checks.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Param:
    """A learnable array with its gradient accumulator.

    ``decay`` marks parameters eligible for weight decay (weight matrices;
    biases, norm parameters, and embeddings are excluded).
    """

    __slots__ = ("value", "grad", "decay")

    def __init__(self, value: np.ndarray, decay: bool = True):
        self.value = value
        self.grad = np.zeros_like(value)
        self.decay = decay


def xavier_uniform(rng: np.random.Generator, in_dim: int, out_dim: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(in_dim, out_dim)).astype(dtype)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU with the tanh approximation (cubic constant 0.044715)."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax along the last axis; sums accumulate at float64."""
    x64 = np.asarray(x, dtype=np.float64)
    e = np.exp(x64 - x64.max(axis=-1, keepdims=True))
    return (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)


def positional_encoding(n_positions: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal absolute positional table of shape (n_positions, d_model)."""
    if n_positions <= 0 or d_model <= 0:
        raise ValidationError("positional encoding dims must be positive")
    if d_model % 2 != 0:
        raise ValidationError(f"d_model must be even, got {d_model}")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    inv_freq = 10000.0 ** (-np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    angles = pos * inv_freq[None, :]
    table = np.empty((n_positions, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(dtype)


class Layer:
    """Base: parameter enumeration plus the forward-tape bookkeeping."""

    def __init__(self):
        self._tape = None

    def params(self) -> list[tuple[str, Param]]:
        return []

    def _pop_tape(self):
        if self._tape is None:
            raise RuntimeError(
                f"{type(self).__name__}.backward called without a preceding forward"
            )
        tape, self._tape = self._tape, None
        return tape


def _collect(children: list[tuple[str, Layer]]) -> list[tuple[str, Param]]:
    out = []
    for prefix, child in children:
        out.extend((f"{prefix}.{name}", p) for name, p in child.params())
    return out


class Linear(Layer):
    """Affine map y = x @ W + b for (n, in_dim) inputs."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = Param(xavier_uniform(rng, in_dim, out_dim, dtype))
        self.b = Param(np.zeros(out_dim, dtype=dtype), decay=False)

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValidationError(
                f"linear layer expects (n, {self.in_dim}) input, got {x.shape}"
            )
        self._tape = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._pop_tape()
        self.W.grad += x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class GELU(Layer):
    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        self._tape = x
        return gelu(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._pop_tape()
        return dy * _gelu_grad(x)


class LayerNorm(Layer):
    """Row-wise normalization to mean 0 / variance 1, then affine gain+bias."""

    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gain = Param(np.ones(dim, dtype=dtype), decay=False)
        self.bias = Param(np.zeros(dim, dtype=dtype), decay=False)

    def params(self):
        return [("gain", self.gain), ("bias", self.bias)]

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x64 = np.asarray(x, dtype=np.float64)
        mu = x64.mean(axis=-1, keepdims=True)
        var = x64.var(axis=-1, keepdims=True)
        inv_sigma = 1.0 / np.sqrt(var + self.eps)
        xhat = ((x64 - mu) * inv_sigma).astype(x.dtype, copy=False)
        self._tape = (xhat, inv_sigma.astype(x.dtype, copy=False))
        return xhat * self.gain.value + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_sigma = self._pop_tape()
        self.gain.grad += (dy * xhat).sum(axis=0)
        self.bias.grad += dy.sum(axis=0)
        g = dy * self.gain.value
        m1 = g.mean(axis=-1, keepdims=True)
        m2 = (g * xhat).mean(axis=-1, keepdims=True)
        return (g - m1 - xhat * m2) * inv_sigma


class Dropout(Layer):
    """Inverted dropout: kept units scale by 1/(1-rate) at train time."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValidationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._tape = (None,)
            return x
        if rng is None:
            raise ValidationError("dropout in train mode requires an rng")
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype)
        keep /= 1.0 - self.rate
        self._tape = (keep,)
        return x * keep

    def backward(self, dy: np.ndarray) -> np.ndarray:
        (keep,) = self._pop_tape()
        return dy if keep is None else dy * keep


class L2NormalizeRows(Layer):
    """Scale each row to unit Euclidean norm; norms accumulate at float64."""

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x64 = np.asarray(x, dtype=np.float64)
        norm = np.sqrt((x64 * x64).sum(axis=-1, keepdims=True))
        norm = np.maximum(norm, 1e-12).astype(x.dtype, copy=False)
        y = x / norm
        self._tape = (y, norm)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y, norm = self._pop_tape()
        return (dy - y * (dy * y).sum(axis=-1, keepdims=True)) / norm


class MultiHeadSelfAttention(Layer):
    """Bidirectional scaled dot-product attention over the whole sequence.

    No masking: every token attends to every other, as segmentation context
    flows both forward and backward through a book.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValidationError(
                f"d_model {d_model} not divisible by n_heads {n_heads}"
            )
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng, dtype)
        self.wk = Linear(d_model, d_model, rng, dtype)
        self.wv = Linear(d_model, d_model, rng, dtype)
        self.wo = Linear(d_model, d_model, rng, dtype)

    def params(self):
        return _collect([("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)])

    def _split(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        return x.reshape(n, self.n_heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(-1, self.d_model)

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.d_model:
            raise ValidationError(
                f"attention expects (n, {self.d_model}) input, got {x.shape}"
            )
        q = self._split(self.wq.forward(x))  # (h, n, d_head)
        k = self._split(self.wk.forward(x))
        v = self._split(self.wv.forward(x))
        scale = 1.0 / math.sqrt(self.d_head)
        attn = softmax_rows(q @ k.transpose(0, 2, 1) * scale)  # (h, n, n)
        ctx = self._merge(attn @ v)  # (n, d_model)
        self._tape = (q, k, v, attn, scale)
        return self.wo.forward(ctx)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        q, k, v, attn, scale = self._pop_tape()
        dctx = self._split(self.wo.backward(dy))  # (h, n, d_head)
        dattn = dctx @ v.transpose(0, 2, 1)
        dv = attn.transpose(0, 2, 1) @ dctx
        ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        ds *= scale
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        dx = self.wq.backward(self._merge(dq))
        dx += self.wk.backward(self._merge(dk))
        dx += self.wv.backward(self._merge(dv))
        return dx


class FeedForward(Layer):
    """Position-wise two-layer network: Linear -> GELU -> Linear."""

    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.inner = Linear(d_model, d_ff, rng, dtype)
        self.act = GELU()
        self.outer = Linear(d_ff, d_model, rng, dtype)

    def params(self):
        return _collect([("inner", self.inner), ("outer", self.outer)])

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        return self.outer.forward(self.act.forward(self.inner.forward(x)))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.inner.backward(self.act.backward(self.outer.backward(dy)))


class EncoderLayer(Layer):
    """Pre-LayerNorm residual block: attention sublayer then feed-forward.

    x = x + Dropout(Attn(LN(x))); x = x + Dropout(FFN(LN(x)))
    """

    def __init__(self, d_model: int, d_ff: int, n_heads: int, dropout: float,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.ln1 = LayerNorm(d_model, dtype=dtype)
        self.attn = MultiHeadSelfAttention(d_model, n_heads, rng, dtype)
        self.drop1 = Dropout(dropout)
        self.ln2 = LayerNorm(d_model, dtype=dtype)
        self.ffn = FeedForward(d_model, d_ff, rng, dtype)
        self.drop2 = Dropout(dropout)

    def params(self):
        return _collect([
            ("ln1", self.ln1), ("attn", self.attn),
            ("ln2", self.ln2), ("ffn", self.ffn),
        ])

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        h = x + self.drop1.forward(self.attn.forward(self.ln1.forward(x), train, rng), train, rng)
        return h + self.drop2.forward(self.ffn.forward(self.ln2.forward(h), train, rng), train, rng)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dh = dy + self.ln2.backward(self.ffn.backward(self.drop2.backward(dy)))
        return dh + self.ln1.backward(self.attn.backward(self.drop1.backward(dh)))


class Encoder(Layer):
    """Stack of encoder layers with a final LayerNorm."""

    def __init__(self, n_layers: int, d_model: int, d_ff: int, n_heads: int,
                 dropout: float, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.layers = [
            EncoderLayer(d_model, d_ff, n_heads, dropout, rng, dtype)
            for _ in range(n_layers)
        ]
        self.final_ln = LayerNorm(d_model, dtype=dtype)

    def params(self):
        children = [(f"layer{i}", layer) for i, layer in enumerate(self.layers)]
        children.append(("final_ln", self.final_ln))
        return _collect(children)

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return self.final_ln.forward(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.final_ln.backward(dy)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d
