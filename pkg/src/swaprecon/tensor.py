"""Dense rank-4 tensor kernels with analytic backward passes.

Every array in this layer is a float64 ndarray in (batch, channel, height,
width) layout.  All functions are pure: inputs are never mutated, and every
forward operation has a matching backward that computes exact analytic
gradients (verified against central finite differences in the test suite).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

# Sigmoid output is clamped into the open interval (0, 1) so saturated
# logits can never produce an exact 0.0 or 1.0 probability.
_SIG_FLOOR = np.finfo(np.float64).tiny
_SIG_CEIL = float(np.nextafter(1.0, 0.0))


def require_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate the (n, c, h, w) layout contract and return the array."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be rank-4 (n, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: shape {x.shape}")
    return x


@dataclass
class ConvParams:
    """Weights and bias of one 2-D convolution (cross-correlation).

    weights has shape (c_out, c_in, kh, kw) with kh == kw in {1, 3};
    bias is a length-c_out vector or None.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ValueError(f"conv weights must be rank-4, got {self.weights.shape}")
        if self.kh not in (1, 3) or self.kw not in (1, 3):
            raise ValueError(f"kernel sizes limited to 1 and 3, got {self.kh}x{self.kw}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.c_out,):
                raise ValueError(
                    f"bias shape {self.bias.shape} does not match c_out={self.c_out}"
                )

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def kh(self) -> int:
        return self.weights.shape[2]

    @property
    def kw(self) -> int:
        return self.weights.shape[3]

    @property
    def parameter_count(self) -> int:
        n = self.weights.size
        if self.bias is not None:
            n += self.bias.size
        return n

    @classmethod
    def init(cls, rng: np.random.Generator, c_in: int, c_out: int, k: int,
             bias: bool = True) -> "ConvParams":
        """He-normal weight init; zero bias."""
        std = np.sqrt(2.0 / (c_in * k * k))
        w = rng.normal(0.0, std, size=(c_out, c_in, k, k))
        b = np.zeros(c_out) if bias else None
        return cls(w, b)


def param_count(obj) -> int:
    """Exact number of trainable scalars held by *obj*.

    Accepts anything exposing a ``parameter_count`` property (ConvParams,
    SwapPermutation, SwapNNParams, network containers, ...).
    """
    count = getattr(obj, "parameter_count", None)
    if count is None:
        raise TypeError(f"cannot count parameters of {type(obj).__name__}")
    return int(count)


def _same_padding(k: int) -> int:
    return (k - 1) // 2


def _im2col(x: np.ndarray, kh: int, kw: int, padding: int) -> np.ndarray:
    """Unfold (n, c, h, w) into (n, c*kh*kw, h_out*w_out) patch columns."""
    n, c, h, w = x.shape
    if kh == 1 and kw == 1 and padding == 0:
        return x.reshape(n, c, h * w)  # 1x1 unfold is a free reshape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = h + 2 * padding - kh + 1
    w_out = w + 2 * padding - kw + 1
    cols = np.empty((n, c, kh, kw, h_out, w_out), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + h_out, j:j + w_out]
    return cols.reshape(n, c * kh * kw, h_out * w_out)


def _col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, padding: int) -> np.ndarray:
    """Scatter-add patch columns back onto the (padded) input grid."""
    n, c, h, w = x_shape
    h_out = h + 2 * padding - kh + 1
    w_out = w + 2 * padding - kw + 1
    grid = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    cols = cols.reshape(n, c, kh, kw, h_out, w_out)
    for i in range(kh):
        for j in range(kw):
            grid[:, :, i:i + h_out, j:j + w_out] += cols[:, :, i, j]
    if padding:
        grid = grid[:, :, padding:padding + h, padding:padding + w]
    return grid


def conv2d_forward(x: np.ndarray, p: ConvParams, padding: int | None = None,
                   cache: dict | None = None) -> np.ndarray:
    """2-D cross-correlation of x with p.weights, plus bias.

    With the default padding (k-1)//2 the spatial size is preserved.
    Passing a dict as *cache* stores the unfolded input columns so a
    following conv2d_backward call can skip recomputing them.
    """
    x = require_tensor4(x, "conv input")
    if x.shape[1] != p.c_in:
        raise ValueError(f"conv expects {p.c_in} input channels, got {x.shape[1]}")
    if padding is None:
        padding = _same_padding(p.kh)
    n, _, h, w = x.shape
    h_out = h + 2 * padding - p.kh + 1
    w_out = w + 2 * padding - p.kw + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(f"conv output would be empty for input {x.shape}")
    cols = _im2col(x, p.kh, p.kw, padding)
    if cache is not None:
        cache["cols"] = cols
    w2d = p.weights.reshape(p.c_out, -1)
    out = np.matmul(w2d, cols).reshape(n, p.c_out, h_out, w_out)
    if p.bias is not None:
        out += p.bias[None, :, None, None]
    return out


def conv2d_backward(x: np.ndarray, p: ConvParams, grad_out: np.ndarray,
                    padding: int | None = None, cache: dict | None = None):
    """Gradients of conv2d_forward w.r.t. input, weights, and bias.

    Returns (grad_x, grad_weights, grad_bias); grad_bias is None when the
    convolution has no bias.  *cache* may carry the columns produced by the
    matching forward call.
    """
    x = require_tensor4(x, "conv input")
    grad_out = require_tensor4(grad_out, "conv grad_out")
    if padding is None:
        padding = _same_padding(p.kh)
    n, _, h, w = x.shape
    h_out = h + 2 * padding - p.kh + 1
    w_out = w + 2 * padding - p.kw + 1
    if grad_out.shape != (n, p.c_out, h_out, w_out):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match forward output "
            f"{(n, p.c_out, h_out, w_out)}"
        )
    if cache is not None and "cols" in cache:
        cols = cache["cols"]
    else:
        cols = _im2col(x, p.kh, p.kw, padding)
    g2d = grad_out.reshape(n, p.c_out, -1)
    w2d = p.weights.reshape(p.c_out, -1)

    grad_w = np.matmul(g2d, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.weights.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3)) if p.bias is not None else None
    grad_cols = np.matmul(w2d.T, g2d)
    grad_x = _col2im(grad_cols, x.shape, p.kh, p.kw, padding)
    return grad_x, grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; subgradient at exactly 0 is 0."""
    return np.where(x > 0.0, grad_out, 0.0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, clamped strictly inside (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIG_FLOOR, _SIG_CEIL)


def sigmoid_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward through sigmoid given its output y: y*(1-y)*grad_out."""
    return y * (1.0 - y) * grad_out


def downsample2_forward(x: np.ndarray) -> np.ndarray:
    """2x2 max pool, stride 2. Spatial dims must be even."""
    x = require_tensor4(x, "pool input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"downsample2 needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))


def downsample2_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Route each output gradient to the first max inside its 2x2 block."""
    x = require_tensor4(x, "pool input")
    n, c, h, w = x.shape
    blocks = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = blocks.argmax(axis=-1)
    grad_blocks = np.zeros_like(blocks)
    np.put_along_axis(grad_blocks, idx[..., None], grad_out[..., None], axis=-1)
    return (
        grad_blocks.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


@functools.lru_cache(maxsize=None)
def _upsample_matrix(size: int) -> np.ndarray:
    """Row-stochastic (2*size, size) matrix of 2x bilinear interpolation weights.

    Output sample o reads the source at (o + 0.5)/2 - 0.5, clamped to the
    grid, with standard two-point linear weights on the enclosing cell.
    """
    mat = np.zeros((2 * size, size), dtype=np.float64)
    for o in range(2 * size):
        src = (o + 0.5) / 2.0 - 0.5
        src = min(max(src, 0.0), size - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, size - 1)
        frac = src - lo
        mat[o, lo] += 1.0 - frac
        mat[o, hi] += frac
    return mat


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling along both spatial axes."""
    x = require_tensor4(x, "upsample input")
    rows = _upsample_matrix(x.shape[2])
    cols = _upsample_matrix(x.shape[3])
    return np.matmul(np.matmul(rows, x), cols.T)


def upsample2_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Transpose of the bilinear upsampling map."""
    x = require_tensor4(x, "upsample input")
    rows = _upsample_matrix(x.shape[2])
    cols = _upsample_matrix(x.shape[3])
    if grad_out.shape != (x.shape[0], x.shape[1], 2 * x.shape[2], 2 * x.shape[3]):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match 2x upsample")
    return np.matmul(np.matmul(rows.T, grad_out), cols)
