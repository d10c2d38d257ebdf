"""Dense tensor kernels with hand-derived backward passes.

Exactly the operations the detector needs: dilated 3D convolution, 1x2x2
spatial max pooling, row-shared dense layers, ReLU, row softmax and
cross-entropy from logits.

Conventions:
  * activations are channels-last ``[T, H, W, C]``, row-major;
  * every op allocates its output, inputs are never resized;
  * ops preserve the floating dtype of their inputs, so the float32
    production path and the float64 gradient-check path run the same code;
  * convolution padding is zero, pooling drops odd trailing rows/columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

KERNEL_EXTENT = 3  # the only supported kernel size is 3x3x3


@dataclass
class ConvKernel:
    """A 3x3x3 convolution: weights [3,3,3,Cin,Cout], bias [Cout].

    ``temporal_dilation`` spaces the time-axis taps at {-d, 0, +d}; spatial
    taps are always {-1, 0, +1}.
    """

    weights: np.ndarray
    bias: np.ndarray
    temporal_dilation: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 5 or w.shape[:3] != (3, 3, 3):
            raise ValueError(f"kernel weights must be [3,3,3,Cin,Cout], got {w.shape}")
        b = np.asarray(self.bias)
        if b.shape != (w.shape[4],):
            raise ValueError(
                f"bias shape {b.shape} does not match kernel output channels {w.shape[4]}"
            )
        if self.temporal_dilation < 1:
            raise ValueError(f"temporal dilation must be >= 1, got {self.temporal_dilation}")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[3]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[4]


def _pad_for_conv(x: np.ndarray, dilation: int) -> np.ndarray:
    """Zero-pad so every tap of the 3x3x3 stencil stays in bounds."""
    t, h, w, c = x.shape
    xp = np.zeros((t + 2 * dilation, h + 2, w + 2, c), dtype=x.dtype)
    xp[dilation : dilation + t, 1 : 1 + h, 1 : 1 + w] = x
    return xp


def conv3d_forward(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Dilated 3x3x3 convolution, stride 1, 'same' zero padding.

    Input [T,H,W,Cin] -> output [T,H,W,Cout].
    """
    if x.ndim != 4:
        raise ValueError(f"conv3d input must be rank 4 [T,H,W,C], got shape {x.shape}")
    w = kernel.weights
    if x.shape[3] != kernel.in_channels:
        raise ValueError(
            f"input shape {x.shape} has {x.shape[3]} channels but kernel shape "
            f"{w.shape} expects {kernel.in_channels}"
        )
    t, h, wd, _ = x.shape
    d = kernel.temporal_dilation
    xp = _pad_for_conv(x, d)
    out = np.empty((t, h, wd, kernel.out_channels), dtype=np.result_type(x, w))
    out[...] = kernel.bias
    # Padded input makes every tap a full-size shifted view; accumulate one
    # matmul per tap.
    for kt in range(3):
        for kh in range(3):
            for kw in range(3):
                out += xp[kt * d : kt * d + t, kh : kh + h, kw : kw + wd] @ w[kt, kh, kw]
    return out


def conv3d_backward(
    x: np.ndarray, kernel: ConvKernel, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv3d_forward: returns (grad_input, grad_weights, grad_bias)."""
    if x.ndim != 4:
        raise ValueError(f"conv3d input must be rank 4 [T,H,W,C], got shape {x.shape}")
    w = kernel.weights
    t, h, wd, _ = x.shape
    expected = (t, h, wd, kernel.out_channels)
    if grad_out.shape != expected:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match output {expected}")
    d = kernel.temporal_dilation
    xp = _pad_for_conv(x, d)
    dtype = np.result_type(x, w, grad_out)
    grad_w = np.empty(w.shape, dtype=dtype)
    grad_xp = np.zeros(xp.shape, dtype=dtype)
    for kt in range(3):
        for kh in range(3):
            for kw in range(3):
                sl = (
                    slice(kt * d, kt * d + t),
                    slice(kh, kh + h),
                    slice(kw, kw + wd),
                )
                grad_w[kt, kh, kw] = np.tensordot(xp[sl], grad_out, axes=([0, 1, 2], [0, 1, 2]))
                grad_xp[sl] += grad_out @ w[kt, kh, kw].T
    grad_x = np.ascontiguousarray(grad_xp[d : d + t, 1 : 1 + h, 1 : 1 + wd])
    grad_b = grad_out.sum(axis=(0, 1, 2))
    return grad_x, grad_w, grad_b


def _pool_windows(x: np.ndarray) -> np.ndarray:
    """Regroup [T,H,W,C] into [T,H//2,W//2,4,C]; window axis is in row-major
    scan order (h0w0, h0w1, h1w0, h1w1). Odd trailing rows/columns are dropped."""
    t, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    v = x[:, : 2 * ho, : 2 * wo, :].reshape(t, ho, 2, wo, 2, c)
    return v.transpose(0, 1, 3, 2, 4, 5).reshape(t, ho, wo, 4, c)


def maxpool3d_forward(x: np.ndarray) -> np.ndarray:
    """1x2x2 max pooling, stride 1x2x2; output [T, H//2, W//2, C]."""
    if x.ndim != 4:
        raise ValueError(f"maxpool input must be rank 4 [T,H,W,C], got shape {x.shape}")
    if x.shape[1] < 2 or x.shape[2] < 2:
        raise ValueError(f"maxpool needs H >= 2 and W >= 2, got shape {x.shape}")
    return _pool_windows(x).max(axis=3)


def maxpool3d_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Route grad_out to each window's argmax; ties go to the first element
    in row-major scan order. Dropped odd rows/columns get zero gradient."""
    if x.ndim != 4 or x.shape[1] < 2 or x.shape[2] < 2:
        raise ValueError(f"maxpool input must be rank 4 with H,W >= 2, got shape {x.shape}")
    t, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    if grad_out.shape != (t, ho, wo, c):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match pooled shape {(t, ho, wo, c)}"
        )
    idx = _pool_windows(x).argmax(axis=3)  # first maximum wins
    grad_x = np.zeros(x.shape, dtype=grad_out.dtype)
    ti = np.arange(t)[:, None, None, None]
    hi = 2 * np.arange(ho)[None, :, None, None] + idx // 2
    wi = 2 * np.arange(wo)[None, None, :, None] + idx % 2
    ci = np.arange(c)[None, None, None, :]
    grad_x[ti, hi, wi, ci] = grad_out
    return grad_x


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Row-wise affine map [N,K] @ [K,M] + [M]; row i depends only on input row i."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ValueError(f"dense expects 2-D input and weights, got {x.shape} and {weights.shape}")
    if x.shape[1] != weights.shape[0]:
        raise ValueError(f"input shape {x.shape} does not match weights shape {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"bias shape {bias.shape} does not match weights shape {weights.shape}")
    return x @ weights + bias


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of dense_forward: returns (grad_input, grad_weights, grad_bias)."""
    if grad_out.shape != (x.shape[0], weights.shape[1]):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output "
            f"{(x.shape[0], weights.shape[1])}"
        )
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; the gradient at exactly 0 is defined as 0."""
    if grad_out.shape != x.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match input {x.shape}")
    return grad_out * (x > 0)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for stability; rows sum to 1."""
    if logits.ndim != 2:
        raise ValueError(f"softmax expects a 2-D array of row logits, got shape {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient through softmax_rows given its output probabilities."""
    if grad_out.shape != probs.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} does not match probs {probs.shape}")
    dot = (grad_out * probs).sum(axis=1, keepdims=True)
    return probs * (grad_out - dot)


def cross_entropy_from_logits(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over rows, computed in log space.

    ``labels`` is a boolean (or {0,1} integer) vector selecting the true
    column of each row. Returns (loss, grad_logits) with
    grad = (softmax - onehot) / N.
    """
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {logits.shape}")
    labels = np.asarray(labels)
    n = logits.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} logit rows")
    if not np.isfinite(logits).all():
        raise NumericError("cross entropy rejected non-finite logits")
    cls = labels.astype(np.intp)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), cls]))
    grad = np.exp(shifted - lse[:, None])
    grad[np.arange(n), cls] -= 1.0
    grad /= n
    return loss, grad
