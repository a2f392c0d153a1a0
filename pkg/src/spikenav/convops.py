"""Strided 2-D convolution primitives on (B, C, H, W) arrays.

Forward convolution is im2col + matmul; the transposed convolution and the
conv input-gradient are the exact adjoint (col2im scatter).  Patch matrices
use the (B, C*k*k, positions) layout so that gather/scatter decompose into
k*k strided block copies with contiguous inner dimensions, and all heavy
arithmetic is batched GEMM.  Shapes follow the usual arithmetic:
out = (in + 2*pad - k) // stride + 1.

When torch is importable its conv kernels are used as a faster arithmetic
backend for the same operations (values only; all differentiation in this
package remains the hand-written recursion in snn.layers).  Set
SPIKENAV_NO_TORCH=1 to force the pure-numpy path.
"""

from __future__ import annotations

import os

import numpy as np

try:  # arithmetic backend only, never autograd
    if os.environ.get("SPIKENAV_NO_TORCH"):
        raise ImportError
    import torch
    import torch.nn.functional as _F
    import torch.nn.grad as _G

    _TORCH = True
except ImportError:
    _TORCH = False


def _t(a: np.ndarray, dtype=None):
    if dtype is not None and a.dtype != dtype:
        a = a.astype(dtype)
    return torch.from_numpy(np.ascontiguousarray(a))


def conv_out_size(in_size: int, kernel: int, pad: int, stride: int) -> int:
    out = (in_size + 2 * pad - kernel) // stride + 1
    if out <= 0:
        raise ValueError(
            f"non-positive conv output size for in={in_size}, k={kernel}, pad={pad}, stride={stride}"
        )
    return out


def tconv_out_size(in_size: int, kernel: int, pad: int, stride: int) -> int:
    return (in_size - 1) * stride - 2 * pad + kernel


def _pad_hw(h: int, w: int, k: int, pad: int, stride: int, oh: int, ow: int):
    """Padded canvas large enough for all strided windows (>= h + 2*pad)."""
    return max(h + 2 * pad, (oh - 1) * stride + k), max(w + 2 * pad, (ow - 1) * stride + k)


def im2col(x: np.ndarray, k: int, pad: int, stride: int) -> np.ndarray:
    """(B, C, H, W) -> (B, C*k*k, oh*ow) patch matrix."""
    b, c, h, w = x.shape
    oh = conv_out_size(h, k, pad, stride)
    ow = conv_out_size(w, k, pad, stride)
    ph, pw = _pad_hw(h, w, k, pad, stride, oh, ow)
    if ph != h or pw != w:
        padded = np.zeros((b, c, ph, pw), dtype=x.dtype)
        padded[:, :, pad:pad + h, pad:pad + w] = x
    else:
        padded = x
    patches = np.empty((b, c, k, k, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            patches[:, :, i, j] = padded[:, :, i:i + stride * oh:stride,
                                         j:j + stride * ow:stride]
    return patches.reshape(b, c * k * k, oh * ow)


def col2im(cols: np.ndarray, x_shape, k: int, pad: int, stride: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add (B, C*k*k, oh*ow) back to (B, C, H, W)."""
    b, c, h, w = x_shape
    oh = conv_out_size(h, k, pad, stride)
    ow = conv_out_size(w, k, pad, stride)
    ph, pw = _pad_hw(h, w, k, pad, stride, oh, ow)
    patches = cols.reshape(b, c, k, k, oh, ow)
    padded = np.zeros((b, c, ph, pw), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            padded[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                patches[:, :, i, j]
    return padded[:, :, pad:pad + h, pad:pad + w]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None, pad: int, stride: int) -> np.ndarray:
    """weight (Cout, Cin, k, k) applied to x (B, Cin, H, W) -> (B, Cout, oh, ow)."""
    b, cin, h, w = x.shape
    cout, cin_w, k, _ = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv input has {cin} channels, weight expects {cin_w}")
    if _TORCH:
        with torch.no_grad():
            out = _F.conv2d(_t(x, weight.dtype), _t(weight),
                            None if bias is None else _t(bias, weight.dtype),
                            stride=stride, padding=pad)
        return out.numpy()
    cols = im2col(x, k, pad, stride)                    # (B, Cin*k*k, P)
    out = weight.reshape(cout, -1) @ cols               # (B, Cout, P)
    oh = conv_out_size(h, k, pad, stride)
    ow = conv_out_size(w, k, pad, stride)
    out = out.reshape(b, cout, oh, ow)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def conv2d_backward(
    x: np.ndarray,
    weight: np.ndarray,
    grad_out: np.ndarray,
    pad: int,
    stride: int,
    need_dx: bool = True,
):
    """Gradients of conv2d: returns (dx, dweight, dbias)."""
    b, cin, h, w = x.shape
    cout, _, k, _ = weight.shape
    dbias = grad_out.sum(axis=(0, 2, 3))
    if _TORCH:
        with torch.no_grad():
            xt = _t(x, weight.dtype)
            gt = _t(grad_out, weight.dtype)
            dweight = _G.conv2d_weight(xt, weight.shape, gt,
                                       stride=stride, padding=pad).numpy()
            dx = None
            if need_dx:
                dx = _G.conv2d_input(x.shape, _t(weight), gt,
                                     stride=stride, padding=pad).numpy()
        return dx, dweight, dbias
    g = grad_out.reshape(b, cout, -1)                      # (B, Cout, P)
    cols = im2col(x, k, pad, stride)                       # (B, Cin*k*k, P)
    dweight = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    dx = None
    if need_dx:
        dcols = weight.reshape(cout, -1).T @ g             # (B, Cin*k*k, P)
        dx = col2im(dcols, x.shape, k, pad, stride)
    return dx, dweight, dbias


def tconv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None, pad: int, stride: int) -> np.ndarray:
    """Transposed conv: weight (Cin, Cout, k, k), x (B, Cin, h, w) -> (B, Cout, H, W).

    Implemented as the adjoint of conv2d's forward, so tconv2d(x) equals the
    input-gradient of a conv with the same geometry.
    """
    b, cin, h, w = x.shape
    cin_w, cout, k, _ = weight.shape
    if cin != cin_w:
        raise ValueError(f"tconv input has {cin} channels, weight expects {cin_w}")
    if _TORCH:
        with torch.no_grad():
            out = _F.conv_transpose2d(_t(x, weight.dtype), _t(weight),
                                      None if bias is None else _t(bias, weight.dtype),
                                      stride=stride, padding=pad)
        return out.numpy()
    oh = tconv_out_size(h, k, pad, stride)
    ow = tconv_out_size(w, k, pad, stride)
    flat = x.reshape(b, cin, -1)                           # (B, Cin, p)
    dcols = weight.reshape(cin, -1).T @ flat               # (B, Cout*k*k, p)
    out = col2im(dcols, (b, cout, oh, ow), k, pad, stride)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def tconv2d_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray, pad: int, stride: int):
    """Gradients of tconv2d: returns (dx, dweight, dbias)."""
    b, cin, h, w = x.shape
    cin_w, cout, k, _ = weight.shape
    dbias = grad_out.sum(axis=(0, 2, 3))
    if _TORCH:
        # tconv is the adjoint of a conv mapping grad_out-space to x-space,
        # so its gradients are that conv's forward (dx) and weight grad
        with torch.no_grad():
            xt = _t(x, weight.dtype)
            gt = _t(grad_out, weight.dtype)
            dx = _F.conv2d(gt, _t(weight), stride=stride, padding=pad).numpy()
            dweight = _G.conv2d_weight(gt, weight.shape, xt,
                                       stride=stride, padding=pad).numpy()
        return dx, dweight, dbias
    cols = im2col(grad_out, k, pad, stride)                # (B, Cout*k*k, p)
    flat = x.reshape(b, cin, -1)                           # (B, Cin, p)
    dweight = np.matmul(flat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    dx = np.matmul(weight.reshape(cin, -1), cols).reshape(x.shape)
    return dx, dweight, dbias
