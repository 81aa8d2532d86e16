"""Numpy neural-network layers with hand-derived backward passes.

Layout conventions: images are NHWC, dense activations are (N, F). Every
layer caches what its backward pass needs during forward; backward returns
the gradient with respect to the layer input and accumulates parameter
gradients into Param.grad.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray

    @classmethod
    def of(cls, name: str, value: np.ndarray) -> "Param":
        return cls(name, value, np.zeros_like(value))


class Layer:
    """Common surface: forward / backward / params / buffers."""

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that belongs in a checkpoint."""
        return {}


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(out_size, pad_begin, pad_end) so that out = ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    begin = total // 2
    return out, begin, total - begin


def _build_patch_kernels():
    """Compiled im2col/col2im; the numpy fallbacks below stay the reference."""
    try:
        from numba import njit
    except ImportError:
        return None, None

    @njit(cache=True)
    def gather(xp2, cols, oh, ow, k, s, c):
        # xp2: (n, hp, wp*c) contiguous; cols: (n*oh*ow, k*k*c).
        n = xp2.shape[0]
        kc = k * c
        for ni in range(n):
            for o1 in range(oh):
                base = (ni * oh + o1) * ow
                for i in range(k):
                    src_r = o1 * s + i
                    dst0 = i * kc
                    row = xp2[ni, src_r]
                    for o2 in range(ow):
                        src0 = o2 * s * c
                        dst = cols[base + o2]
                        for t in range(kc):
                            dst[dst0 + t] = row[src0 + t]

    @njit(cache=True)
    def scatter_add(dcols2, dxp2, oh, ow, k, s, c):
        # dcols2: (n*oh*ow, k*k*c); dxp2: (n, hp, wp*c).
        n = dxp2.shape[0]
        kc = k * c
        for ni in range(n):
            for o1 in range(oh):
                base = (ni * oh + o1) * ow
                for i in range(k):
                    src_r = o1 * s + i
                    src0 = i * kc
                    row = dxp2[ni, src_r]
                    for o2 in range(ow):
                        dst0 = o2 * s * c
                        src = dcols2[base + o2]
                        for t in range(kc):
                            row[dst0 + t] += src[src0 + t]

    return gather, scatter_add


_im2col_jit, _col2im_jit = _build_patch_kernels()


def _build_bn_kernels():
    try:
        from numba import njit
    except ImportError:
        return None

    @njit(cache=True)
    def stats(flat, sums):
        # sums: (2, C) float64; row 0 collects x, row 1 collects x*x.
        n, c = flat.shape
        for j in range(c):
            sums[0, j] = 0.0
            sums[1, j] = 0.0
        for i in range(n):
            for j in range(c):
                v = flat[i, j]
                sums[0, j] += v
                sums[1, j] += v * v

    @njit(cache=True)
    def normalize(flat, mean, inv):
        n, c = flat.shape
        for i in range(n):
            for j in range(c):
                flat[i, j] = (flat[i, j] - mean[j]) * inv[j]

    @njit(cache=True)
    def affine(xhat, gamma, beta, out):
        n, c = xhat.shape
        for i in range(n):
            for j in range(c):
                out[i, j] = xhat[i, j] * gamma[j] + beta[j]

    @njit(cache=True)
    def grad_sums(grad, xhat, sums):
        # sums: (2, C) float64; row 0 = sum(grad), row 1 = sum(grad * xhat).
        n, c = grad.shape
        for j in range(c):
            sums[0, j] = 0.0
            sums[1, j] = 0.0
        for i in range(n):
            for j in range(c):
                g = grad[i, j]
                sums[0, j] += g
                sums[1, j] += g * xhat[i, j]

    @njit(cache=True)
    def grad_input(grad, xhat, mean_g, mean_gx, scale):
        n, c = grad.shape
        for i in range(n):
            for j in range(c):
                grad[i, j] = (grad[i, j] - mean_g[j] - xhat[i, j] * mean_gx[j]) * scale[j]

    class Kernels:
        pass

    k = Kernels()
    k.stats = stats
    k.normalize = normalize
    k.affine = affine
    k.grad_sums = grad_sums
    k.grad_input = grad_input
    return k


_bn_jit = _build_bn_kernels()


def im2col(xp: np.ndarray, kernel: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Padded NHWC image block to (N*OH*OW, k*k*C) patch matrix."""
    n, hp, wp, c = xp.shape
    if _im2col_jit is not None:
        cols = np.empty((n * oh * ow, kernel * kernel * c), dtype=xp.dtype)
        _im2col_jit(xp.reshape(n, hp, wp * c), cols, oh, ow, kernel, stride, c)
        return cols
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(
        win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kernel * kernel * c)
    )


def col2im(
    dcols: np.ndarray, padded_shape: tuple, kernel: int, stride: int, oh: int, ow: int
) -> np.ndarray:
    """Transpose of im2col: scatter-add patch gradients back onto the pad."""
    n, hp, wp, c = padded_shape
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    if _col2im_jit is not None:
        _col2im_jit(dcols, dxp.reshape(n, hp, wp * c), oh, ow, kernel, stride, c)
        return dxp
    d6 = dcols.reshape(n, oh, ow, kernel, kernel, c)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += d6[
                :, :, :, i, j, :
            ]
    return dxp


class Conv2d(Layer):
    """Stride-s convolution with same padding, via im2col and one GEMM.

    input_grad=False skips the gradient with respect to the layer input,
    which the first layer of a network never needs.
    """

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int, stride: int,
                 rng: np.random.Generator, dtype=np.float32, input_grad: bool = True):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.input_grad = input_grad
        scale = np.sqrt(2.0 / (kernel * kernel * in_ch))
        w = rng.normal(0.0, scale, (kernel, kernel, in_ch, out_ch)).astype(dtype)
        self.w = Param.of(f"{name}.w", w)
        self.b = Param.of(f"{name}.b", np.zeros(out_ch, dtype=dtype))
        self._cols: np.ndarray | None = None
        self._x_shape: tuple | None = None
        self._pads: tuple | None = None

    def forward(self, x, train, rng=None):
        n, h, w_in, _ = x.shape
        k, s = self.kernel, self.stride
        oh, pt, pb = same_padding(h, k, s)
        ow, pl, pr = same_padding(w_in, k, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        cols = im2col(xp, k, s, oh, ow)
        out = cols @ self.w.value.reshape(-1, self.out_ch) + self.b.value
        self._cols = cols
        self._x_shape = x.shape
        self._pads = (pt, pb, pl, pr, oh, ow)
        return out.reshape(n, oh, ow, self.out_ch)

    def backward(self, grad):
        n, h, w_in, _ = self._x_shape
        k, s = self.kernel, self.stride
        pt, pb, pl, pr, oh, ow = self._pads
        g = grad.reshape(n * oh * ow, self.out_ch)
        self.w.grad += (self._cols.T @ g).reshape(self.w.value.shape)
        self.b.grad += g.sum(axis=0)
        self._cols = None
        if not self.input_grad:
            return None
        dcols = g @ self.w.value.reshape(-1, self.out_ch).T
        dxp = col2im(dcols, (n, h + pt + pb, w_in + pl + pr, self.in_ch), k, s, oh, ow)
        return dxp[:, pt : pt + h, pl : pl + w_in, :]

    def params(self):
        return [self.w, self.b]


class Dense(Layer):
    def __init__(self, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.name = name
        scale = np.sqrt(2.0 / in_features)
        w = rng.normal(0.0, scale, (in_features, out_features)).astype(dtype)
        self.w = Param.of(f"{name}.w", w)
        self.b = Param.of(f"{name}.b", np.zeros(out_features, dtype=dtype))
        self._x: np.ndarray | None = None

    def forward(self, x, train, rng=None):
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, grad):
        self.w.grad += self._x.T @ grad
        self.b.grad += grad.sum(axis=0)
        self._x = None
        return grad @ self.w.value.T

    def params(self):
        return [self.w, self.b]


class ReLU(Layer):
    """Clamps in place; safe because upstream layers never reuse their output."""

    def forward(self, x, train, rng=None):
        self._mask = x > 0
        return np.maximum(x, 0, out=x)

    def backward(self, grad):
        grad *= self._mask
        return grad


class BatchNorm(Layer):
    """Normalizes over all axes but the last; works for NHWC and (N, F)."""

    def __init__(self, name: str, channels: int, momentum: float = 0.1,
                 eps: float = 1e-5, dtype=np.float32):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param.of(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Param.of(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, train, rng=None):
        c = x.shape[-1]
        # reshape on a non-contiguous array would copy, silently detaching
        # `flat` from x; everything below assumes they alias.
        if not x.flags.c_contiguous:
            x = np.ascontiguousarray(x)
        flat = x.reshape(-1, c)
        if train:
            n = flat.shape[0]
            if _bn_jit is not None:
                sums = np.empty((2, c), dtype=np.float64)
                _bn_jit.stats(flat, sums)
                mean = sums[0] / n
                var = np.maximum(sums[1] / n - mean * mean, 0.0)
            else:
                mean = flat.sum(axis=0, dtype=np.float64) / n
                var = np.maximum(
                    np.einsum("nc,nc->c", flat, flat, dtype=np.float64) / n - mean * mean, 0.0
                )
            m = self.momentum
            self.running_mean += (m * (mean - self.running_mean)).astype(self.running_mean.dtype)
            self.running_var += (m * (var - self.running_var)).astype(self.running_var.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        mean = np.asarray(mean, dtype=x.dtype)
        # Normalize in place: the upstream activation never reuses its output.
        if _bn_jit is not None:
            _bn_jit.normalize(flat, mean, inv)
        else:
            flat -= mean
            flat *= inv
        xhat = x
        self._cache = (xhat, inv, train)
        out = np.empty_like(x)
        if _bn_jit is not None:
            _bn_jit.affine(flat, self.gamma.value, self.beta.value, out.reshape(-1, c))
        else:
            np.multiply(xhat, self.gamma.value, out=out)
            out += self.beta.value
        return out

    def backward(self, grad):
        xhat, inv, train = self._cache
        c = grad.shape[-1]
        # Same aliasing requirement as forward: g2 must be a view of grad,
        # because the input-gradient transform below writes through it.
        if not grad.flags.c_contiguous:
            grad = np.ascontiguousarray(grad)
        g2 = grad.reshape(-1, c)
        x2 = xhat.reshape(-1, c)
        if _bn_jit is not None:
            sums = np.empty((2, c), dtype=np.float64)
            _bn_jit.grad_sums(g2, x2, sums)
            dbeta = sums[0]
            dgamma = sums[1]
        else:
            dbeta = g2.sum(axis=0, dtype=np.float64)
            dgamma = np.einsum("nc,nc->c", g2, x2, dtype=np.float64)
        self.beta.grad += dbeta.astype(self.beta.grad.dtype)
        self.gamma.grad += dgamma.astype(self.gamma.grad.dtype)
        if not train:
            grad *= self.gamma.value * inv
            return grad
        n = g2.shape[0]
        scale = self.gamma.value * inv
        mean_g = (dbeta / n).astype(grad.dtype)
        mean_gx = (dgamma / n).astype(grad.dtype)
        if _bn_jit is not None:
            _bn_jit.grad_input(g2, x2, mean_g, mean_gx, scale)
        else:
            grad -= mean_g
            grad -= xhat * mean_gx
            grad *= scale
        self._cache = None
        return grad

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask: np.ndarray | None = None

    def forward(self, x, train, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training forward through dropout needs an rng")
        keep = 1.0 - self.rate
        dtype = np.float32 if x.dtype == np.float32 else np.float64
        self._mask = rng.random(x.shape, dtype=dtype) < keep
        self._scale = np.asarray(1.0 / keep, dtype=x.dtype)
        x *= self._mask
        x *= self._scale
        return x

    def backward(self, grad):
        if self._mask is None:
            return grad
        grad *= self._mask
        grad *= self._scale
        return grad


class Flatten(Layer):
    def forward(self, x, train, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, train, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def buffers(self):
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out
