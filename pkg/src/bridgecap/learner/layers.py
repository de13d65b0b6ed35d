"""Network layers with explicit forward/backward passes.

Convolution and pooling are vectorized through slice-strided window
gathering (a loop over the kernel footprint, not over pixels), which
keeps a minutes-scale CPU training budget realistic. Every layer caches
what its backward pass needs; gradients mirror parameter shapes.
"""

import numpy as np

from ..errors import InvariantError


class Conv:
    """2-D convolution, zero padding, square stride."""

    def __init__(self, kh, kw, in_ch, out_ch, stride, pad, rng, dtype):
        self.kh, self.kw = kh, kw
        self.in_ch, self.out_ch = in_ch, out_ch
        self.stride, self.pad = stride, pad
        fan_in = in_ch * kh * kw
        fan_out = out_ch * kh * kw
        a = np.sqrt(6.0 / (fan_in + fan_out))
        self.w = rng.uniform(-a, a, size=(out_ch, in_ch, kh, kw)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.dw = None
        self.db = None
        self._cache = None

    @property
    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise InvariantError(f"conv expects {self.in_ch} channels, got {c}")
        oh = (h + 2 * self.pad - self.kh) // self.stride + 1
        ow = (w + 2 * self.pad - self.kw) // self.stride + 1
        return (self.out_ch, oh, ow)

    def forward(self, x):
        n, c, h, w = x.shape
        s, p = self.stride, self.pad
        oh = (h + 2 * p - self.kh) // s + 1
        ow = (w + 2 * p - self.kw) // s + 1
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((n, c, self.kh, self.kw, oh, ow), dtype=x.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                cols[:, :, i, j] = xp[:, :, i : i + s * oh : s, j : j + s * ow : s]
        cols2 = cols.reshape(n, c * self.kh * self.kw, oh * ow)
        wm = self.w.reshape(self.out_ch, -1)
        out = np.matmul(wm, cols2) + self.b[:, None]
        self._cache = (cols2, (n, c, h, w), (oh, ow))
        return out.reshape(n, self.out_ch, oh, ow)

    def backward(self, dout):
        cols2, (n, c, h, w), (oh, ow) = self._cache
        s, p = self.stride, self.pad
        dout2 = dout.reshape(n, self.out_ch, oh * ow)
        self.dw = (
            np.matmul(dout2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape)
        )
        self.db = dout.sum(axis=(0, 2, 3))
        wm = self.w.reshape(self.out_ch, -1)
        dcols = np.matmul(wm.T, dout2).reshape(n, c, self.kh, self.kw, oh, ow)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, i, j]
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class Relu:
    params = []

    def grads(self):
        return []

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class MaxPool:
    """Max pooling; ties go to the first cell in window scan order."""

    params = []

    def __init__(self, k, stride):
        self.k, self.stride = k, stride

    def grads(self):
        return []

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < self.k or w < self.k:
            raise InvariantError(f"pool window {self.k} exceeds input {h}x{w}")
        return (c, (h - self.k) // self.stride + 1, (w - self.k) // self.stride + 1)

    def forward(self, x):
        n, c, h, w = x.shape
        k, s = self.k, self.stride
        oh = (h - k) // s + 1
        ow = (w - k) // s + 1
        windows = np.empty((k * k, n, c, oh, ow), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                windows[i * k + j] = x[:, :, i : i + s * oh : s, j : j + s * ow : s]
        self._arg = windows.argmax(axis=0)
        self._in_shape = x.shape
        return np.take_along_axis(windows, self._arg[None], axis=0)[0]

    def backward(self, dout):
        n, c, h, w = self._in_shape
        k, s = self.k, self.stride
        oh, ow = dout.shape[2], dout.shape[3]
        dx = np.zeros(self._in_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                mask = self._arg == (i * k + j)
                dx[:, :, i : i + s * oh : s, j : j + s * ow : s] += dout * mask
        return dx


class Flatten:
    params = []

    def grads(self):
        return []

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class FullyConnected:
    def __init__(self, n_in, n_out, rng, dtype):
        self.n_in, self.n_out = n_in, n_out
        a = np.sqrt(6.0 / (n_in + n_out))
        self.w = rng.uniform(-a, a, size=(n_in, n_out)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = None
        self.db = None

    @property
    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise InvariantError(f"fc expects ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T


class Softmax:
    """Terminal probability layer. The loss path bypasses its backward
    (softmax and cross-entropy are differentiated together)."""

    params = []

    def grads(self):
        return []

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, z):
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, dout):
        raise InvariantError("softmax backward is folded into the loss gradient")
