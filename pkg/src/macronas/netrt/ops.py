"""Concrete network operations with hand-written forward/backward passes.

Everything computes in float64.  Spatial activations are ``(N, C, H, W)``
arrays, flattened ones ``(N, F)``; an op's ``in_shape``/``out_shape``
exclude the batch axis, so ``(C, H, W)`` means spatial and ``(F,)`` flat.

Each forward call writes what its backward needs into a per-call cache
dict, so the same op instance can serve concurrent (plan, params) pairs.
"""

from __future__ import annotations

import numpy as np

Shape = tuple[int, ...]
EPS_BN = 1e-5
BN_MOMENTUM = 0.1


def conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _pool_indices(h, w, kernel, stride, padding):
    """Row/col gather indices of shape (kernel², out_h·out_w), per channel."""
    out_h = conv_out_size(h, kernel, stride, padding)
    out_w = conv_out_size(w, kernel, stride, padding)
    i0 = np.repeat(np.arange(kernel), kernel)
    j0 = np.tile(np.arange(kernel), kernel)
    i1 = stride * np.repeat(np.arange(out_h), out_w)
    j1 = stride * np.tile(np.arange(out_w), out_h)
    rows = i0[:, None] + i1[None, :]
    cols = j0[:, None] + j1[None, :]
    return rows, cols, out_h, out_w


class Op:
    """Base operation; subclasses fill in shapes, params, and the math."""

    def __init__(self, name: str, in_shape: Shape, out_shape: Shape):
        self.name = name
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)

    def param_shapes(self) -> dict[str, Shape]:
        """Trainable tensors, keyed by local name."""
        return {}

    def buffer_shapes(self) -> dict[str, Shape]:
        """Non-trainable state (e.g. running statistics)."""
        return {}

    def init_params(self, params: dict, rng: np.random.Generator) -> None:
        pass

    def child_ops(self) -> list["Op"]:
        return []

    def forward(self, x, params, mode, rng, cache):
        raise NotImplementedError

    def backward(self, dy, params, cache, grads):
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name}, {self.in_shape}->{self.out_shape})"


class ConvOp(Op):
    def __init__(self, name, in_shape, out_channels, kernel, stride, padding):
        c, h, w = in_shape
        oh = conv_out_size(h, kernel, stride, padding)
        ow = conv_out_size(w, kernel, stride, padding)
        super().__init__(name, in_shape, (out_channels, oh, ow))
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        rows, cols, _, _ = _pool_indices(h, w, kernel, stride, padding)
        # gather indices over (channel, row, col) for im2col
        self._ch = np.repeat(np.arange(c), kernel * kernel)[:, None]
        self._rows = np.tile(rows, (c, 1))
        self._cols = np.tile(cols, (c, 1))

    def param_shapes(self):
        c = self.in_shape[0]
        return {
            "weight": (self.out_shape[0], c, self.kernel, self.kernel),
            "bias": (self.out_shape[0],),
        }

    def init_params(self, params, rng):
        out_ch, c, k, _ = self.param_shapes()["weight"]
        fan_in = c * k * k
        params[f"{self.name}.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, c, k, k))
        params[f"{self.name}.bias"] = np.zeros(out_ch)

    def _im2col(self, x):
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        return xp[:, self._ch, self._rows, self._cols]  # (N, C·k², L)

    def forward(self, x, params, mode, rng, cache):
        n = x.shape[0]
        out_ch, oh, ow = self.out_shape
        cols = self._im2col(x)
        w2 = params[f"{self.name}.weight"].reshape(out_ch, -1)
        y = np.matmul(w2, cols) + params[f"{self.name}.bias"][None, :, None]
        cache["cols"] = cols
        return y.reshape(n, out_ch, oh, ow)

    def backward(self, dy, params, cache, grads):
        n = dy.shape[0]
        out_ch = self.out_shape[0]
        c, h, w = self.in_shape
        cols = cache["cols"]
        dyf = dy.reshape(n, out_ch, -1)
        w2 = params[f"{self.name}.weight"].reshape(out_ch, -1)
        grads[f"{self.name}.weight"] += np.einsum("nol,nfl->of", dyf, cols).reshape(
            params[f"{self.name}.weight"].shape
        )
        grads[f"{self.name}.bias"] += dyf.sum(axis=(0, 2))
        dcols = np.matmul(w2.T, dyf)
        p = self.padding
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        np.add.at(dxp, (slice(None), self._ch, self._rows, self._cols), dcols)
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class LinearOp(Op):
    def __init__(self, name, in_features, out_features):
        super().__init__(name, (in_features,), (out_features,))

    def param_shapes(self):
        return {"weight": (self.out_shape[0], self.in_shape[0]), "bias": (self.out_shape[0],)}

    def init_params(self, params, rng):
        out_f, in_f = self.param_shapes()["weight"]
        params[f"{self.name}.weight"] = rng.normal(0.0, np.sqrt(2.0 / in_f), (out_f, in_f))
        params[f"{self.name}.bias"] = np.zeros(out_f)

    def forward(self, x, params, mode, rng, cache):
        cache["x"] = x
        return x @ params[f"{self.name}.weight"].T + params[f"{self.name}.bias"]

    def backward(self, dy, params, cache, grads):
        grads[f"{self.name}.weight"] += dy.T @ cache["x"]
        grads[f"{self.name}.bias"] += dy.sum(axis=0)
        return dy @ params[f"{self.name}.weight"]


class ReLUOp(Op):
    def __init__(self, name, in_shape):
        super().__init__(name, in_shape, in_shape)

    def forward(self, x, params, mode, rng, cache):
        mask = x > 0
        cache["mask"] = mask
        return np.where(mask, x, 0.0)

    def backward(self, dy, params, cache, grads):
        return np.where(cache["mask"], dy, 0.0)


class FlattenOp(Op):
    def __init__(self, name, in_shape):
        super().__init__(name, in_shape, (int(np.prod(in_shape)),))

    def forward(self, x, params, mode, rng, cache):
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, params, cache, grads):
        return dy.reshape((dy.shape[0],) + self.in_shape)


class DropoutOp(Op):
    def __init__(self, name, in_shape, drop_p):
        super().__init__(name, in_shape, in_shape)
        if not 0.0 < drop_p < 1.0:
            raise ValueError("drop_p must be in (0,1)")
        self.drop_p = drop_p

    def forward(self, x, params, mode, rng, cache):
        if mode != "train":
            cache["mask"] = None
            return x
        if rng is None:
            raise ValueError("train-mode forward through dropout needs an rng")
        mask = rng.random(x.shape) >= self.drop_p
        cache["mask"] = mask
        return x * mask / (1.0 - self.drop_p)

    def backward(self, dy, params, cache, grads):
        mask = cache["mask"]
        if mask is None:
            return dy
        return dy * mask / (1.0 - self.drop_p)


class BatchNormOp(Op):
    """Batch normalization over channels (spatial) or features (flat).

    Train mode normalizes with batch statistics and updates the running
    stats in place; eval mode uses the running stats, which keeps samples
    independent of each other.
    """

    def __init__(self, name, in_shape):
        super().__init__(name, in_shape, in_shape)
        self.channels = in_shape[0]

    def param_shapes(self):
        return {"scale": (self.channels,), "shift": (self.channels,)}

    def buffer_shapes(self):
        return {"running_mean": (self.channels,), "running_var": (self.channels,)}

    def init_params(self, params, rng):
        params[f"{self.name}.scale"] = np.ones(self.channels)
        params[f"{self.name}.shift"] = np.zeros(self.channels)
        params[f"{self.name}.running_mean"] = np.zeros(self.channels)
        params[f"{self.name}.running_var"] = np.ones(self.channels)

    def forward(self, x, params, mode, rng, cache):
        n = x.shape[0]
        xr = x.reshape(n, self.channels, -1)
        scale = params[f"{self.name}.scale"][None, :, None]
        shift = params[f"{self.name}.shift"][None, :, None]
        if mode == "train":
            mean = xr.mean(axis=(0, 2))
            var = xr.var(axis=(0, 2))
            inv = 1.0 / np.sqrt(var + EPS_BN)
            xhat = (xr - mean[None, :, None]) * inv[None, :, None]
            count = n * xr.shape[2]
            unbiased = var * count / (count - 1) if count > 1 else var
            rm = params[f"{self.name}.running_mean"]
            rv = params[f"{self.name}.running_var"]
            rm *= 1.0 - BN_MOMENTUM
            rm += BN_MOMENTUM * mean
            rv *= 1.0 - BN_MOMENTUM
            rv += BN_MOMENTUM * unbiased
        else:
            mean = params[f"{self.name}.running_mean"]
            inv = 1.0 / np.sqrt(params[f"{self.name}.running_var"] + EPS_BN)
            xhat = (xr - mean[None, :, None]) * inv[None, :, None]
        cache["xhat"] = xhat
        cache["inv"] = inv
        cache["mode"] = mode
        return (scale * xhat + shift).reshape(x.shape)

    def backward(self, dy, params, cache, grads):
        n = dy.shape[0]
        dyr = dy.reshape(n, self.channels, -1)
        xhat, inv = cache["xhat"], cache["inv"]
        grads[f"{self.name}.scale"] += (dyr * xhat).sum(axis=(0, 2))
        grads[f"{self.name}.shift"] += dyr.sum(axis=(0, 2))
        dxhat = dyr * params[f"{self.name}.scale"][None, :, None]
        if cache["mode"] != "train":
            return (dxhat * inv[None, :, None]).reshape(dy.shape)
        m = n * dyr.shape[2]
        s1 = dxhat.sum(axis=(0, 2), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        dxr = (inv[None, :, None] / m) * (m * dxhat - s1 - xhat * s2)
        return dxr.reshape(dy.shape)


class MaxPoolOp(Op):
    def __init__(self, name, in_shape, kernel, stride, padding):
        c, h, w = in_shape
        rows, cols, oh, ow = _pool_indices(h, w, kernel, stride, padding)
        super().__init__(name, in_shape, (c, oh, ow))
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self._rows = rows
        self._cols = cols

    def forward(self, x, params, mode, rng, cache):
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf) if p else x
        windows = xp[:, :, self._rows, self._cols]  # (N, C, k², L)
        arg = windows.argmax(axis=2)
        cache["arg"] = arg
        n = x.shape[0]
        y = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
        return y.reshape((n,) + self.out_shape)

    def backward(self, dy, params, cache, grads):
        n = dy.shape[0]
        c, h, w = self.in_shape
        p = self.padding
        arg = cache["arg"]
        length = self._rows.shape[1]
        dyf = dy.reshape(n, c, length)
        pos = np.arange(length)[None, None, :]
        rows = self._rows[arg, pos]
        cols = self._cols[arg, pos]
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        np.add.at(
            dxp,
            (np.arange(n)[:, None, None], np.arange(c)[None, :, None], rows, cols),
            dyf,
        )
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class AvgPoolOp(Op):
    def __init__(self, name, in_shape, kernel, stride, padding):
        c, h, w = in_shape
        rows, cols, oh, ow = _pool_indices(h, w, kernel, stride, padding)
        super().__init__(name, in_shape, (c, oh, ow))
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self._rows = rows
        self._cols = cols

    def forward(self, x, params, mode, rng, cache):
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = xp[:, :, self._rows, self._cols]
        n = x.shape[0]
        return windows.mean(axis=2).reshape((n,) + self.out_shape)

    def backward(self, dy, params, cache, grads):
        n = dy.shape[0]
        c, h, w = self.in_shape
        p = self.padding
        length = self._rows.shape[1]
        dyf = dy.reshape(n, c, 1, length) / (self.kernel * self.kernel)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        np.add.at(dxp, (slice(None), slice(None), self._rows, self._cols), dyf)
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class AdaptiveAvgPoolOp(Op):
    """Window-average any spatial size to a configured output size."""

    def __init__(self, name, in_shape, output_size):
        c, h, w = in_shape
        super().__init__(name, in_shape, (c, output_size, output_size))
        self.output_size = output_size
        self._h_bounds = self._bounds(h, output_size)
        self._w_bounds = self._bounds(w, output_size)

    @staticmethod
    def _bounds(in_size, out_size):
        starts = (np.arange(out_size) * in_size) // out_size
        ends = -((-(np.arange(out_size) + 1) * in_size) // out_size)  # ceil division
        return list(zip(starts.tolist(), ends.tolist()))

    def forward(self, x, params, mode, rng, cache):
        n, c = x.shape[0], self.in_shape[0]
        y = np.empty((n, c, self.output_size, self.output_size))
        for oi, (hs, he) in enumerate(self._h_bounds):
            for oj, (ws, we) in enumerate(self._w_bounds):
                y[:, :, oi, oj] = x[:, :, hs:he, ws:we].mean(axis=(2, 3))
        return y

    def backward(self, dy, params, cache, grads):
        n = dy.shape[0]
        dx = np.zeros((n,) + self.in_shape)
        for oi, (hs, he) in enumerate(self._h_bounds):
            for oj, (ws, we) in enumerate(self._w_bounds):
                area = (he - hs) * (we - ws)
                dx[:, :, hs:he, ws:we] += dy[:, :, oi, oj][:, :, None, None] / area
        return dx


class ResidualOp(Op):
    """Adds a shortcut around a wrapped op: ``y = inner(x) + shortcut(x)``.

    The shortcut is the identity when shapes match, otherwise a minimal
    chain of reshaping/projection ops compiled alongside the wrap.
    """

    def __init__(self, name, inner: Op, shortcut: list[Op]):
        super().__init__(name, inner.in_shape, inner.out_shape)
        self.inner = inner
        self.shortcut = shortcut

    def child_ops(self):
        return [self.inner] + list(self.shortcut)

    def init_params(self, params, rng):
        for op in self.child_ops():
            op.init_params(params, rng)

    def forward(self, x, params, mode, rng, cache):
        inner_cache: dict = {}
        sc_caches = [dict() for _ in self.shortcut]
        y = self.inner.forward(x, params, mode, rng, inner_cache)
        s = x
        for op, c in zip(self.shortcut, sc_caches):
            s = op.forward(s, params, mode, rng, c)
        cache["inner"] = inner_cache
        cache["shortcut"] = sc_caches
        return y + s

    def backward(self, dy, params, cache, grads):
        dx = self.inner.backward(dy, params, cache["inner"], grads)
        ds = dy
        for op, c in zip(reversed(self.shortcut), reversed(cache["shortcut"])):
            ds = op.backward(ds, params, c, grads)
        return dx + ds
