"""Layers. Each instance caches its last forward inputs for the paired backward.

Every multiply-accumulate runs in f64 and the result is cast back to the
working dtype (the promotion of input and weights), so f32 storage keeps an
f64 reduction path and f64 params give a fully f64 network.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Param, he_uniform


def _out_dtype(*arrays) -> np.dtype:
    return np.result_type(*arrays)


def _tap_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    """out[t] = bias + sum_j x[t + offsets[j]] @ weight[j], zero outside [0, T).

    Truncating out-of-range taps is exactly zero padding: the missing rows
    contribute nothing forward and receive nothing backward.
    """
    t_len = x.shape[0]
    x64 = x.astype(np.float64, copy=False)
    w64 = weight.astype(np.float64, copy=False)
    out = np.broadcast_to(bias.astype(np.float64, copy=False), (t_len, weight.shape[2])).copy()
    for j, off in enumerate(offsets):
        lo = max(0, -off)
        hi = min(t_len, t_len - off)
        if lo >= hi:
            continue
        out[lo:hi] += x64[lo + off : hi + off] @ w64[j]
    return out.astype(_out_dtype(x, weight), copy=False)


def _tap_backward(
    x: np.ndarray, weight: np.ndarray, offsets: Sequence[int], d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t_len = x.shape[0]
    x64 = x.astype(np.float64, copy=False)
    w64 = weight.astype(np.float64, copy=False)
    dy = d_out.astype(np.float64, copy=False)
    dx = np.zeros((t_len, x.shape[1]), dtype=np.float64)
    dw = np.zeros_like(w64)
    for j, off in enumerate(offsets):
        lo = max(0, -off)
        hi = min(t_len, t_len - off)
        if lo >= hi:
            continue
        dw[j] = x64[lo + off : hi + off].T @ dy[lo:hi]
        dx[lo + off : hi + off] += dy[lo:hi] @ w64[j].T
    db = dy.sum(axis=0)
    return (
        dx.astype(_out_dtype(x, weight), copy=False),
        dw.astype(weight.dtype, copy=False),
        db.astype(weight.dtype, copy=False),
    )


class TapConv1d:
    """1D convolution as an explicit list of integer tap offsets.

    Plain, dilated, and temporal-aggregation convolutions are all the same
    kernel with different offset lists, which is what makes the degenerate
    cases (single unit, no vertical extent) bitwise-identical across them.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        offsets: Sequence[int],
        rng: np.random.Generator,
        name: str = "tapconv",
    ):
        if not offsets:
            raise ValueError("need at least one tap")
        self.offsets = tuple(int(o) for o in offsets)
        k = len(self.offsets)
        self.weight = Param(he_uniform(rng, (k, in_channels, out_channels), k * in_channels), f"{name}.weight")
        self.bias = Param(np.zeros(out_channels), f"{name}.bias")
        self._x: np.ndarray | None = None

    @classmethod
    def conv1d(cls, in_channels, out_channels, kernel, rng, name="conv1d"):
        if kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {kernel}")
        half = kernel // 2
        return cls(in_channels, out_channels, range(-half, half + 1), rng, name)

    @classmethod
    def dilated(cls, in_channels, out_channels, kernel, dilation, rng, name="dilated"):
        if kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {kernel}")
        half = kernel // 2
        return cls(in_channels, out_channels, [dilation * d for d in range(-half, half + 1)], rng, name)

    @classmethod
    def temporal_aggregation(cls, in_channels, out_channels, kernel_hw, unit_length, rng, name="ta"):
        """Offsets {di*W + dj} of a (kH, kW) kernel over unit length W.

        Row-major tap order so the weight array reshapes to [kH, kW, Cin, Cout].
        """
        k_h, k_w = kernel_hw
        if k_h % 2 != 1 or k_w % 2 != 1:
            raise ValueError(f"kernel extents must be odd, got {kernel_hw}")
        if unit_length < 1:
            raise ValueError(f"unit length must be >= 1, got {unit_length}")
        offsets = [
            di * unit_length + dj
            for di in range(-(k_h // 2), k_h // 2 + 1)
            for dj in range(-(k_w // 2), k_w // 2 + 1)
        ]
        return cls(in_channels, out_channels, offsets, rng, name)

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return _tap_forward(x, self.weight.value, self.bias.value, self.offsets)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        dx, dw, db = _tap_backward(self._x, self.weight.value, self.offsets, d_out)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Conv2d:
    """Zero same-padded 2D cross-correlation on [H, W, Cin] -> [H, W, Cout]."""

    def __init__(self, in_channels, out_channels, kernel_hw, rng: np.random.Generator, name="conv2d"):
        k_h, k_w = kernel_hw
        if k_h % 2 != 1 or k_w % 2 != 1:
            raise ValueError(f"kernel extents must be odd, got {kernel_hw}")
        self.kernel = (k_h, k_w)
        fan_in = k_h * k_w * in_channels
        self.weight = Param(he_uniform(rng, (k_h, k_w, in_channels, out_channels), fan_in), f"{name}.weight")
        self.bias = Param(np.zeros(out_channels), f"{name}.bias")
        self._x: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.weight.value.shape[2]:
            raise ValueError(f"expected [H,W,{self.weight.value.shape[2]}], got {x.shape}")
        self._x = x
        h, w, _ = x.shape
        k_h, k_w = self.kernel
        x64 = x.astype(np.float64, copy=False)
        w64 = self.weight.value.astype(np.float64, copy=False)
        cout = w64.shape[3]
        out = np.broadcast_to(self.bias.value.astype(np.float64, copy=False), (h, w, cout)).copy()
        for di in range(-(k_h // 2), k_h // 2 + 1):
            rlo, rhi = max(0, -di), min(h, h - di)
            if rlo >= rhi:
                continue
            for dj in range(-(k_w // 2), k_w // 2 + 1):
                clo, chi = max(0, -dj), min(w, w - dj)
                if clo >= chi:
                    continue
                patch = x64[rlo + di : rhi + di, clo + dj : chi + dj]
                tap = w64[di + k_h // 2, dj + k_w // 2]
                contrib = (patch.reshape(-1, patch.shape[2]) @ tap).reshape(rhi - rlo, chi - clo, cout)
                out[rlo:rhi, clo:chi] += contrib
        return out.astype(_out_dtype(x, self.weight.value), copy=False)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x = self._x
        h, w, cin = x.shape
        k_h, k_w = self.kernel
        x64 = x.astype(np.float64, copy=False)
        w64 = self.weight.value.astype(np.float64, copy=False)
        dy = d_out.astype(np.float64, copy=False)
        dx = np.zeros((h, w, cin), dtype=np.float64)
        dw = np.zeros_like(w64)
        for di in range(-(k_h // 2), k_h // 2 + 1):
            rlo, rhi = max(0, -di), min(h, h - di)
            if rlo >= rhi:
                continue
            for dj in range(-(k_w // 2), k_w // 2 + 1):
                clo, chi = max(0, -dj), min(w, w - dj)
                if clo >= chi:
                    continue
                patch = x64[rlo + di : rhi + di, clo + dj : chi + dj].reshape(-1, cin)
                dy_slab = dy[rlo:rhi, clo:chi].reshape(-1, w64.shape[3])
                dw[di + k_h // 2, dj + k_w // 2] = patch.T @ dy_slab
                dx[rlo + di : rhi + di, clo + dj : chi + dj] += (
                    dy_slab @ w64[di + k_h // 2, dj + k_w // 2].T
                ).reshape(rhi - rlo, chi - clo, cin)
        self.weight.grad += dw.astype(self.weight.value.dtype, copy=False)
        self.bias.grad += dy.sum(axis=(0, 1)).astype(self.bias.value.dtype, copy=False)
        return dx.astype(_out_dtype(x, self.weight.value), copy=False)


class DeformableConv1d:
    """Tap conv whose taps sit at learned fractional positions.

    Each tap j reads x at t + base_j + delta_j by linear interpolation
    (zero outside the sequence); the scalar offsets delta init to 0 and train
    with everything else. Interpolation has kinks at integer positions, so
    gradient checks should nudge the offsets off the lattice first.
    """

    def __init__(self, in_channels, out_channels, kernel, rng, dilation: int = 1, name="deform"):
        if kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {kernel}")
        half = kernel // 2
        self.base = tuple(dilation * d for d in range(-half, half + 1))
        self.weight = Param(
            he_uniform(rng, (kernel, in_channels, out_channels), kernel * in_channels), f"{name}.weight"
        )
        self.bias = Param(np.zeros(out_channels), f"{name}.bias")
        self.offset = Param(np.zeros(kernel), f"{name}.offset")
        self._cache = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias, self.offset]

    @staticmethod
    def _gather(x64: np.ndarray, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Linear interpolation of rows at fractional indices, zero outside.

        Returns (values[T,C], slope[T,C]) where slope is d(value)/d(pos).
        """
        t_len = x64.shape[0]
        p0 = np.floor(pos).astype(np.int64)
        frac = (pos - p0)[:, None]
        lo_ok = (p0 >= 0) & (p0 < t_len)
        hi_ok = (p0 + 1 >= 0) & (p0 + 1 < t_len)
        x_lo = np.where(lo_ok[:, None], x64[np.clip(p0, 0, t_len - 1)], 0.0)
        x_hi = np.where(hi_ok[:, None], x64[np.clip(p0 + 1, 0, t_len - 1)], 0.0)
        return (1.0 - frac) * x_lo + frac * x_hi, x_hi - x_lo

    def forward(self, x: np.ndarray) -> np.ndarray:
        t_len = x.shape[0]
        x64 = x.astype(np.float64, copy=False)
        w64 = self.weight.value.astype(np.float64, copy=False)
        shift = self.offset.value.astype(np.float64, copy=False)
        ts = np.arange(t_len, dtype=np.float64)
        out = np.broadcast_to(self.bias.value.astype(np.float64, copy=False), (t_len, w64.shape[2])).copy()
        gathers = []
        for j, base in enumerate(self.base):
            pos = ts + base + shift[j]
            vals, slope = self._gather(x64, pos)
            gathers.append((pos, vals, slope))
            out += vals @ w64[j]
        self._cache = (x, gathers)
        return out.astype(_out_dtype(x, self.weight.value, self.offset.value), copy=False)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x, gathers = self._cache
        t_len, cin = x.shape
        w64 = self.weight.value.astype(np.float64, copy=False)
        dy = d_out.astype(np.float64, copy=False)
        dx = np.zeros((t_len, cin), dtype=np.float64)
        for j, (pos, vals, slope) in enumerate(gathers):
            d_vals = dy @ w64[j].T
            self.weight.grad[j] += (vals.T @ dy).astype(self.weight.value.dtype, copy=False)
            self.offset.grad[j] += np.float64((d_vals * slope).sum()).astype(self.offset.value.dtype)
            p0 = np.floor(pos).astype(np.int64)
            frac = (pos - p0)[:, None]
            lo_ok = (p0 >= 0) & (p0 < t_len)
            hi_ok = (p0 + 1 >= 0) & (p0 + 1 < t_len)
            np.add.at(dx, np.clip(p0, 0, t_len - 1), np.where(lo_ok[:, None], (1.0 - frac) * d_vals, 0.0))
            np.add.at(dx, np.clip(p0 + 1, 0, t_len - 1), np.where(hi_ok[:, None], frac * d_vals, 0.0))
        self.bias.grad += dy.sum(axis=0).astype(self.bias.value.dtype, copy=False)
        return dx.astype(_out_dtype(x, self.weight.value), copy=False)


class Linear:
    def __init__(self, in_features, out_features, rng, name="linear"):
        self.weight = Param(he_uniform(rng, (in_features, out_features), in_features), f"{name}.weight")
        self.bias = Param(np.zeros(out_features), f"{name}.bias")
        self._x = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.weight.value.shape[0]:
            raise ValueError(f"expected trailing dim {self.weight.value.shape[0]}, got {x.shape}")
        self._x = x
        x64 = x.astype(np.float64, copy=False)
        w64 = self.weight.value.astype(np.float64, copy=False)
        out = x64 @ w64 + self.bias.value.astype(np.float64, copy=False)
        return out.astype(_out_dtype(x, self.weight.value), copy=False)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        x64 = self._x.astype(np.float64, copy=False)
        w64 = self.weight.value.astype(np.float64, copy=False)
        dy = d_out.astype(np.float64, copy=False)
        flat_x = x64.reshape(-1, x64.shape[-1])
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.weight.grad += (flat_x.T @ flat_dy).astype(self.weight.value.dtype, copy=False)
        self.bias.grad += flat_dy.sum(axis=0).astype(self.bias.value.dtype, copy=False)
        return (dy @ w64.T).astype(_out_dtype(self._x, self.weight.value), copy=False)


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, np.zeros((), dtype=x.dtype))

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, d_out, np.zeros((), dtype=d_out.dtype))


class MaxPool1d:
    """Kernel-2 stride-2 max pooling over the first axis; odd tails are dropped.

    Ties route the gradient to the earlier element.
    """

    def __init__(self):
        self._idx = None
        self._in_len = 0

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        t_len = x.shape[0]
        half = t_len // 2
        if half == 0:
            raise ValueError(f"sequence of length {t_len} cannot be pooled")
        pairs = x[: 2 * half].reshape(half, 2, -1)
        idx = np.argmax(pairs, axis=1)  # first max on ties
        self._idx = idx
        self._in_len = t_len
        return np.take_along_axis(pairs, idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        half, channels = self._idx.shape
        dx = np.zeros((self._in_len, channels), dtype=d_out.dtype)
        rows = 2 * np.arange(half)[:, None] + self._idx
        # pooled windows are disjoint, so each target row is written once
        np.put_along_axis(dx, rows, d_out, axis=0)
        return dx


def roi_pool_1d(x: np.ndarray, lo: float, hi: float, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool `bins` equal sub-ranges of snippet span [lo, hi] within x[T,C].

    A sub-range that covers no snippet index takes the snippet nearest its
    center. Returns (pooled[bins,C], argmax row indices [bins,C]); the index
    array is what the backward pass scatters into.
    """
    if hi < lo:
        raise ValueError(f"inverted interval [{lo}, {hi}]")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    t_len, channels = x.shape
    out = np.empty((bins, channels), dtype=x.dtype)
    arg = np.empty((bins, channels), dtype=np.int64)
    width = (hi - lo) / bins
    for b in range(bins):
        s = lo + b * width
        e = s + width
        i0 = max(0, int(np.floor(s)))
        i1 = min(t_len, int(np.ceil(e)))
        if i0 >= i1:
            nearest = int(np.clip(round((s + e) / 2.0), 0, t_len - 1))
            i0, i1 = nearest, nearest + 1
        window = x[i0:i1]
        local = np.argmax(window, axis=0)  # first max on ties
        arg[b] = i0 + local
        out[b] = window[local, np.arange(channels)]
    return out, arg


def roi_pool_1d_backward(arg: np.ndarray, d_out: np.ndarray, t_len: int) -> np.ndarray:
    channels = arg.shape[1]
    dx = np.zeros((t_len, channels), dtype=d_out.dtype)
    cols = np.broadcast_to(np.arange(channels), arg.shape)
    np.add.at(dx, (arg.reshape(-1), cols.reshape(-1)), d_out.reshape(-1))
    return dx
