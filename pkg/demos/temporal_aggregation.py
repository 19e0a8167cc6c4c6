"""What the aggregation operator actually looks at.

A snippet sequence is treated as a grid of W-snippet units; a (kH, kW) kernel
then mixes within-unit neighbors (columns) and same-phase neighbors W apart
(rows). The demo paints the dependency footprint, tabulates how the receptive
field grows through the default stack, and finite-difference checks one layer.

Run from the repository root:  python3 demos/temporal_aggregation.py
"""
import numpy as np

from telkit.model import DEFAULT_KERNELS, DEFAULT_UNITS, TAConfig, TemporalAggregation
from telkit.nn import Param, grad_check

T = 48
W, kernel = 6, (3, 3)
layer = TemporalAggregation(TAConfig(1, 1, kernel=kernel, unit_length=W), np.random.default_rng(0))
for p in layer.params():
    p.value[...] = 1.0 if p.value.ndim > 1 else 0.0

print(f"kernel {kernel[0]}x{kernel[1]} over units of W={W} snippets, T={T}")
base = layer.forward(np.zeros((T, 1), dtype=np.float32))
for t in (2, 24):
    x = np.zeros((T, 1), dtype=np.float32)
    x[t, 0] = 1.0
    hit = np.abs(layer.forward(x) - base).max(axis=1) > 1e-6
    row = "".join("#" if hit[i] else ("|" if i % W == 0 else ".") for i in range(T))
    deps = np.flatnonzero(hit).tolist()
    print(f"input {t:2d} reaches outputs {row}   {deps}")
print("three clusters of three: the within-unit taps, repeated one unit up and down;")
print("near the boundary the footprint truncates instead of wrapping")

print("\nreceptive field through the default branch stack:")
print("kernel  W   span = (kH-1)*W + kW")
for kernel, unit in zip(DEFAULT_KERNELS, DEFAULT_UNITS):
    cfg = TAConfig(1, 1, kernel=kernel, unit_length=unit)
    print(f"{kernel[0]}x{kernel[1]:<5}{unit:<4}{cfg.receptive_field}")

print("\ngradients, checked by central differences on a random layer:")
layer = TemporalAggregation(TAConfig(3, 4, kernel=(3, 3), unit_length=4), np.random.default_rng(1))
x = np.random.default_rng(2).normal(size=(20, 3)).astype(np.float32)
x_param = Param(x, "input")
coeffs = np.random.default_rng(3).normal(size=layer.forward(x).shape)

def f():
    out = layer.forward(x_param.value)
    x_param.grad += layer.backward(coeffs.astype(out.dtype))
    return float((out.astype(np.float64) * coeffs).sum())

err = grad_check(f, list(layer.params()) + [x_param], np.random.default_rng(4))
print(f"max relative error {err:.2e}")
