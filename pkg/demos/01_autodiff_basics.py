#!/usr/bin/env python3
"""Tour of the tensor engine: forward ops, gradients, and the conv adjoint.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from gencut import autodiff as ad
from gencut.autodiff import Tensor

rng = np.random.default_rng(0)

# --- a tiny computation graph -------------------------------------------
x = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
w = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
b = Tensor(np.zeros(3), requires_grad=True)

h = ad.tanh(ad.dense(x, w, b))
loss = ad.mse(h, Tensor(np.zeros((2, 3))))
loss.backward()
print(f"loss = {loss.item():.4f}")
print(f"grad shapes: x {x.grad.shape}, w {w.grad.shape}, b {b.grad.shape}")

# --- gradients vs central finite differences -----------------------------
def f(w_arr):
    h = ad.tanh(ad.dense(Tensor(x.data), Tensor(w_arr), Tensor(b.data)))
    return ad.mse(h, Tensor(np.zeros((2, 3)))).item()

eps = 1e-5
numeric = np.zeros_like(w.data)
for idx in np.ndindex(*w.shape):
    wp, wm = w.data.copy(), w.data.copy()
    wp[idx] += eps
    wm[idx] -= eps
    numeric[idx] = (f(wp) - f(wm)) / (2 * eps)
err = np.max(np.abs(numeric - w.grad) / np.maximum(1.0, np.abs(numeric)))
print(f"finite-difference check on w: max relative error {err:.2e}")

# --- convolution and its adjoint -----------------------------------------
img = rng.normal(size=(1, 3, 8, 8))
ker = rng.normal(size=(4, 3, 3, 3))
out = ad.conv2d(Tensor(img), Tensor(ker), stride=1, pad=1).data
u = rng.normal(size=out.shape)
back = ad.conv_transpose2d(Tensor(u), Tensor(ker), stride=1, pad=1).data
lhs = float((out * u).sum())
rhs = float((img * back).sum())
print(f"adjoint identity <Ax,u> vs <x,A'u>: {lhs:.6f} vs {rhs:.6f} (diff {abs(lhs-rhs):.2e})")

# --- the graph is single-use ----------------------------------------------
try:
    loss.backward()
except RuntimeError as exc:
    print(f"second backward correctly refused: {exc}")
