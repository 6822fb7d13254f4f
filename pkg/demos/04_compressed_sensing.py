#!/usr/bin/env python3
"""Compressed sensing comparison: cut generator vs uncut vs DCT lasso.

Needs demos/out/weights.gsgn (run 02_train_generator.py first).

Run:  python3 demos/04_compressed_sensing.py
"""

from pathlib import Path

import numpy as np

from gencut.datasets import generate_synthetic_dataset
from gencut.generator import cut, load_weights
from gencut.lasso import lasso_dct_solve
from gencut.metrics import psnr
from gencut.recovery import InitStrategy, RecoveryConfig, recover
from gencut.sensing import make_operator, measure, noise_sigma

OUT = Path(__file__).parent / "out"
net = load_weights(OUT / "weights.gsgn", recipe="vae-mini")
data = generate_synthetic_dataset(2000, size=32, seed=0)
faces = data.select(family="faces", split="test")[:12]
refs = data.select(family="faces", split="val")
n = net.output_dim

RATIOS = (0.1, 0.2, 0.3, 0.5)
curves = {"cut": [], "uncut": [], "lasso_dct": []}

for ratio in RATIOS:
    m = int(np.floor(ratio * n))
    sigma = noise_sigma(net.out_shape, m, "gaussian", refs)
    per = {k: [] for k in curves}
    for i, img in enumerate(faces):
        op = make_operator("gaussian", net.out_shape, m=m, seed=300 + i)
        meas = measure(img, op, sigma, seed=400 + i)

        cfg_cut = RecoveryConfig(cut_index=1, restarts=3, steps=12, step_size=1.0,
                                 optimizer="lbfgs", init=InitStrategy("zero"), seed=500 + i)
        per["cut"].append(recover(cut(net, 1), meas, cfg_cut, target=img).psnr_db)

        cfg_un = RecoveryConfig(cut_index=0, restarts=3, steps=100, step_size=1.0,
                                optimizer="lbfgs", init=InitStrategy("censored_normal"), seed=500 + i)
        per["uncut"].append(recover(cut(net, 0), meas, cfg_un, target=img).psnr_db)

        sol = lasso_dct_solve(op, meas.y, lam=0.01, max_iters=400)
        per["lasso_dct"].append(psnr(img, sol.x_hat))
    for k in curves:
        curves[k].append(float(np.mean(per[k])))
    print(f"m/n={ratio}: cut {curves['cut'][-1]:.2f}  uncut {curves['uncut'][-1]:.2f}  "
          f"lasso {curves['lasso_dct'][-1]:.2f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.figure(figsize=(6, 4))
    for k, marker in (("cut", "o"), ("uncut", "s"), ("lasso_dct", "^")):
        plt.plot(RATIOS, curves[k], marker=marker, label=k)
    plt.xlabel("undersampling ratio m/n")
    plt.ylabel("mean PSNR (dB)")
    plt.title("compressed sensing on held-out faces")
    plt.legend()
    plt.grid(alpha=0.3)
    plt.tight_layout()
    plt.savefig(OUT / "cs_sweep.png", dpi=120)
    print(f"figure -> {OUT / 'cs_sweep.png'}")
except ImportError:
    pass
