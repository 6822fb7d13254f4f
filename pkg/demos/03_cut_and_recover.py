#!/usr/bin/env python3
"""Block removal in action: lift identity, then reconstruction with and
without cutting.

Needs demos/out/weights.gsgn (run 02_train_generator.py first).

Run:  python3 demos/03_cut_and_recover.py
"""

from pathlib import Path

import numpy as np

from gencut.datasets import generate_synthetic_dataset
from gencut.generator import cut, forward_cut, lift, load_weights, overparam_ratio
from gencut.recovery import RecoveryConfig, InitStrategy, recover
from gencut.sensing import make_operator, measure

OUT = Path(__file__).parent / "out"
net = load_weights(OUT / "weights.gsgn", recipe="vae-mini")

# --- every original latent has an exact counterpart after cutting ---------
z0 = np.random.default_rng(1).standard_normal(net.latent_dim)
for c in range(net.depth):
    gc = cut(net, c)
    dev = np.max(np.abs(forward_cut(gc, lift(net, z0, c)).data - net.forward(z0).data))
    ratio = overparam_ratio(gc.input_dim, net.output_dim)
    print(f"cut c={c}: input dim {gc.input_dim:5d} (ratio {ratio:5.2f}), lift deviation {dev:.1e}")

# --- reconstruction quality with no degradation ---------------------------
data = generate_synthetic_dataset(2000, size=32, seed=0)
faces = data.select(family="faces", split="test")[:6]
op = make_operator("identity", net.out_shape)

rows = {}
for c in (0, 1, 2):
    gc = cut(net, c)
    recons, psnrs = [], []
    for i, img in enumerate(faces):
        meas = measure(img, op, sigma=0.0)
        cfg = RecoveryConfig(cut_index=c, restarts=3, steps=100, step_size=1.0,
                             optimizer="lbfgs", init=InitStrategy("censored_normal"), seed=100 + i)
        res = recover(gc, meas, cfg, target=img)
        recons.append(res.x_hat[0])
        psnrs.append(res.psnr_db)
    rows[c] = (np.mean(psnrs), recons)
    print(f"identity reconstruction at c={c}: mean {np.mean(psnrs):.2f} dB")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(4, len(faces), figsize=(2 * len(faces), 8))
    for j, img in enumerate(faces):
        axes[0][j].imshow(img[0], cmap="gray", vmin=-1, vmax=1)
        axes[0][j].set_ylabel("target") if j == 0 else None
    for row, c in enumerate((0, 1, 2), start=1):
        mean_psnr, recons = rows[c]
        for j, rec in enumerate(recons):
            axes[row][j].imshow(rec, cmap="gray", vmin=-1, vmax=1)
        axes[row][0].set_ylabel(f"c={c}\n{mean_psnr:.1f} dB")
    for ax in fig.get_axes():
        ax.set_xticks([])
        ax.set_yticks([])
    plt.suptitle("reconstruction with no degradation: uncut vs cut")
    plt.tight_layout()
    plt.savefig(OUT / "cut_vs_uncut.png", dpi=120)
    print(f"figure -> {OUT / 'cut_vs_uncut.png'}")
except ImportError:
    pass
