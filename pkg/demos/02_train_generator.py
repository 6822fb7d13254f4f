#!/usr/bin/env python3
"""Train the small VAE generator on synthetic faces and save its weights.

Writes demos/out/weights.gsgn plus a sample grid; the later demos load these
weights. Takes roughly two minutes on one core at the default settings.

Run:  python3 demos/02_train_generator.py [--fast]
"""

import sys
import time
from pathlib import Path

import numpy as np

from gencut.datasets import generate_synthetic_dataset
from gencut.generator import sample, save_weights
from gencut.training import TrainConfig, train_vae

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

fast = "--fast" in sys.argv
n_images, epochs = (400, 6) if fast else (2000, 30)

print(f"generating {n_images} synthetic faces (+scenes) ...")
data = generate_synthetic_dataset(n_images, size=32, seed=0)

cfg = TrainConfig(epochs=epochs, batch_size=64, lr=1e-3, beta=1.0, seed=0)
print(f"training vae-mini for {epochs} epochs ...")
t0 = time.time()
net, log = train_vae(cfg, data)
print(f"done in {time.time() - t0:.0f}s: loss {log['epochs'][0]['loss']:.1f} -> "
      f"{log['epochs'][-1]['loss']:.1f}, train recon {log['final_recon_psnr']:.1f} dB")

save_weights(net, OUT / "weights.gsgn")
print(f"weights -> {OUT / 'weights.gsgn'}")

# sample grid: 8x4 images
imgs = sample(net, 32, seed=7)
grid = imgs.reshape(4, 8, 32, 32).transpose(0, 2, 1, 3).reshape(4 * 32, 8 * 32)
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.figure(figsize=(8, 4))
    plt.imshow(grid, cmap="gray", vmin=-1, vmax=1)
    plt.axis("off")
    plt.title("generator samples after training")
    plt.tight_layout()
    plt.savefig(OUT / "samples.png", dpi=120)
    print(f"sample grid -> {OUT / 'samples.png'}")
except ImportError:
    print("matplotlib not installed; skipping the sample grid image")
