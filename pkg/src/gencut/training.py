"""Variational autoencoder training producing trained "vae-mini" generator weights.

The decoder is the generator; the encoder exists only during training. Loss
is per-image reconstruction MSE (summed over pixels) plus beta times the
analytic Gaussian KL divergence to the standard normal, averaged over the
batch. Runs are bit-for-bit reproducible for a given (config, dataset).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from gencut import autodiff as ad
from gencut.autodiff import NonFiniteError, Tensor
from gencut.datasets import Dataset
from gencut.generator import (
    Activation,
    Conv,
    Dense,
    GeneratorNet,
    build_generator,
)
from gencut.optim import Adam

__all__ = ["TrainConfig", "train_vae"]


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    beta: float = 1.0
    seed: int = 0
    image_size: int = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


class _Encoder:
    """Three strided convolutions, then separate mean / log-variance heads."""

    def __init__(self, latent_dim: int, seed: int):
        rng = np.random.default_rng(seed)

        def conv(c_in, c_out, k=4, stride=2, pad=1):
            w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(c_in * k * k), (c_out, c_in, k, k)))
            return Conv(w, Tensor(np.zeros(c_out)), stride, pad)

        self.convs = [conv(1, 16), conv(16, 32), conv(32, 32)]
        self.act = Activation("elu")
        flat = 32 * 4 * 4
        self.head_mu = Dense(
            Tensor(rng.normal(0.0, 1.0 / np.sqrt(flat), (flat, latent_dim))),
            Tensor(np.zeros(latent_dim)),
        )
        self.head_logvar = Dense(
            Tensor(rng.normal(0.0, 1.0 / np.sqrt(flat), (flat, latent_dim))),
            Tensor(np.zeros(latent_dim)),
        )

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = x
        for conv in self.convs:
            h = self.act(conv(h))
        h = ad.reshape(h, (h.shape[0], 32 * 4 * 4))
        return self.head_mu(h), self.head_logvar(h)

    def params(self) -> list[Tensor]:
        out = []
        for conv in self.convs:
            out.extend(p for _, p in conv.params())
        out.extend(p for _, p in self.head_mu.params())
        out.extend(p for _, p in self.head_logvar.params())
        return out


def _gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """0.5 * sum(mu^2 + exp(logvar) - logvar - 1); always >= 0."""
    ones = Tensor(np.ones(mu.shape))
    terms = ad.add(ad.add(ad.mul(mu, mu), ad.exp(logvar)), ad.mul(ad.add(logvar, ones), -1.0))
    return ad.mul(terms.sum(), 0.5)


def train_vae(cfg: TrainConfig, data: Dataset) -> tuple[GeneratorNet, dict]:
    """Train and return the decoder (recipe "vae-mini") plus a metrics log.

    Trains on the dataset's "train" split (all images if nothing is tagged).
    The log holds per-epoch mean loss terms and the final deterministic
    reconstruction PSNR (decoded from the latent mean, no sampling noise) on
    up to 64 training images.
    """
    from gencut.metrics import psnr  # local import to avoid a module cycle

    images = data.select(split="train")
    if images.shape[0] == 0:
        images = data.images
    if images.shape[0] == 0:
        raise ValueError("dataset is empty")
    if images.shape[2] != cfg.image_size:
        raise ValueError(f"dataset images are {images.shape[2]}px, config says {cfg.image_size}px")

    ss = np.random.SeedSequence(cfg.seed)
    dec_seed, enc_seed, stream_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    net = build_generator("vae-mini", seed=dec_seed)
    encoder = _Encoder(net.latent_dim, seed=enc_seed)
    rng = np.random.default_rng(stream_seed)

    params = [p for _, p in net.params()] + encoder.params()
    for p in params:
        p.requires_grad = True
    opt = Adam(params, lr=cfg.lr)

    n = images.shape[0]
    npix = int(np.prod(images.shape[1:]))
    epoch_log: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses, recons, kls = [], [], []
        for start in range(0, n, cfg.batch_size):
            batch = images[order[start : start + cfg.batch_size]]
            bsz = batch.shape[0]
            x = Tensor(batch)
            eps = Tensor(rng.standard_normal((bsz, net.latent_dim)))

            opt.zero_grad()
            try:
                mu, logvar = encoder.forward(x)
                std = ad.exp(ad.mul(logvar, 0.5))
                z = ad.add(mu, ad.mul(std, eps))
                x_hat = net.forward_batch(z)
                diff = ad.add(x_hat, ad.mul(x, -1.0))
                recon = ad.mul(ad.mul(diff, diff).sum(), 1.0 / bsz)
                kl = ad.mul(_gaussian_kl(mu, logvar), 1.0 / bsz)
                loss = ad.add(recon, ad.mul(kl, cfg.beta))
                loss.backward()
            except NonFiniteError as exc:
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: {exc}; lower the learning rate"
                ) from exc
            opt.step()
            losses.append(loss.item())
            recons.append(recon.item())
            kls.append(kl.item())
        epoch_log.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "recon": float(np.mean(recons)),
                "kl": float(np.mean(kls)),
            }
        )

    if cfg.epochs > 1 and not epoch_log[-1]["loss"] < epoch_log[0]["loss"]:
        raise RuntimeError(
            f"training did not improve: first epoch {epoch_log[0]['loss']:.4f}, "
            f"final epoch {epoch_log[-1]['loss']:.4f}"
        )

    for p in params:
        p.requires_grad = False
        p.grad = None

    # deterministic reconstructions through the latent mean
    probe = images[: min(64, n)]
    mu, _ = encoder.forward(Tensor(probe))
    recon_imgs = net.forward_batch(mu).data
    recon_psnr = float(np.mean([psnr(t, r) for t, r in zip(probe, recon_imgs)]))

    log = {
        "epochs": epoch_log,
        "final_recon_psnr": recon_psnr,
        "config": asdict(cfg),
        "n_train_images": int(n),
    }
    return net, log
