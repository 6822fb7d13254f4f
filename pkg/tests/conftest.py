"""Shared fixtures: a quickly trained net for plumbing tests and the full
desk-scale trained net for the acceptance suite.

Set GENCUT_TEST_CACHE to a directory to reuse the expensive trained weights
across pytest sessions during development; by default everything trains
fresh within the session.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for gradcheck helper imports

from gencut.datasets import generate_synthetic_dataset
from gencut.generator import load_weights, save_weights
from gencut.training import TrainConfig, train_vae

DESK_N_IMAGES = 2000
DESK_TRAIN = TrainConfig(epochs=30, batch_size=64, lr=1e-3, beta=1.0, seed=0)


def _cache_path(name: str) -> Path | None:
    root = os.environ.get("GENCUT_TEST_CACHE")
    if not root:
        return None
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


@pytest.fixture(scope="session")
def quick_weights(tmp_path_factory):
    """Small, fast training run: enough for CLI and plumbing tests."""
    data = generate_synthetic_dataset(120, size=32, seed=0)
    net, _ = train_vae(TrainConfig(epochs=2, batch_size=32, lr=1e-3, seed=0), data)
    path = tmp_path_factory.mktemp("quick") / "weights.gsgn"
    save_weights(net, path)
    return path


@pytest.fixture(scope="session")
def desk_dataset():
    return generate_synthetic_dataset(DESK_N_IMAGES, size=32, seed=0)


@pytest.fixture(scope="session")
def desk_net(desk_dataset, tmp_path_factory):
    """The desk-scale trained generator used by the acceptance criteria."""
    cached = _cache_path("desk_vae.gsgn")
    if cached is not None and cached.exists():
        return load_weights(cached, recipe="vae-mini")
    net, log = train_vae(DESK_TRAIN, desk_dataset)
    assert log["epochs"][-1]["loss"] < log["epochs"][0]["loss"]
    if cached is not None:
        save_weights(net, cached)
    else:
        save_weights(net, tmp_path_factory.mktemp("desk") / "weights.gsgn")
    return net


@pytest.fixture(scope="session")
def desk_weights_file(desk_net, tmp_path_factory):
    path = tmp_path_factory.mktemp("deskw") / "weights.gsgn"
    save_weights(desk_net, path)
    return path
