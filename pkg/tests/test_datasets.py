"""Synthetic dataset determinism, partitioning, and non-degeneracy."""

import numpy as np
import pytest

from gencut.datasets import Dataset, generate_synthetic_dataset, load_image_folder


def test_same_seed_identical():
    a = generate_synthetic_dataset(40, size=32, seed=5)
    b = generate_synthetic_dataset(40, size=32, seed=5)
    assert np.array_equal(a.images, b.images)
    assert a.families == b.families and a.splits == b.splits


def test_different_seed_differs():
    a = generate_synthetic_dataset(20, size=32, seed=1)
    b = generate_synthetic_dataset(20, size=32, seed=2)
    assert not np.array_equal(a.images, b.images)


def test_families_partition_the_set():
    data = generate_synthetic_dataset(40, size=32, seed=0)
    n_faces = data.select(family="faces").shape[0]
    n_scenes = data.select(family="scenes").shape[0]
    assert n_faces + n_scenes == len(data)
    assert set(data.families) == {"faces", "scenes"}


def test_split_sizes():
    data = generate_synthetic_dataset(100, size=32, seed=0)
    faces_train = data.select(family="faces", split="train").shape[0]
    faces_val = data.select(family="faces", split="val").shape[0]
    faces_test = data.select(family="faces", split="test").shape[0]
    assert (faces_train, faces_val, faces_test) == (80, 10, 10)
    # scenes are never trainable: they model out-of-distribution targets
    assert data.select(family="scenes", split="train").shape[0] == 0


def test_pixel_range_and_histogram_span():
    data = generate_synthetic_dataset(60, size=32, seed=3)
    imgs = data.images
    assert imgs.min() >= -1.0 and imgs.max() <= 1.0
    # histogram spans more than half of [-1, 1]
    assert imgs.max() - imgs.min() > 1.0
    hist, _ = np.histogram(imgs, bins=64, range=(-1.0, 1.0))
    assert np.mean(hist > 0) > 0.5


def test_dataset_length_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1, 4, 4)), ["faces"] * 2, ["train"] * 3)


def test_minimum_size():
    with pytest.raises(ValueError):
        generate_synthetic_dataset(0)


def test_load_image_folder_roundtrip(tmp_path):
    from PIL import Image

    rng = np.random.default_rng(0)
    for i in range(5):
        arr = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(tmp_path / f"img_{i}.png")
    data = load_image_folder(tmp_path, size=32)
    assert len(data) == 5
    assert data.image_shape == (1, 32, 32)
    assert data.images.min() >= -1.0 and data.images.max() <= 1.0


def test_load_image_folder_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image_folder(tmp_path)
