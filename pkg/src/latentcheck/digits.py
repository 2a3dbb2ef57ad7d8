"""Desk-scale handwritten-digit corpus in MNIST-shaped IDX files.

Real handwritten 8x8 digits (scikit-learn's bundled copy of the UCI
optical-recognition set) are upsampled to 28x28 with random affine jitter
(rotation, scale, shift) to yield an MNIST-like corpus at any size. Base
images are split between train and test before augmentation, so no
augmented variant of a training digit ever reaches the test split.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

from . import store

IMG = 28
SRC = 8

TRAIN_IMAGES = "train-images.idx3"
TRAIN_LABELS = "train-labels.idx1"
TEST_IMAGES = "t10k-images.idx3"
TEST_LABELS = "t10k-labels.idx1"


def _render(base: np.ndarray, angle: float, scale: float, shift: tuple[float, float]) -> np.ndarray:
    """Map one 8x8 digit onto a 28x28 canvas with an affine transform."""
    zoom = (IMG / SRC) * 0.82 * scale  # 0.82 leaves a margin like MNIST digits have
    c, s = math.cos(angle), math.sin(angle)
    matrix = np.array([[c, -s], [s, c]]) / zoom
    out_center = np.array([(IMG - 1) / 2.0, (IMG - 1) / 2.0]) + np.asarray(shift)
    in_center = np.array([(SRC - 1) / 2.0, (SRC - 1) / 2.0])
    offset = in_center - matrix @ out_center
    out = ndimage.affine_transform(
        base, matrix, offset=offset, output_shape=(IMG, IMG), order=3,
        mode="constant", cval=0.0,
    )
    out = ndimage.gaussian_filter(out, 0.7)  # soften the upsampling blockiness
    return np.clip(out, 0.0, 255.0)


def _augment(pool_images: np.ndarray, pool_labels: np.ndarray, count: int,
             rng: np.random.Generator):
    images = np.empty((count, IMG, IMG), dtype=np.uint8)
    labels = np.empty(count, dtype=np.uint8)
    order = rng.permutation(len(pool_images))
    for i in range(count):
        j = order[i % len(order)]
        if i < len(order):
            angle, scale, shift = 0.0, 1.0, (0.0, 0.0)  # first pass: clean upsample
        else:
            angle = math.radians(rng.uniform(-12.0, 12.0))
            scale = rng.uniform(0.88, 1.12)
            shift = tuple(rng.uniform(-1.5, 1.5, size=2))
        images[i] = np.round(_render(pool_images[j], angle, scale, shift)).astype(np.uint8)
        labels[i] = pool_labels[j]
    return images, labels


def shift_augment(flat_images: np.ndarray, labels: np.ndarray):
    """Original plus the four 1-pixel translations, for classifier training."""
    imgs = flat_images.reshape(-1, IMG, IMG)
    views = [imgs]
    for axis, delta in ((1, 1), (1, -1), (2, 1), (2, -1)):
        views.append(np.roll(imgs, delta, axis=axis))
    return np.concatenate(views).reshape(-1, IMG * IMG), np.tile(labels, 5)


def build_corpus(n_train: int = 10_000, n_test: int = 2_000, seed: int = 0):
    """Returns (train_images u8, train_labels, test_images u8, test_labels)."""
    raw = load_digits()
    base = raw.images * (255.0 / 16.0)
    labels = raw.target.astype(np.uint8)
    rng = np.random.default_rng(seed)

    test_pool = np.zeros(len(base), dtype=bool)
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        take = rng.permutation(idx)[: max(1, len(idx) // 6)]
        test_pool[take] = True

    train_x, train_y = _augment(base[~test_pool], labels[~test_pool], n_train, rng)
    test_x, test_y = _augment(base[test_pool], labels[test_pool], n_test, rng)
    return train_x, train_y, test_x, test_y


def write_corpus(directory, n_train: int = 10_000, n_test: int = 2_000, seed: int = 0) -> Path:
    """Build the corpus and persist it as the four standard IDX files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_x, train_y, test_x, test_y = build_corpus(n_train, n_test, seed)
    store.write_idx_images(directory / TRAIN_IMAGES, train_x)
    store.write_idx_labels(directory / TRAIN_LABELS, train_y)
    store.write_idx_images(directory / TEST_IMAGES, test_x)
    store.write_idx_labels(directory / TEST_LABELS, test_y)
    return directory


def load_corpus(directory):
    """(train_x, train_y, test_x, test_y) with images flattened to (N, 784) in [0,1]."""
    directory = Path(directory)
    train = store.load_dataset(directory / TRAIN_IMAGES, directory / TRAIN_LABELS)
    test = store.load_dataset(directory / TEST_IMAGES, directory / TEST_LABELS)
    return train[0], train[1], test[0], test[1]
