"""Toy datasets and dataset loading (tensor files or 2-column CSV)."""

import csv
import os

import numpy as np

from dbae.errors import DataError, RaggedCsvError
from dbae.io.tensorfile import read_tensor, write_tensor

TOYS = ("two_moons", "circles", "eight_gaussians", "checkerboard", "shapes")


def two_moons(n, rng, noise=0.05):
    n_a = n // 2
    n_b = n - n_a
    ta = rng.uniform(0, np.pi, n_a)
    tb = rng.uniform(0, np.pi, n_b)
    a = np.stack([np.cos(ta), np.sin(ta)], axis=1)
    b = np.stack([1.0 - np.cos(tb), 0.5 - np.sin(tb)], axis=1)
    x = np.concatenate([a, b]) + noise * rng.standard_normal((n, 2))
    y = np.concatenate([np.zeros(n_a), np.ones(n_b)])
    perm = rng.permutation(n)
    return x[perm], y[perm]


def circles(n, rng, noise=0.05, factor=0.5):
    n_out = n // 2
    t = rng.uniform(0, 2 * np.pi, n)
    r = np.where(np.arange(n) < n_out, 1.0, factor)
    x = np.stack([r * np.cos(t), r * np.sin(t)], axis=1) + noise * rng.standard_normal((n, 2))
    y = (np.arange(n) >= n_out).astype(float)
    perm = rng.permutation(n)
    return x[perm], y[perm]


def eight_gaussians(n, rng, radius=2.0, std=0.1):
    k = rng.integers(0, 8, n)
    ang = k * np.pi / 4
    x = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1) + std * rng.standard_normal((n, 2))
    return x, k.astype(float)


def checkerboard(n, rng):
    x1 = rng.uniform(-2, 2, n)
    x2 = rng.uniform(0, 1, n) + rng.integers(0, 2, n) * 2.0 - 2.0 + (np.floor(x1) % 2)
    x = np.stack([x1, x2], axis=1)
    y = ((np.floor(x1) + np.floor(x2)) % 2).astype(float)
    return x, y


def shapes(n, rng, size=8):
    """Binary 8x8 grids: a filled square or a plus sign at random positions.

    Labels are (is_plus, is_top_half, is_large); images are in [0, 1].
    """
    imgs = np.zeros((n, size, size))
    labels = np.zeros((n, 3))
    for i in range(n):
        plus = rng.random() < 0.5
        large = rng.random() < 0.5
        s = 4 if large else 2
        r = rng.integers(0, size - s + 1)
        c = rng.integers(0, size - s + 1)
        if plus:
            mid_r, mid_c = r + s // 2, c + s // 2
            imgs[i, r:r + s, mid_c - (s == 4)] = 1.0
            imgs[i, mid_r - (s == 4), c:c + s] = 1.0
        else:
            imgs[i, r:r + s, c:c + s] = 1.0
        labels[i] = (plus, r + s / 2 <= size / 2, large)
    imgs += 0.02 * rng.standard_normal(imgs.shape)
    return imgs.reshape(n, -1).clip(0.0, 1.0), labels


def make_toy(name, n, seed=0):
    rng = np.random.default_rng(seed)
    makers = {"two_moons": two_moons, "circles": circles, "eight_gaussians": eight_gaussians,
              "checkerboard": checkerboard, "shapes": shapes}
    if name not in makers:
        raise DataError(f"unknown toy dataset {name!r}; choose from {TOYS}")
    return makers[name](n, rng)


def labels_path(path):
    root, ext = os.path.splitext(str(path))
    return f"{root}.labels{ext or '.dbt'}"


def save_dataset(path, data, labels=None):
    write_tensor(path, np.asarray(data, dtype=np.float64))
    if labels is not None:
        write_tensor(labels_path(path), np.asarray(labels, dtype=np.float64))


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c.replace("−", "-")) for c in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header line
                raise DataError(f"{path}:{lineno}: non-numeric entry in {row}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise RaggedCsvError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    return np.array(rows)


def load_dataset(path):
    """Return ``(data, labels)``; labels come from a sibling ``.labels`` file or are None."""
    path = str(path)
    if not os.path.exists(path):
        raise DataError(f"dataset {path} does not exist")
    if path.endswith(".csv"):
        data = read_csv(path)
        lp = labels_path(path)
        labels = read_csv(lp) if os.path.exists(lp) else None
        if labels is not None and labels.shape[1] == 1:
            labels = labels[:, 0]
    else:
        data = read_tensor(path)
        lp = labels_path(path)
        labels = read_tensor(lp) if os.path.exists(lp) else None
    if data.ndim != 2:
        data = data.reshape(len(data), -1)
    if labels is not None and len(labels) != len(data):
        raise DataError(f"{lp}: {len(labels)} labels for {len(data)} rows")
    return data, labels
