"""Metric streams, evaluation reports and PGM image grids."""

import csv
import os
import re

import numpy as np

from dbae.train import METRIC_COLUMNS


class MetricsWriter:
    """Append-only CSV of training metrics, one row per step."""

    def __init__(self, path, columns=METRIC_COLUMNS):
        self.path = path
        self.columns = tuple(columns)
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)

    def __call__(self, row):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row.get(c, "")) for c in self.columns])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_eval_report(path, metrics, config_hash, seed):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["metric", "value", "config_hash", "seed"])
        for k, v in metrics.items():
            w.writerow([k, _fmt(v), config_hash, seed])


def write_pgm(path, img):
    """Binary (P5) 8-bit greyscale image from values in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    px = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    px = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)
    return px / float(maxval)


def tile_grid(images, shape, cols=8, pad=1):
    """Tile flattened images of ``shape`` into one padded mosaic."""
    images = np.asarray(images).reshape((-1,) + tuple(shape))
    n = len(images)
    rows = -(-n // cols)
    h, w = shape
    out = np.ones((rows * (h + pad) + pad, cols * (w + pad) + pad))
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        out[pad + r * (h + pad):pad + r * (h + pad) + h, pad + c * (w + pad):pad + c * (w + pad) + w] = im
    return out
