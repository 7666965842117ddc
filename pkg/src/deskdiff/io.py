"""CSV and PGM readers/writers for samples, trajectories and loss logs."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


def sample_columns(dim: int) -> list:
    return ["x", "y"] if dim == 2 else [f"x{i}" for i in range(dim)]


def write_samples_csv(path, samples: np.ndarray, class_ids=None) -> None:
    """Write one row per sample; a ``class`` column is added when given."""
    samples = np.asarray(samples, dtype=np.float64)
    header = sample_columns(samples.shape[1])
    if class_ids is not None:
        header.append("class")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(samples):
            vals = [repr(float(v)) for v in row]
            if class_ids is not None:
                vals.append(str(int(np.broadcast_to(class_ids, (len(samples),))[i])))
            w.writerow(vals)


def read_samples_csv(path):
    """Return ``(samples, class_ids or None)`` from a samples CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file (missing header)")
    header, body = rows[0], rows[1:]
    has_class = header[-1] == "class"
    dim = len(header) - int(has_class)
    if header[:dim] != sample_columns(dim):
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.array([[float(v) for v in r[:dim]] for r in body], dtype=np.float64).reshape(-1, dim)
    classes = np.array([int(r[dim]) for r in body], dtype=np.int64) if has_class else None
    return data, classes


def write_trajectory_csv(path, trajectory: np.ndarray) -> None:
    """Rows of ``step, sample, coordinates`` with step running ``T .. 0``."""
    steps = trajectory.shape[0] - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "sample", *sample_columns(trajectory.shape[2])])
        for k, state in enumerate(trajectory):
            for j, row in enumerate(state):
                w.writerow([steps - k, j, *(repr(float(v)) for v in row)])


def write_loss_csv(path, reports) -> None:
    terms = sorted({k for r in reports for k in r.per_term})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", *terms])
        for r in reports:
            w.writerow([r.step, repr(r.loss), *(repr(r.per_term.get(k, float("nan"))) for k in terms)])


def write_pgm_grid(path, images: np.ndarray, size: int, pad: int = 1) -> None:
    """Tile flattened ``size x size`` images (values in [0, 1]) into one plain PGM."""
    images = np.asarray(images, dtype=np.float64).reshape(-1, size, size)
    n = images.shape[0]
    cols = max(1, math.ceil(math.sqrt(n))) if n else 0
    rows = math.ceil(n / cols) if n else 0
    width = cols * size + max(cols - 1, 0) * pad
    height = rows * size + max(rows - 1, 0) * pad
    canvas = np.zeros((height, width), dtype=np.int64)
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        y, x = r * (size + pad), c * (size + pad)
        canvas[y:y + size, x:x + size] = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.int64)
    lines = ["P2", f"{width} {height}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in canvas)
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    values = np.array(tokens[4:], dtype=np.int64)
    return values.reshape(height, width) / maxval
