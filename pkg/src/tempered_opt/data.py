"""Synthetic three-class particle data: Gaussian blobs on an equilateral triangle."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .rng import seeded_rng

COLUMNS = ("X1", "Y2", "Yi1", "Yi2", "Yi3", "split")


@dataclass
class ParticleDataset:
    X: np.ndarray        # (360, 2)
    Y: np.ndarray        # (360, 3) one-hot
    train: np.ndarray    # boolean mask, 180 rows

    @property
    def labels(self) -> np.ndarray:
        return self.Y.argmax(axis=1)

    def split(self):
        t = self.train
        return self.X[t], self.Y[t], self.X[~t], self.Y[~t]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for x, y, t in zip(self.X, self.Y, self.train):
                w.writerow([repr(float(x[0])), repr(float(x[1])), *(int(v) for v in y), "train" if t else "test"])

    @classmethod
    def read_csv(cls, path) -> "ParticleDataset":
        rows = list(csv.DictReader(open(path, newline="")))
        X = np.array([[float(r["X1"]), float(r["Y2"])] for r in rows])
        Y = np.array([[int(r["Yi1"]), int(r["Yi2"]), int(r["Yi3"])] for r in rows], dtype=float)
        return cls(X, Y, np.array([r["split"] == "train" for r in rows]))


def class_centers(radius: float = 2.0) -> np.ndarray:
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def generate_particle_data(seed: int, per_class: int = 120, radius: float = 2.0,
                           noise: float = 1.2) -> ParticleDataset:
    """Balanced blobs; half of each class goes to training, half to testing."""
    rng = seeded_rng(seed)
    C = class_centers(radius)
    labels = np.repeat(np.arange(3), per_class)
    X = C[labels] + noise * rng.standard_normal((labels.size, 2))
    train = np.zeros(labels.size, dtype=bool)
    for c in range(3):
        idx = np.flatnonzero(labels == c)
        train[rng.permutation(idx)[: per_class // 2]] = True
    return ParticleDataset(X, np.eye(3)[labels], train)


def nearest_centroid_accuracy(ds: ParticleDataset, radius: float = 2.0) -> float:
    C = class_centers(radius)
    d = ((ds.X[:, None, :] - C[None]) ** 2).sum(-1)
    return float(np.mean(d.argmin(axis=1) == ds.labels))
