"""PCA of flattened adjacency matrices and small diagnostics built on it."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, diff_histogram, write_histogram_csv

__all__ = [
    "RankError",
    "PcaResult",
    "pca",
    "pca_features",
    "export_projection",
    "read_projection",
    "linear_separability",
    "diff_histogram",
    "write_histogram_csv",
]


class RankError(ValueError):
    pass


@dataclass
class PcaResult:
    components: np.ndarray  # (k, features), orthonormal rows
    explained_variance: np.ndarray  # (k,), nonincreasing
    total_variance: float
    mean: np.ndarray
    projected: np.ndarray  # (samples, k)
    labels: np.ndarray
    meta: dict = field(default_factory=lambda: {"centered": True, "scaled": False})

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance

    def reconstruct(self, features: np.ndarray) -> np.ndarray:
        z = (features - self.mean) @ self.components.T
        return z @ self.components + self.mean

    def summary(self) -> dict:
        return {
            "k": self.k,
            "explained_variance": self.explained_variance.tolist(),
            "explained_ratio": self.explained_ratio().tolist(),
            "total_variance": self.total_variance,
            **self.meta,
        }

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def pca_features(ds: Dataset) -> np.ndarray:
    x, _ = ds.arrays()
    return x.reshape(len(x), -1)


def pca(data, k: int, labels=None) -> PcaResult:
    """Top-k principal directions of the sample covariance.

    ``data`` is a Dataset (features are the flattened adjacency entries,
    unscaled) or a (samples, features) array. Each component's sign is
    chosen so its largest-magnitude coordinate is positive.
    """
    if isinstance(data, Dataset):
        labels = data.labels if labels is None else labels
        x = pca_features(data)
    else:
        x = np.asarray(data, dtype=float)
    n, f = x.shape
    if not 1 <= k <= f:
        raise ValueError(f"k must lie in 1..{f}, got {k}")
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} samples, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    total = float((xc**2).sum() / (n - 1))
    if total <= 1e-14:
        raise RankError("all samples are identical; covariance has rank 0")
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k].copy()
    lead = np.abs(comps).argmax(axis=1)
    comps *= np.sign(comps[np.arange(k), lead])[:, None]
    var = s[:k] ** 2 / (n - 1)
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
    return PcaResult(comps, var, total, mean, xc @ comps.T, labels)


def export_projection(r: PcaResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"pc{i + 1}" for i in range(r.k)] + ["label"])
        for row, lab in zip(r.projected, r.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_projection(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    coords = np.array([[float(v) for v in r[:-1]] for r in body])
    return coords, np.array([int(r[-1]) for r in body])


def linear_separability(r: PcaResult, seed: int = 0) -> float:
    """Training accuracy of a logistic-regression separator on the projections.

    An upper estimate of how well any linear boundary in PC space splits
    the two classes.
    """
    from sklearn.linear_model import LogisticRegression

    clf = LogisticRegression(random_state=seed, max_iter=1000)
    clf.fit(r.projected, r.labels)
    return float(clf.score(r.projected, r.labels))
