"""Confusion counts and the derived binary-classification metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Confusion", "confusion", "ratio"]


def ratio(num: float, den: float) -> float:
    return float(num) / den if den else 0.0


@dataclass(frozen=True)
class Confusion:
    """Counts with class ``positive`` as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def accuracy(self) -> float:
        return ratio(self.tp + self.tn, self.total)

    def precision(self) -> float:
        return ratio(self.tp, self.tp + self.fp)

    def recall(self) -> float:
        return ratio(self.tp, self.tp + self.fn)

    def f1(self) -> float:
        return ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    def f1_harmonic(self) -> float:
        p, r = self.precision(), self.recall()
        return 2.0 / (1.0 / r + 1.0 / p) if p > 0 and r > 0 else 0.0

    def flipped(self) -> Confusion:
        """Same predictions with the other class taken as positive."""
        return Confusion(self.tn, self.tp, self.fn, self.fp)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(y_true, y_pred, positive: int = 1) -> Confusion:
    y_true = np.asarray(y_true) == positive
    y_pred = np.asarray(y_pred) == positive
    return Confusion(
        tp=int(np.sum(y_true & y_pred)),
        tn=int(np.sum(~y_true & ~y_pred)),
        fp=int(np.sum(~y_true & y_pred)),
        fn=int(np.sum(y_true & ~y_pred)),
    )
