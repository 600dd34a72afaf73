"""Per-label confusion counting and the derived classification metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_LABELS_DEFAULT = 79


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, predicted: bool, actual: bool) -> None:
        if predicted and actual:
            self.tp += 1
        elif predicted and not actual:
            self.fp += 1
        elif not predicted and actual:
            self.fn += 1
        else:
            self.tn += 1

    def merge(self, other: "Confusion") -> "Confusion":
        return Confusion(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


def new_tables(n_labels: int = N_LABELS_DEFAULT) -> list[Confusion]:
    return [Confusion() for _ in range(n_labels)]


def accumulate(tables: list[Confusion], predicted, actual) -> None:
    """Count one multi-label decision into the per-label tables.

    ``predicted``/``actual`` are 0/1 vectors (or boolean arrays) of the same
    length as ``tables``.
    """
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != (len(tables),) or actual.shape != (len(tables),):
        raise ValueError(
            f"expected vectors of length {len(tables)}, got {predicted.shape} and {actual.shape}"
        )
    for table, p, a in zip(tables, predicted, actual):
        table.add(bool(p), bool(a))


def accuracy(c: Confusion) -> float:
    return (c.tp + c.tn) / c.total if c.total else 0.0


def precision(c: Confusion) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: Confusion) -> float:
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def f1(c: Confusion) -> float:
    p = precision(c)
    r = recall(c)
    return 2.0 * p * r / (p + r) if (p + r) else 0.0


def supported_labels(tables: list[Confusion]) -> list[int]:
    """Labels that actually occur: any true positive, miss, or false alarm."""
    return [i for i, c in enumerate(tables) if c.tp + c.fn + c.fp > 0]


def macro_average(tables: list[Confusion], labels=None) -> dict[str, float]:
    """Unweighted means of the per-label metrics (every label counts equally).

    ``labels`` restricts the average to a subset, e.g. the labels with support
    when the corpus covers fewer exploits than the label space holds.
    """
    subset = list(labels) if labels is not None else range(len(tables))
    chosen = [tables[i] for i in subset]
    if not chosen:
        raise ValueError("no labels to average over")
    return {
        "accuracy": float(np.mean([accuracy(c) for c in chosen])),
        "precision": float(np.mean([precision(c) for c in chosen])),
        "recall": float(np.mean([recall(c) for c in chosen])),
        "f1": float(np.mean([f1(c) for c in chosen])),
    }


def pooled(tables: list[Confusion], label_ids) -> Confusion:
    """Single confusion table summing the given labels (per-CWE reporting)."""
    out = Confusion()
    for i in label_ids:
        out = out.merge(tables[i])
    return out


def summarize(c: Confusion) -> dict[str, float]:
    return {
        "accuracy": accuracy(c),
        "precision": precision(c),
        "recall": recall(c),
        "f1": f1(c),
    }
