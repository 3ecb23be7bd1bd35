"""Differentiable per-class masses, means and variances of projected values.

Class ``i`` selects elements through the indicator ``m**i * (1 - m)**(1 - i)``,
so every statistic is an explicit function of the projections and carries an
exact partial derivative with respect to each of them.

Degenerate classes: a class with no members has an undefined mean (``None``);
a class with a single member has variance 0 (the unbiased ``n - 1``
denominator would vanish), and its variance gradient row is zero.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ProjectedBatch:
    """Sigmoid-bounded projections paired with binary labels."""

    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel()
        if values.shape != labels.shape:
            raise ValueError(f"values and labels differ in length: {values.size} != {labels.size}")
        if values.size == 0:
            raise ValueError("empty batch")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValueError("projected values must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", np.ascontiguousarray(labels, dtype=np.int64))

    @classmethod
    def from_logits(cls, logits, labels):
        return cls(sigmoid(np.asarray(logits, dtype=np.float64)), labels)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ClassStats:
    mass_0: float
    mass_1: float
    mean_0: Optional[float]
    mean_1: Optional[float]
    var_0: float
    var_1: float
    dmean: np.ndarray  # (2, N): d mean_i / d value_k
    dvar: np.ndarray   # (2, N): d var_i / d value_k

    @property
    def both_present(self):
        return self.mass_0 >= 1 and self.mass_1 >= 1

    def mass(self, i):
        return self.mass_1 if i else self.mass_0

    def mean(self, i):
        return self.mean_1 if i else self.mean_0

    def var(self, i):
        return self.var_1 if i else self.var_0


def sigmoid(y):
    """Logistic function, overflow-free for any finite input."""
    y = np.asarray(y, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -y))


def _check_nonempty(batch):
    if len(batch) == 0:
        raise ValueError("empty batch")


def class_masses(batch: ProjectedBatch) -> Tuple[float, float]:
    _check_nonempty(batch)
    n0, n1, _, _ = kernels.class_sums(batch.values, batch.labels)
    return n0, n1


def class_means(batch: ProjectedBatch) -> Tuple[Optional[float], Optional[float]]:
    _check_nonempty(batch)
    n0, n1, s0, s1 = kernels.class_sums(batch.values, batch.labels)
    return (s0 / n0 if n0 > 0 else None, s1 / n1 if n1 > 0 else None)


def class_variances(batch: ProjectedBatch, means) -> Tuple[float, float]:
    n0, n1 = class_masses(batch)
    m0 = means[0] if means[0] is not None else 0.0
    m1 = means[1] if means[1] is not None else 0.0
    q0, q1 = kernels.centered_squares(batch.values, batch.labels, m0, m1)
    return (q0 / (n0 - 1) if n0 > 1 else 0.0, q1 / (n1 - 1) if n1 > 1 else 0.0)


def summarize(values, labels, with_gradients=True) -> ClassStats:
    """Class statistics of arbitrary real values (no unit-interval check).

    Used directly for unbounded projections such as the linear discriminant's;
    :func:`stats_with_gradients` is the validated entry point for network
    outputs.
    """
    values = np.ascontiguousarray(values, dtype=np.float64).ravel()
    labels = np.ascontiguousarray(labels, dtype=np.int64).ravel()
    if values.size == 0:
        raise ValueError("empty batch")
    n0, n1, s0, s1 = kernels.class_sums(values, labels)
    mean0 = s0 / n0 if n0 > 0 else None
    mean1 = s1 / n1 if n1 > 0 else None
    q0, q1 = kernels.centered_squares(values, labels,
                                      0.0 if mean0 is None else mean0,
                                      0.0 if mean1 is None else mean1)
    var0 = q0 / (n0 - 1) if n0 > 1 else 0.0
    var1 = q1 / (n1 - 1) if n1 > 1 else 0.0

    n = values.size
    dmean = np.zeros((2, n))
    dvar = np.zeros((2, n))
    if with_gradients:
        pos = labels == 1
        for i, sel, mass, mean in ((0, ~pos, n0, mean0), (1, pos, n1, mean1)):
            if mass >= 1:
                dmean[i, sel] = 1.0 / mass
            if mass > 1:
                dvar[i, sel] = 2.0 * (values[sel] - mean) / (mass - 1)
    return ClassStats(n0, n1, mean0, mean1, var0, var1, dmean, dvar)


def stats_with_gradients(batch: ProjectedBatch) -> ClassStats:
    _check_nonempty(batch)
    return summarize(batch.values, batch.labels)
