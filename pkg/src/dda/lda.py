"""Closed-form two-class linear discriminant analysis.

For two classes the leading generalized eigenvector of the Fisher problem is
``S_W^{-1} (mu_1 - mu_0)``, so no eigensolver is needed.
"""
from dataclasses import dataclass

import numpy as np

from . import evaluate
from .losses import inverse_fisher
from .stats import summarize


@dataclass
class LinearDiscriminant:
    weights: np.ndarray
    threshold: float = 0.0
    regularization: float = 0.0
    # projected range used to map onto [0, 1] for the bounded threshold search
    lo: float = 0.0
    hi: float = 1.0

    def scaled(self, projections):
        span = self.hi - self.lo
        if span <= 0:
            return np.full_like(projections, 0.5)
        return np.clip((projections - self.lo) / span, 0.0, 1.0)


def _check_labels(features, labels):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = np.asarray(labels).ravel().astype(np.int64)
    if x.shape[0] != m.size:
        raise ValueError(f"{x.shape[0]} feature rows but {m.size} labels")
    if np.count_nonzero(m == 0) < 2 or np.count_nonzero(m == 1) < 2:
        raise ValueError("LDA needs at least two samples of each class")
    return x, m


def within_scatter(x, m):
    sw = np.zeros((x.shape[1], x.shape[1]))
    for cls in (0, 1):
        centered = x[m == cls] - x[m == cls].mean(axis=0)
        sw += centered.T @ centered
    return sw


def fit_lda(features, labels) -> LinearDiscriminant:
    x, m = _check_labels(features, labels)
    d = x.shape[1]
    diff = x[m == 1].mean(axis=0) - x[m == 0].mean(axis=0)
    sw = within_scatter(x, m)

    delta = 0.0
    if np.linalg.matrix_rank(sw) < d:
        delta = 1e-8 * np.trace(sw) / d
        if delta == 0.0:
            delta = 1e-8
        sw = sw + delta * np.eye(d)
    w = np.linalg.solve(sw, diff)
    norm = np.linalg.norm(w)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("class means coincide; no discriminant direction exists")
    w = w / norm
    proj = x @ w
    if proj[m == 1].mean() < proj[m == 0].mean():
        w = -w
        proj = -proj
    return LinearDiscriminant(weights=w, regularization=delta,
                              lo=float(proj.min()), hi=float(proj.max()))


def project(disc: LinearDiscriminant, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != disc.weights.size:
        raise ValueError(f"feature dimension {x.shape[1]} != discriminant dimension {disc.weights.size}")
    return x @ disc.weights


def fit_threshold(disc, features, labels, objective="f1", grid_steps=256):
    """Search the threshold on the min-max scaled projection; stores it in projected units."""
    scaled = disc.scaled(project(disc, features))
    t = evaluate.threshold_search(scaled, labels, objective, grid_steps)
    disc.threshold = disc.lo + t.value * (disc.hi - disc.lo)
    return t


def predict(disc, features):
    return (project(disc, features) >= disc.threshold).astype(np.int64)


def fisher_objective(disc, features, labels) -> float:
    """Inverse Fisher criterion of the projected data."""
    return inverse_fisher(summarize(project(disc, features), labels, with_gradients=False))


def best_cut_accuracy(projections, labels) -> float:
    """Exhaustive best accuracy over every cut point of a 1-D projection,
    allowing either orientation."""
    v = np.asarray(projections, dtype=np.float64).ravel()
    m = np.asarray(labels).ravel().astype(np.int64)
    order = np.argsort(v, kind="stable")
    v, m = v[order], m[order]
    n = v.size
    # predicted positive = everything at or above the cut; cut before index k
    pos_above = np.concatenate([np.cumsum(m[::-1])[::-1], [0]])
    neg_below = np.concatenate([[0], np.cumsum(1 - m)])
    correct = pos_above + neg_below
    # only cuts between distinct values are realizable
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = v[1:] != v[:-1]
    best = correct[valid].max() / n
    return float(max(best, 1.0 - correct[valid].min() / n))
