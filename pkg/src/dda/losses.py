"""Fisher-criterion losses, focal loss and their probabilistic combination.

Every trainable loss returns a :class:`LossResult` whose gradient is taken
with respect to the raw, pre-sigmoid network output ``y``; the chain through
``sigmoid'(y) = s (1 - s)`` happens here so callers see a single contract.
The discriminant losses read their class statistics from :mod:`dda.stats`
and vanish (value 0, gradient 0) on batches holding only one class.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .stats import ProjectedBatch, sigmoid, stats_with_gradients

LOG_EPSILON = 1.0 + 1e-8
PROB_EPSILON = 1e-12

LOGARITHMIC = "logarithmic"
DELTA = "delta"

# per-variant defaults for the variance balance and the PDDA mixing weight
DEFAULT_LAMBDA_F = {DELTA: 0.4, LOGARITHMIC: 0.9}
DEFAULT_LAMBDA_P = {DELTA: 1.0, LOGARITHMIC: 0.1}


@dataclass(frozen=True)
class LossConfig:
    dda_kind: str = LOGARITHMIC
    lambda_f: Optional[float] = None
    lambda_p: Optional[float] = None
    gamma: float = 2.0
    alpha: float = 0.25
    epsilon_prob: float = PROB_EPSILON
    epsilon_log: float = field(default=LOG_EPSILON, init=False)

    def __post_init__(self):
        if self.dda_kind not in (LOGARITHMIC, DELTA):
            raise ValueError(f"unknown dda_kind {self.dda_kind!r}")
        if self.lambda_f is None:
            object.__setattr__(self, "lambda_f", DEFAULT_LAMBDA_F[self.dda_kind])
        if self.lambda_p is None:
            object.__setattr__(self, "lambda_p", DEFAULT_LAMBDA_P[self.dda_kind])
        if self.lambda_f < 0 or self.lambda_p < 0 or self.gamma < 0:
            raise ValueError("lambda_f, lambda_p and gamma must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.epsilon_prob <= 1e-6:
            raise ValueError("epsilon_prob must lie in (0, 1e-6]")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_y: np.ndarray


class DegenerateSeparationError(ZeroDivisionError):
    pass


def _chain_sigmoid(batch, grad_s):
    s = batch.values
    return grad_s * s * (1.0 - s)


def _zero(batch):
    return LossResult(0.0, np.zeros(len(batch)))


def inverse_fisher(stats) -> float:
    """Within-class over squared between-class spread; diagnostic only."""
    if not stats.both_present:
        raise ValueError("inverse Fisher criterion needs both classes")
    gap = stats.mean_0 - stats.mean_1
    if gap == 0.0:
        raise DegenerateSeparationError(
            f"degenerate separation: class means are equal ({stats.mean_0!r})")
    return (stats.var_0 + stats.var_1) / (gap * gap)


def squared_gap_gradient(mu0, mu1, dmu0, dmu1) -> float:
    """Directional derivative of ``(mu0 - mu1)**2``."""
    return 2.0 * (mu0 - mu1) * (dmu0 - dmu1)


def product_loss(batch: ProjectedBatch, cfg: LossConfig = None) -> LossResult:
    """Signed mean gap times the summed class variances."""
    st = stats_with_gradients(batch)
    if not st.both_present:
        return _zero(batch)
    gap = st.mean_0 - st.mean_1
    spread = st.var_0 + st.var_1
    grad_s = (st.dmean[0] - st.dmean[1]) * spread + gap * (st.dvar[0] + st.dvar[1])
    return LossResult(gap * spread, _chain_sigmoid(batch, grad_s))


def dda_log(batch: ProjectedBatch, cfg: LossConfig) -> LossResult:
    st = stats_with_gradients(batch)
    if not st.both_present:
        return _zero(batch)
    eps = cfg.epsilon_log
    gap_arg = eps + st.mean_0 - st.mean_1
    spread_arg = eps + st.var_0 + st.var_1
    value = math.log(gap_arg) + cfg.lambda_f * math.log(spread_arg)
    grad_s = ((st.dmean[0] - st.dmean[1]) / gap_arg
              + cfg.lambda_f * (st.dvar[0] + st.dvar[1]) / spread_arg)
    return LossResult(value, _chain_sigmoid(batch, grad_s))


def dda_delta(batch: ProjectedBatch, cfg: LossConfig) -> LossResult:
    st = stats_with_gradients(batch)
    if not st.both_present:
        return _zero(batch)
    value = (st.mean_0 - st.mean_1) + cfg.lambda_f * (st.var_0 + st.var_1)
    grad_s = (st.dmean[0] - st.dmean[1]) + cfg.lambda_f * (st.dvar[0] + st.dvar[1])
    return LossResult(value, _chain_sigmoid(batch, grad_s))


def dda(batch: ProjectedBatch, cfg: LossConfig) -> LossResult:
    return dda_log(batch, cfg) if cfg.dda_kind == LOGARITHMIC else dda_delta(batch, cfg)


def focal(logits, labels, cfg: LossConfig) -> LossResult:
    """Class-weighted focal loss, averaged over the batch.

    The probability is clamped to ``[eps, 1 - eps]`` and the clamped value is
    used in both the loss and its gradient, keeping saturated outputs finite.
    """
    y = np.asarray(logits, dtype=np.float64).ravel()
    m = np.asarray(labels).ravel()
    if y.shape != m.shape:
        raise ValueError(f"logits and labels differ in length: {y.size} != {m.size}")
    if y.size == 0:
        raise ValueError("empty batch")
    pos = m == 1
    eps = cfg.epsilon_prob
    s = np.clip(sigmoid(y), eps, 1.0 - eps)
    t = 1.0 - s
    gamma, alpha = cfg.gamma, cfg.alpha
    log_s = np.log(s)
    log_t = np.log(t)

    per = np.where(pos, -alpha * t ** gamma * log_s, -(1.0 - alpha) * s ** gamma * log_t)
    g_pos = alpha * (gamma * t ** gamma * s * log_s - t ** (gamma + 1.0))
    g_neg = -(1.0 - alpha) * (gamma * s ** gamma * t * log_t - s ** (gamma + 1.0))
    n = y.size
    return LossResult(float(np.sum(per)) / n, np.where(pos, g_pos, g_neg) / n)


def pdda(logits, labels, cfg: LossConfig) -> LossResult:
    """Focal loss plus ``lambda_p`` times the configured discriminant loss."""
    prob = focal(logits, labels, cfg)
    if cfg.lambda_p == 0.0:
        return prob
    disc = dda(ProjectedBatch.from_logits(logits, labels), cfg)
    return LossResult(prob.value + cfg.lambda_p * disc.value,
                      prob.grad_y + cfg.lambda_p * disc.grad_y)


def gap_descent_trace(logits, labels, squared, steps=50, lr=1.0):
    """Run plain gradient steps on the raw outputs and record the class means.

    ``squared=True`` maximizes the squared mean gap (the unsigned Fisher
    numerator); ``squared=False`` minimizes the signed gap ``mean_0 - mean_1``.
    Returns an array of shape ``(steps + 1, 2)`` with ``(mean_0, mean_1)``.
    """
    y = np.array(logits, dtype=np.float64)
    trace = []
    for step in range(steps + 1):
        st = stats_with_gradients(ProjectedBatch.from_logits(y, labels))
        trace.append((st.mean_0, st.mean_1))
        if step == steps:
            break
        gap = st.mean_0 - st.mean_1
        dgap = st.dmean[0] - st.dmean[1]
        if squared:
            grad_s = -2.0 * gap * dgap
        else:
            grad_s = dgap
        s = sigmoid(y)
        y = y - lr * grad_s * s * (1.0 - s)
    return np.array(trace)
