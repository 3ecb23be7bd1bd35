"""Deep discriminant analysis: Fisher-criterion losses for sigmoid-bounded networks."""
from ._accel import backend
from .losses import LossConfig, LossResult, dda_delta, dda_log, focal, pdda, product_loss
from .stats import ClassStats, ProjectedBatch, stats_with_gradients

__version__ = "0.1.0"
