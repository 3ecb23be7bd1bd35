"""Training runs, evaluation of trained models, and the lambda_p sweep."""
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

import numpy as np

from . import data as data_mod
from . import evaluate, lda, losses, network
from .losses import DELTA, LOGARITHMIC, LossConfig
from .seeding import AUGMENT, INIT, SHUFFLE, derive_seed, make_rng
from .stats import ProjectedBatch, sigmoid

log = logging.getLogger(__name__)

LOSS_KINDS = ("lda-baseline", "dda_log", "dda_delta", "focal_only", "pdda_log", "pdda_delta")
METHOD_NAMES = {"lda-baseline": "LDA", "dda_log": "DDA(ln)", "dda_delta": "DDA(delta)",
                "focal_only": "L_P", "pdda_log": "PDDA(ln)", "pdda_delta": "PDDA(delta)"}
_DDA_KIND = {"dda_log": LOGARITHMIC, "pdda_log": LOGARITHMIC,
             "dda_delta": DELTA, "pdda_delta": DELTA}


class NonFiniteLossError(RuntimeError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class TrainConfig:
    loss: str = "pdda_log"
    dda_kind: Optional[str] = None
    lambda_f: Optional[float] = None
    lambda_p: Optional[float] = None
    gamma: float = 2.0
    alpha: float = 0.25
    arch: str = "mlp"
    hidden: Tuple[int, ...] = (32, 32)
    channels: Tuple[int, int] = (8, 16)
    coords: bool = False
    lr: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 3
    lr_factor: float = 0.5
    plateau_tol: float = 1e-4
    stop_after_reductions: int = 3
    augment: bool = True
    seed: int = 0
    dataset: Optional[str] = None
    threshold_objective: str = "f1"
    grid_steps: int = 256
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.channels = tuple(int(c) for c in self.channels)
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss!r}; expected one of {LOSS_KINDS}")
        implied = _DDA_KIND.get(self.loss)
        if self.dda_kind is None:
            self.dda_kind = implied or LOGARITHMIC
        elif implied is not None and self.dda_kind != implied:
            raise ValueError(f"loss {self.loss!r} requires dda_kind={implied!r}, got {self.dda_kind!r}")
        for name in ("lr", "batch_size", "max_epochs", "patience", "grid_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.arch not in ("mlp", "encdec"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.threshold_objective not in evaluate.OBJECTIVES:
            raise ValueError(f"unknown threshold objective {self.threshold_objective!r}")
        self.loss_config()  # validates the loss hyperparameters

    def loss_config(self) -> LossConfig:
        return LossConfig(dda_kind=self.dda_kind, lambda_f=self.lambda_f, lambda_p=self.lambda_p,
                          gamma=self.gamma, alpha=self.alpha)

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunRecord:
    config: dict
    effective_loss_config: dict
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    epochs: int = 0
    stopped_early: bool = False
    threshold: Optional[dict] = None
    val_metrics: Optional[dict] = None
    test_metrics: Optional[dict] = None
    wall_time: float = 0.0
    checkpoint: Optional[str] = None
    backend: str = ""

    def to_dict(self):
        return asdict(self)

    @property
    def method(self):
        return METHOD_NAMES[self.config["loss"]]

    def comparable(self):
        d = self.to_dict()
        d.pop("wall_time")
        return d


def loss_fn(kind, cfg: LossConfig):
    """``(logits, labels) -> LossResult`` for a trainable loss kind."""
    if kind in ("dda_log", "dda_delta"):
        return lambda y, m: losses.dda(ProjectedBatch.from_logits(y, m), cfg)
    if kind == "focal_only":
        return lambda y, m: losses.focal(y, m, cfg)
    if kind in ("pdda_log", "pdda_delta"):
        return lambda y, m: losses.pdda(y, m, cfg)
    raise ValueError(f"loss kind {kind!r} has no gradient-based loss")


# --------------------------------------------------------------------------
# data plumbing

def _resolve_splits(cfg, splits):
    if splits is not None:
        return splits
    if cfg.dataset is None:
        raise DatasetError("no dataset given: set `dataset` or pass splits")
    if not os.path.isdir(cfg.dataset):
        raise DatasetError(f"dataset directory {cfg.dataset} does not exist")
    _, loaded, _ = data_mod.load_dataset(cfg.dataset)
    return loaded


def _is_image_split(split):
    return isinstance(split, (list, tuple))


def _check_split(name, labels):
    n1 = int(np.count_nonzero(labels == 1))
    if n1 == 0 or n1 == labels.size:
        raise DatasetError(f"split {name!r} holds only one class")


class _Split:
    """A split flattened into network inputs and per-output labels."""

    def __init__(self, name, split, cfg):
        self.name = name
        self.is_image = _is_image_split(split)
        if self.is_image:
            exs = split
            if cfg.arch == "encdec":
                self.inputs = np.stack([_image_input(e.image, cfg.coords) for e in exs])
            else:
                self.inputs = np.concatenate([data_mod.pixel_features(e.image, cfg.coords) for e in exs])
            self.labels = np.concatenate([e.mask.ravel() for e in exs]).astype(np.int64)
        else:
            if cfg.arch != "mlp":
                raise DatasetError("point datasets need the mlp architecture")
            self.inputs = np.asarray(split.features, dtype=np.float64)
            self.labels = np.asarray(split.labels, dtype=np.int64)
        _check_split(name, self.labels)

    @property
    def input_dim(self):
        return self.inputs.shape[-1]


def _image_input(image, coords):
    if not coords:
        return image
    h, w, _ = image.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.dstack([image, yy / max(h - 1, 1), xx / max(w - 1, 1)])


def _architecture(cfg, input_dim):
    if cfg.arch == "mlp":
        return network.Architecture.mlp(input_dim, *cfg.hidden, 1)
    return network.Architecture.encdec(input_dim, *cfg.channels)


def _train_batches(cfg, train_split, raw_split, epoch):
    """Yield (inputs, labels) mini-batches for one epoch in a seeded order."""
    rng = make_rng(cfg.seed, SHUFFLE, epoch)
    if not train_split.is_image:
        order = rng.permutation(train_split.labels.size)
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            yield train_split.inputs[idx], train_split.labels[idx]
        return
    order = rng.permutation(len(raw_split))
    for start in range(0, order.size, cfg.batch_size):
        exs = []
        for k in order[start:start + cfg.batch_size]:
            ex = raw_split[k]
            if cfg.augment:
                ex = data_mod.augment(ex, derive_seed(cfg.seed, AUGMENT, epoch, int(k)))
            exs.append(ex)
        labels = np.concatenate([e.mask.ravel() for e in exs]).astype(np.int64)
        if cfg.arch == "encdec":
            inputs = np.stack([_image_input(e.image, cfg.coords) for e in exs])
        else:
            inputs = np.concatenate([data_mod.pixel_features(e.image, cfg.coords) for e in exs])
        yield inputs, labels


def predict_logits(params, inputs, chunk=64):
    """Raw outputs for a whole split, flattened; image inputs are run in chunks."""
    if params.arch.kind == "mlp":
        _, cache = network.forward(params, inputs)
        return cache["logits"]
    parts = []
    for start in range(0, inputs.shape[0], chunk):
        _, cache = network.forward(params, inputs[start:start + chunk])
        parts.append(cache["logits"].ravel())
    return np.concatenate(parts)


def _finite_or_raise(value, grad, where):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteLossError(f"non-finite loss or gradient at {where}")


# --------------------------------------------------------------------------
# runs

def evaluate_model(params, cfg, val: _Split, test: _Split):
    """Fit the threshold on validation outputs, then score the test split with it."""
    val_s = sigmoid(predict_logits(params, val.inputs))
    test_s = sigmoid(predict_logits(params, test.inputs))
    thr = evaluate.threshold_search(val_s, val.labels, cfg.threshold_objective, cfg.grid_steps)
    val_m = evaluate.compute_metrics((val_s >= thr.value).astype(np.int64), val.labels, val_s)
    test_m = evaluate.compute_metrics((test_s >= thr.value).astype(np.int64), test.labels, test_s)
    return thr, val_m, test_m, test_s


def _run_lda(cfg, tr, va, te, record):
    disc = lda.fit_lda(tr.inputs, tr.labels)
    val_s = disc.scaled(lda.project(disc, va.inputs))
    test_s = disc.scaled(lda.project(disc, te.inputs))
    thr = evaluate.threshold_search(val_s, va.labels, cfg.threshold_objective, cfg.grid_steps)
    record.threshold = asdict(thr)
    record.val_metrics = evaluate.compute_metrics(
        (val_s >= thr.value).astype(np.int64), va.labels, val_s).to_dict()
    record.test_metrics = evaluate.compute_metrics(
        (test_s >= thr.value).astype(np.int64), te.labels, test_s).to_dict()
    record.effective_loss_config["lda_regularization"] = disc.regularization
    return test_s


def train(cfg: TrainConfig, splits=None) -> RunRecord:
    t0 = time.perf_counter()
    splits = _resolve_splits(cfg, splits)
    tr = _Split("train", splits["train"], cfg)
    va = _Split("val", splits["val"], cfg)
    te = _Split("test", splits["test"], cfg)
    lcfg = cfg.loss_config()
    record = RunRecord(config=cfg.to_dict(), effective_loss_config=_loss_config_dict(cfg, lcfg))
    from . import _accel
    record.backend = _accel.backend()

    if cfg.loss == "lda-baseline":
        if tr.is_image and cfg.arch != "mlp":
            raise DatasetError("lda-baseline works on per-pixel features (arch mlp)")
        test_s = _run_lda(cfg, tr, va, te, record)
        _finish(cfg, record, None, test_s, te.labels, t0)
        return record

    fn = loss_fn(cfg.loss, lcfg)
    params = network.init_params(_architecture(cfg, tr.input_dim), make_rng(cfg.seed, INIT))
    state = network.OptimState.create(params.n_params, cfg.lr)
    best_flat = params.flat.copy()
    best_val = np.inf

    for epoch in range(cfg.max_epochs):
        total = 0.0
        n_batches = 0
        for b, (x, m) in enumerate(_train_batches(cfg, tr, splits["train"], epoch)):
            _, cache = network.forward(params, x)
            res = fn(cache["logits"].ravel(), m)
            _finite_or_raise(res.value, res.grad_y, f"epoch {epoch}, batch {b}")
            grads = network.backward(params, cache, res.grad_y.reshape(cache["logits"].shape))
            _finite_or_raise(0.0, grads, f"epoch {epoch}, batch {b} (parameter gradients)")
            network.adam_step(params, grads, state)
            total += res.value
            n_batches += 1
        val_res = fn(predict_logits(params, va.inputs), va.labels)
        _finite_or_raise(val_res.value, val_res.grad_y, f"epoch {epoch}, validation")
        record.train_loss.append(total / n_batches)
        record.val_loss.append(val_res.value)
        record.lr.append(state.lr)
        if val_res.value < best_val:
            best_val = val_res.value
            best_flat = params.flat.copy()
        network.plateau_scheduler(state, val_res.value, cfg.patience, cfg.lr_factor, cfg.plateau_tol)
        record.epochs = epoch + 1
        log.debug("epoch %d train %.6g val %.6g lr %.3g", epoch, record.train_loss[-1],
                  val_res.value, state.lr)
        if state.stale_reductions >= cfg.stop_after_reductions:
            record.stopped_early = True
            break

    params.flat[...] = best_flat
    thr, val_m, test_m, test_s = evaluate_model(params, cfg, va, te)
    record.threshold = asdict(thr)
    record.val_metrics = val_m.to_dict()
    record.test_metrics = test_m.to_dict()
    _finish(cfg, record, params, test_s, te.labels, t0)
    return record


def _loss_config_dict(cfg, lcfg):
    d = asdict(lcfg)
    d["focal_normalization"] = "mean"
    d["kind"] = cfg.loss
    return d


def _finish(cfg, record, params, test_s, test_labels, t0):
    record.wall_time = time.perf_counter() - t0
    if cfg.output_dir is None:
        return
    os.makedirs(cfg.output_dir, exist_ok=True)
    if params is not None:
        record.checkpoint = os.path.join(cfg.output_dir, "model.dda")
        network.save_checkpoint(record.checkpoint, params)
    evaluate.write_histogram_csv(os.path.join(cfg.output_dir, "histogram.csv"), test_s, test_labels)
    save_record(os.path.join(cfg.output_dir, "run.json"), record)


def save_record(path, record: RunRecord):
    with open(path, "w") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_record(path) -> RunRecord:
    with open(path) as fh:
        return RunRecord(**json.load(fh))


def evaluate_checkpoint(checkpoint, cfg: TrainConfig, splits=None):
    """Re-score a saved model: threshold from validation, metrics on test."""
    splits = _resolve_splits(cfg, splits)
    params = network.load_checkpoint(checkpoint)
    va = _Split("val", splits["val"], cfg)
    te = _Split("test", splits["test"], cfg)
    thr, val_m, test_m, _ = evaluate_model(params, cfg, va, te)
    return thr, val_m, test_m


# --------------------------------------------------------------------------
# lambda_p sweep

def _sweep_one(args):
    base, value, splits = args
    d = base.to_dict()
    d["lambda_p"] = value
    if base.output_dir is not None:
        d["output_dir"] = os.path.join(base.output_dir, f"lambda_p_{value!r}")
    return train(TrainConfig.from_dict(d), splits)


def sweep_lambda_p(base_cfg: TrainConfig, values, splits=None, jobs=1, csv_path=None):
    """One run per lambda_p with everything else fixed; rows come back in input order."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one lambda_p value")
    if base_cfg.loss not in ("pdda_log", "pdda_delta"):
        raise ValueError("lambda_p sweeps need a pdda loss kind")
    splits = _resolve_splits(base_cfg, splits)
    tasks = [(base_cfg, v, splits) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_sweep_one, tasks))
    else:
        records = [_sweep_one(t) for t in tasks]
    if csv_path is not None:
        write_sweep_csv(csv_path, records)
    return records


def table_rows(records):
    for rec in records:
        lam = rec.config["lambda_p"] if rec.config["loss"].startswith("pdda") else None
        yield rec.method, lam, evaluate.SegMetrics(**rec.test_metrics)


def write_sweep_csv(path, records):
    evaluate.write_table_csv(path, table_rows(records))
