"""Finite-difference checks of every analytic gradient in the package.

Relative error of one instance is ``||analytic - numeric|| / max(||analytic||,
||numeric||)`` with central differences of step ``h``.
"""
from dataclasses import dataclass

import numpy as np

from . import losses, network
from .losses import LossConfig
from .seeding import make_rng
from .stats import ProjectedBatch, class_means, class_variances, stats_with_gradients

COMPONENTS = ("stats", "product", "dda_log", "dda_delta", "focal", "pdda", "network")
STEP = 1e-6


@dataclass
class CheckResult:
    component: str
    max_rel_error: float
    worst: str
    instances: int


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def central_difference(f, x, h=STEP):
    x = np.array(x, dtype=np.float64)
    out = np.empty(x.size)
    flat = x.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f(x)
        flat[k] = orig - h
        down = f(x)
        flat[k] = orig
        out[k] = (up - down) / (2.0 * h)
    return out.reshape(x.shape)


def random_labels(rng, n):
    """Binary labels with both classes present."""
    m = rng.integers(0, 2, size=n)
    if m.min() == m.max():
        m[rng.integers(0, n)] = 1 - m[0]
    return m


def _loss_cases(rng, n_batches, min_size, max_size):
    for b in range(n_batches):
        n = int(rng.integers(min_size, max_size + 1))
        yield b, rng.normal(0.0, 2.0, size=n), random_labels(rng, n)


def _loss_configs():
    return [LossConfig(dda_kind=losses.LOGARITHMIC), LossConfig(dda_kind=losses.DELTA)]


def check_stats(rng, n_batches, min_size, max_size, h=STEP):
    worst = (0.0, "")
    for b in range(n_batches):
        n = int(rng.integers(min_size, max_size + 1))
        v = rng.uniform(0.01, 0.99, size=n)
        m = random_labels(rng, n)
        st = stats_with_gradients(ProjectedBatch(v, m))
        for i in (0, 1):
            num_mean = central_difference(lambda x: class_means(ProjectedBatch(x, m))[i], v, h)
            num_var = central_difference(
                lambda x: class_variances(ProjectedBatch(x, m), class_means(ProjectedBatch(x, m)))[i], v, h)
            for name, a, nmr in (("dmean", st.dmean[i], num_mean), ("dvar", st.dvar[i], num_var)):
                e = rel_error(a, nmr)
                if e > worst[0]:
                    worst = (e, f"batch {b} (size {n}), {name}[{i}]")
    return CheckResult("stats", worst[0], worst[1], n_batches)


def check_loss(component, rng, n_batches, min_size, max_size, h=STEP):
    worst = (0.0, "")
    count = 0
    for b, y, m in _loss_cases(rng, n_batches, min_size, max_size):
        for cfg in _loss_configs():
            if component == "product":
                f = lambda x: losses.product_loss(ProjectedBatch.from_logits(x, m), cfg)
            elif component == "dda_log":
                f = lambda x: losses.dda_log(ProjectedBatch.from_logits(x, m), cfg)
            elif component == "dda_delta":
                f = lambda x: losses.dda_delta(ProjectedBatch.from_logits(x, m), cfg)
            elif component == "focal":
                f = lambda x: losses.focal(x, m, cfg)
            elif component == "pdda":
                f = lambda x: losses.pdda(x, m, cfg)
            else:
                raise ValueError(f"unknown component {component!r}")
            e = rel_error(f(y).grad_y, central_difference(lambda x: f(x).value, y, h))
            count += 1
            if e > worst[0]:
                worst = (e, f"batch {b} (size {y.size}), dda_kind={cfg.dda_kind}")
    return CheckResult(component, worst[0], worst[1], count)


def check_network(rng, n_instances=4, sizes=(2, 16, 16, 1), batch=24, h=STEP):
    """End-to-end: each trainable loss composed with an MLP forward pass."""
    arch = network.Architecture.mlp(*sizes)
    worst = (0.0, "")
    count = 0
    kinds = [("dda_log", LossConfig(dda_kind=losses.LOGARITHMIC)),
             ("dda_delta", LossConfig(dda_kind=losses.DELTA)),
             ("focal", LossConfig()),
             ("pdda_log", LossConfig(dda_kind=losses.LOGARITHMIC)),
             ("pdda_delta", LossConfig(dda_kind=losses.DELTA))]
    for inst in range(n_instances):
        x = rng.normal(size=(batch, sizes[0]))
        m = random_labels(rng, batch)
        params = network.init_params(arch, rng)
        params.flat += rng.normal(0.0, 0.1, size=params.flat.size)
        for name, cfg in kinds:
            def loss_of(y):
                if name.startswith("dda"):
                    return losses.dda(ProjectedBatch.from_logits(y, m), cfg)
                if name == "focal":
                    return losses.focal(y, m, cfg)
                return losses.pdda(y, m, cfg)

            def value(flat):
                _, cache = network.forward(network.ModelParams(arch, flat), x)
                return loss_of(cache["logits"]).value

            _, cache = network.forward(params, x)
            grads = network.backward(params, cache, loss_of(cache["logits"]).grad_y)
            e = rel_error(grads, central_difference(value, params.flat, h))
            count += 1
            if e > worst[0]:
                worst = (e, f"instance {inst}, loss {name}")
    return CheckResult("network", worst[0], worst[1], count)


def run(components=COMPONENTS, seed=0, n_batches=100, min_size=2, max_size=64, network_instances=4):
    results = []
    for k, comp in enumerate(components):
        rng = make_rng(seed, 100 + COMPONENTS.index(comp))
        if comp == "stats":
            results.append(check_stats(rng, n_batches, min_size, max_size))
        elif comp == "network":
            results.append(check_network(rng, network_instances))
        else:
            results.append(check_loss(comp, rng, n_batches, min_size, max_size))
    return results
