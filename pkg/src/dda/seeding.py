"""Named, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus
a path of integers, so streams are independent, reproducible across
platforms, and never depend on how many draws another stream made.
"""
import numpy as np

# stream identifiers
INIT = 1
SHUFFLE = 2
AUGMENT = 3
DATA = 4


def make_rng(seed, *path):
    entropy = [int(seed)] + [int(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed, *path):
    """A 32-bit integer seed for a child stream (e.g. one augmentation call)."""
    return int(np.random.SeedSequence([int(seed)] + [int(p) for p in path]).generate_state(1)[0])
