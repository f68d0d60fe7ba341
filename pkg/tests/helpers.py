"""Shared helpers for gradient-check and training tests."""

import numpy as np

from nucleusnet.model import build, miniature_config
from nucleusnet.tensor import Tensor, as_array


def jitter_params(model, rng, scale=0.05):
    """Move every trainable parameter off its init point.

    Zero-initialized biases put ReLU kinks exactly at the evaluation point
    (dead input patches make conv outputs equal the bias); finite-difference
    checks need a generic, differentiable probe point.
    """
    for p in model.store.trainable():
        a = as_array(p.value)
        p.value = Tensor(a + rng.uniform(-scale, scale, size=a.shape))


def smooth_mini_model(base_seed, num_classes=4, length=512, batch=2,
                      min_margin=2e-6, max_attempts=50):
    """A float64 miniature model plus input at a certified-smooth point.

    Rejection-samples seeds until no ReLU pre-activation or pool-window gap
    sits within ``min_margin`` of a kink, so central differences with a step
    well below the margin see a locally smooth loss.
    """
    for attempt in range(max_attempts):
        seed = base_seed + attempt
        rng = np.random.default_rng(seed)
        model = build(miniature_config(num_classes=num_classes), seed=seed,
                      dtype=np.float64)
        jitter_params(model, rng)
        x = rng.standard_normal((batch, 1, length))
        if model.kink_margin(x, mode="train") > min_margin:
            labels = rng.integers(0, num_classes, size=batch)
            return model, x, labels, rng
    raise AssertionError(f"no smooth probe point found from seed {base_seed}")


def sample_flat_param(model, rng):
    """Pick (param, flat_index) uniformly over the whole parameter vector."""
    params = list(model.store.trainable())
    sizes = np.cumsum([p.value.size for p in params])
    flat = int(rng.integers(0, sizes[-1]))
    pi = int(np.searchsorted(sizes, flat, side="right"))
    return params[pi], int(flat - (sizes[pi - 1] if pi else 0))
