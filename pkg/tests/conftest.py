import os

import numpy as np
import pytest

from eigendecay.model import Activation, DenseLayer, init_mlp


def max_rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, floor)])
    return float(np.max(np.abs(a - b) / denom))


def linear_layer(weights, bias=None):
    weights = np.asarray(weights, dtype=float)
    if bias is None:
        bias = np.zeros(weights.shape[0])
    return DenseLayer(weights, bias, Activation("linear"))


def small_model(dims=(2, 3, 2), activation="sigmoid", seed=0):
    return init_mlp(list(dims), activation, seed=seed)


def rotation(n, scale, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return scale * q


def mnist_paths():
    """IDX file paths for the handwritten-digits experiment, or None.

    Looks under $EIGENDECAY_MNIST_DIR, then data/mnist next to the repo
    root. scripts/fetch_mnist.py downloads the files.
    """
    candidates = []
    env = os.environ.get("EIGENDECAY_MNIST_DIR")
    if env:
        candidates.append(env)
    candidates.append(os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    names = (
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    )
    for base in candidates:
        paths = [os.path.join(base, name) for name in names]
        if all(os.path.exists(p) for p in paths):
            return dict(zip(("train_images", "train_labels", "test_images", "test_labels"), paths))
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
