from pathlib import Path

import numpy as np
import pytest

from gcnenergy.graph import Graph, build_renormalized_affinity, random_connected_graph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def toy6_dir():
    return FIXTURES / "toy6"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def single_edge():
    return Graph.from_edges(2, [(0, 1)])


def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def small_instance(n=8, f=3, c=2, seed=0, p=0.3):
    """Random connected graph, its A_hat, features, labels and a mask."""
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    op = build_renormalized_affinity(g)
    X = rng.normal(size=(n, f))
    labels = rng.integers(0, c, size=n)
    Z = np.eye(c)[labels]
    mask = np.arange(0, n, 2)
    return g, op, X, labels, Z, mask


# The eight patch combinations of the gradient oracle; constants are small
# so that a depth-10, width-4 network stays in a well-conditioned regime.
GRADCHECK_COMBOS = {
    "baseline": dict(),
    "tr": dict(resolution=1.0),
    "skip": dict(skip=True),
    "weight_norm": dict(weight_norm=2.0),
    "energy_norm": dict(energy_norm=5.0),
    "init_normal": dict(init_scheme="normal", init_const=1.8),
    "tr_skip": dict(resolution=1.0, skip=True),
    "all_on": dict(resolution=1.0, skip=True, weight_norm=2.0, energy_norm=5.0,
                   init_scheme="normal", init_const=1.8),
}


def gradcheck_instance(patches, seed=3, n=12, depth=10, width=4, f=5, c=3):
    """A 12-node instance for finite-difference checks at depth 10.

    Features are rescaled so the initial logits have unit spread. With zero
    biases the network is positively homogeneous in X, so this only moves
    the loss into a range where central differences are accurate. Returns
    the instance and the smallest |pre-activation| (distance to a ReLU kink).
    """
    from gcnenergy.graph import apply_spectra_shift
    from gcnenergy.model import forward, init_params
    from gcnenergy.optim import apply_weight_norm

    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.2, rng)
    op = build_renormalized_affinity(g)
    X0 = rng.normal(size=(n, f))
    labels = rng.integers(0, c, n)
    Z = np.eye(c)[labels]
    mask = np.arange(n)
    if patches.resolution is not None:
        op = apply_spectra_shift(op, patches.resolution)
    params = init_params([f] + [width] * (depth - 1) + [c], patches, seed)
    if patches.weight_norm is not None:
        apply_weight_norm(params, patches.weight_norm)
    spread = np.std(forward(params, op, X0, patches).logits)
    X = X0 / spread if spread > 0 else X0
    cache = forward(params, op, X, patches)
    margin = min(float(np.min(np.abs(z))) for z in cache.preact)
    return params, op, X, Z, mask, margin
