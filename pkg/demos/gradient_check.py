"""Hand-written gradients against central differences for every patch.

    python demos/gradient_check.py
"""
import numpy as np

from gcnenergy import PatchConfig, apply_spectra_shift, build_renormalized_affinity, grad_check
from gcnenergy.graph import random_connected_graph
from gcnenergy.model import init_params

rng = np.random.default_rng(1)
n, f, c = 10, 4, 3
op = build_renormalized_affinity(random_connected_graph(n, 0.3, rng))
X = rng.normal(size=(n, f))
Z = np.eye(c)[rng.integers(0, c, n)]
mask = np.arange(n)

patches = {
    "plain": PatchConfig(),
    "tr r=1": PatchConfig(resolution=1.0),
    "skip": PatchConfig(skip=True),
    "energy norm 5": PatchConfig(energy_norm=5.0),
    "normal init 1.5": PatchConfig(init_scheme="normal", init_const=1.5),
}
for name, cfg in patches.items():
    a = op if cfg.resolution is None else apply_spectra_shift(op, cfg.resolution)
    params = init_params([f, 6, 6, 6, c], cfg, seed=0)
    print(f"{name:<16} max relative error {grad_check(params, a, X, Z, mask, cfg):.2e}")
