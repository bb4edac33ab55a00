"""Deep GCN forward pass with optional training patches.

A model of depth ``n + 1`` has hidden activations ``Y_1 .. Y_n`` and an
output layer producing logits ``Y'`` and probabilities ``Y``::

    Y_{i+1}' = A (drop(Y_i) W_i) + b_i
    Y_{i+1}  = ReLU(Y_{i+1}')                      (+ Y_i with skip)
    Y_{i+1}  = lam_E * Y_{i+1} / ||Y_{i+1}||_F     (energy norm)
    Y        = softmax(A (drop(Y_n) W_n) + b_n)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .linalg import (
    ShapeError,
    frobenius_norm,
    log_softmax_rows,
    relu,
    softmax_rows,
)


@dataclass(frozen=True)
class PatchConfig:
    """Which training patches are enabled and their constants.

    ``resolution`` is the spectra shift ``r``; ``weight_norm`` and
    ``energy_norm`` are the normalization constants. ``None`` disables a
    patch.
    """

    resolution: Optional[float] = None
    skip: bool = False
    weight_norm: Optional[float] = None
    energy_norm: Optional[float] = None
    init_scheme: str = "uniform"
    init_const: float = 1.0
    dropout: float = 0.0
    weight_norm_init_only: bool = False

    def __post_init__(self):
        if self.weight_norm is not None and not self.weight_norm > 0:
            raise ValueError("weight_norm must be > 0")
        if self.energy_norm is not None and not self.energy_norm > 0:
            raise ValueError("energy_norm must be > 0")
        if not self.init_const > 0:
            raise ValueError("init_const must be > 0")
        if self.init_scheme not in ("uniform", "normal"):
            raise ValueError(f"unknown init scheme {self.init_scheme!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def replace(self, **changes) -> "PatchConfig":
        return replace(self, **changes)


@dataclass
class ModelParams:
    weights: list
    biases: list

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, indexed by layer.

    ``inputs[i]`` is the (undropped) input ``Y_i`` of layer ``i`` and
    ``dropped[i]`` the version actually multiplied by ``W_i``.
    ``preact[i]`` is ``Y_{i+1}'`` and ``hidden[i]`` is ``Y_{i+1}`` for the
    hidden layers. ``scales[i]`` is the energy-norm factor applied to
    ``Y_{i+1}`` (1.0 when inactive).
    """

    inputs: list
    dropped: list
    dropout_masks: list
    preact: list
    hidden: list
    skip_used: list
    scales: list
    zero_energy: list
    logits: np.ndarray
    probs: np.ndarray = field(repr=False)

    @property
    def log_probs(self) -> np.ndarray:
        return log_softmax_rows(self.logits)


def init_params(widths, cfg: PatchConfig, seed) -> ModelParams:
    """Draw weights per ``cfg.init_scheme``, scaled by ``cfg.init_const``; zero biases.

    Uniform: ``U(-1/sqrt(F_out), 1/sqrt(F_out))``.
    Normal: ``N(0, sqrt(2 / (F_in + F_out)))`` (standard deviation).
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least an input and an output width")
    if min(widths) < 1:
        raise ValueError(f"widths must be positive, got {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for f_in, f_out in zip(widths[:-1], widths[1:]):
        if cfg.init_scheme == "uniform":
            bound = 1.0 / np.sqrt(f_out)
            w = rng.uniform(-bound, bound, size=(f_in, f_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / (f_in + f_out)), size=(f_in, f_out))
        weights.append(cfg.init_const * w)
        biases.append(np.zeros(f_out))
    return ModelParams(weights, biases)


def dropout_masks(shapes, p: float, rng) -> list:
    """Inverted-dropout masks (entries 0 or ``1/(1-p)``) for each shape."""
    if p == 0.0:
        return [None] * len(shapes)
    keep = 1.0 - p
    return [(rng.random(s) < keep) / keep for s in shapes]


def forward(params: ModelParams, op, X, cfg: PatchConfig, mode: str = "eval",
            seed=None, frozen_scales=None) -> ForwardCache:
    """Run the network on features ``X`` with propagation operator ``op``.

    In ``train`` mode with ``cfg.dropout > 0`` the dropout masks are drawn
    from ``np.random.default_rng(seed)``. ``frozen_scales`` replaces the
    energy-norm factors with given constants (used by gradient checks).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    # sparse features (bag-of-words inputs) stay sparse through the first layer
    X = X if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    if X.shape[0] != op.dim:
        raise ShapeError("forward", X.shape, (op.dim, op.dim))
    if X.shape[1] != params.weights[0].shape[0]:
        raise ShapeError("forward", X.shape, params.weights[0].shape)
    n_layers = params.depth
    if mode == "train" and cfg.dropout > 0:
        rng = np.random.default_rng(seed)
        shapes = [(X.shape[0], w.shape[0]) for w in params.weights]
        masks = dropout_masks(shapes, cfg.dropout, rng)
    else:
        masks = [None] * n_layers

    cache = ForwardCache([], [], masks, [], [], [], [], [], None, None)
    y = X
    for i in range(n_layers):
        w, b = params.weights[i], params.biases[i]
        if y.shape[1] != w.shape[0]:
            raise ShapeError(f"layer {i}", y.shape, w.shape)
        cache.inputs.append(y)
        if masks[i] is None:
            y_in = y
        else:
            y_in = sp.csr_matrix(y.multiply(masks[i])) if sp.issparse(y) else y * masks[i]
        cache.dropped.append(y_in)
        z = op @ (y_in @ w) + b
        if i == n_layers - 1:
            cache.logits = z
            cache.probs = softmax_rows(z)
            break
        cache.preact.append(z)
        h = relu(z)
        use_skip = cfg.skip and i > 0 and y.shape[1] == h.shape[1]
        if use_skip:
            h = y + h
        cache.skip_used.append(use_skip)
        scale, zero = 1.0, False
        if cfg.energy_norm is not None:
            if frozen_scales is not None:
                scale = frozen_scales[i]
            else:
                norm = frobenius_norm(h)
                if norm > 0.0:
                    scale = cfg.energy_norm / norm
                else:
                    zero = True
            h = scale * h
        cache.scales.append(scale)
        cache.zero_energy.append(zero)
        cache.hidden.append(h)
        y = h
    return cache


def _check_mask(mask, n):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        mask = np.flatnonzero(mask)
    if mask.size == 0:
        raise ValueError("mask is empty")
    if mask.min() < 0 or mask.max() >= n:
        raise ValueError("mask index out of range")
    return mask


def nll_loss(logits, Z, mask) -> float:
    """Mean negative log-likelihood over the masked rows.

    Takes logits rather than probabilities so the log is taken through a
    stabilised log-softmax.
    """
    logits = np.asarray(logits, dtype=np.float64)
    idx = _check_mask(mask, logits.shape[0])
    logp = log_softmax_rows(logits[idx])
    return float(-np.sum(np.asarray(Z)[idx] * logp) / idx.size)


def accuracy(Y, labels, mask) -> float:
    """Fraction of masked rows whose argmax (lowest index on ties) equals the label."""
    Y = np.asarray(Y)
    idx = _check_mask(mask, Y.shape[0])
    pred = np.argmax(Y[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))
