"""Hand-written reverse pass for the network in :mod:`gcnenergy.model`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ShapeError, frobenius_norm, relu_mask
from .model import ModelParams, PatchConfig, _check_mask, forward, nll_loss


@dataclass
class Gradients:
    """Parameter gradients plus ``||dl/dY_k||_F`` for hidden outputs ``k = 1..n``."""

    weights: list
    biases: list
    activation_norms: list

    def weight_norms(self) -> list:
        return [frobenius_norm(g) for g in self.weights]


def output_gradient(Y, Z, mask) -> np.ndarray:
    """``(softmax(Y') - Z) / |mask|`` on masked rows, zero elsewhere.

    ``Y`` is the probability matrix ``softmax(Y')``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if Y.shape != Z.shape:
        raise ShapeError("output_gradient", Y.shape, Z.shape)
    idx = _check_mask(mask, Y.shape[0])
    g = np.zeros_like(Y)
    g[idx] = (Y[idx] - Z[idx]) / idx.size
    return g


def _layer_grads(cache, params, op, i, g):
    """dW_i, db_i and the gradient reaching the (undropped) input of layer ``i``."""
    ag = op @ g
    dw = np.asarray(cache.dropped[i].T @ ag)
    db = g.sum(axis=0)
    if i == 0:
        # nothing upstream of the input features
        return dw, db, None
    d_in = ag @ params.weights[i].T
    if cache.dropout_masks[i] is not None:
        d_in = d_in * cache.dropout_masks[i]
    return dw, db, d_in


def backward(cache, params: ModelParams, op, grad_out, cfg: PatchConfig) -> Gradients:
    """Propagate ``grad_out = dl/dY'`` back through every layer.

    For layer ``i`` with ``Y_{i+1}' = A drop(Y_i) W_i + b_i`` and upstream
    gradient ``G = dl/dY_{i+1}'``::

        dW_i = drop(Y_i)^T A G        db_i = column sums of G
        dl/dY_i = (A G W_i^T) * dropout mask

    Going into a hidden layer the energy-norm scale multiplies the
    gradient as a constant, the ReLU indicator masks the convolution
    branch, and with a skip connection the unmasked gradient is also
    passed straight to ``Y_i``.
    """
    n_layers = params.depth
    if len(cache.inputs) != n_layers or len(cache.hidden) != n_layers - 1:
        raise ShapeError("backward", (len(cache.inputs), len(cache.hidden)), (n_layers, n_layers - 1))
    for i, (y, w) in enumerate(zip(cache.dropped, params.weights)):
        if y.shape[1] != w.shape[0]:
            raise ShapeError(f"backward layer {i}", y.shape, w.shape)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.logits.shape:
        raise ShapeError("backward", grad_out.shape, cache.logits.shape)

    dW = [None] * n_layers
    db = [None] * n_layers
    act_norms = [0.0] * (n_layers - 1)
    last = n_layers - 1
    dW[last], db[last], d_y = _layer_grads(cache, params, op, last, grad_out)
    for k in range(n_layers - 1, 0, -1):
        # d_y = dl/dY_k, produced by layer k-1
        act_norms[k - 1] = frobenius_norm(d_y)
        d_h = cache.scales[k - 1] * d_y
        g = d_h * relu_mask(cache.preact[k - 1])
        dW[k - 1], db[k - 1], d_prev = _layer_grads(cache, params, op, k - 1, g)
        if d_prev is None:
            break
        if cache.skip_used[k - 1]:
            d_prev = d_prev + d_h
        d_y = d_prev
    return Gradients(dW, db, act_norms)


def loss_and_grads(params, op, X, Z, mask, cfg, mode="eval", seed=None):
    """Forward, mean NLL on ``mask`` and backward in one call."""
    cache = forward(params, op, X, cfg, mode=mode, seed=seed)
    loss = nll_loss(cache.logits, Z, mask)
    grads = backward(cache, params, op, output_gradient(cache.probs, Z, mask), cfg)
    return loss, cache, grads


def grad_check(params: ModelParams, op, X, Z, mask, cfg: PatchConfig,
               eps: float = 1e-5, max_params: int = 5000) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``. Both sides
    run in eval mode; energy-norm scales are frozen at the values of the
    unperturbed pass, matching the backward convention.
    """
    if params.n_params() > max_params:
        raise ValueError(f"grad_check limited to {max_params} parameters, got {params.n_params()}")
    _, cache, grads = loss_and_grads(params, op, X, Z, mask, cfg)
    frozen = list(cache.scales) if cfg.energy_norm is not None else None

    def f(p):
        c = forward(p, op, X, cfg, mode="eval", frozen_scales=frozen)
        return nll_loss(c.logits, Z, mask)

    worst = 0.0
    work = params.copy()
    for group, agroup in ((work.weights, grads.weights), (work.biases, grads.biases)):
        for arr, ana in zip(group, agroup):
            flat, aflat = arr.reshape(-1), ana.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                up = f(work)
                flat[j] = orig - eps
                down = f(work)
                flat[j] = orig
                num = (up - down) / (2 * eps)
                a = aflat[j]
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                worst = max(worst, err)
    return worst
