"""Adam with L2-coupled weight decay, and spectral weight normalization."""
from __future__ import annotations

import numpy as np

from .linalg import spectral_norm


class NonFiniteGradient(FloatingPointError):
    def __init__(self, layer, kind="weight"):
        self.layer = layer
        super().__init__(f"non-finite {kind} gradient in layer {layer}")


class Adam:
    """Bias-corrected Adam over a :class:`~gcnenergy.model.ModelParams`.

    Weight decay is added to the weight gradients (never the biases) before
    the moment updates.
    """

    def __init__(self, params, lr=1e-3, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be > 0")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.weights + params.biases]
        self.v = [np.zeros_like(a) for a in params.weights + params.biases]

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` and advance the step count."""
        n = len(params.weights)
        for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
            if not np.all(np.isfinite(gw)):
                raise NonFiniteGradient(i)
            if not np.all(np.isfinite(gb)):
                raise NonFiniteGradient(i, "bias")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        tensors = params.weights + params.biases
        grad_list = grads.weights + grads.biases
        for k, (p, g) in enumerate(zip(tensors, grad_list)):
            if k < n and self.weight_decay:
                g = g + self.weight_decay * p
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def apply_weight_norm(params, lam, iters=500, tol=1e-13, warm=None):
    """Rescale every weight matrix in place so its spectral norm equals ``lam``.

    ``warm`` is an optional list, one slot per layer, holding power-iteration
    vectors from a previous call; it is read as start vectors and refreshed.
    Zero matrices are left alone; returns the indices of such layers.
    """
    if not lam > 0:
        raise ValueError("weight-norm constant must be > 0")
    skipped = []
    for i, w in enumerate(params.weights):
        v0 = warm[i] if warm is not None else None
        s, v = spectral_norm(w, iters=iters, tol=tol, v0=v0, return_vector=True)
        if warm is not None:
            warm[i] = v
        if s == 0.0:
            skipped.append(i)
            continue
        w *= lam / s
    return skipped
