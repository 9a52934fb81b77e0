"""Binarization stack: per-feature batch normalization, sign, straight-through.

Train mode normalizes with the current batch's mean and biased variance and
updates running statistics by exponential moving average (the variance folded
into the running buffer gets the m/(m-1) correction). Infer mode is a pure
per-sample affine map built from the running statistics. `sign_forward` maps
to +-1 with ties at zero going to +1, and `ste_backward` passes gradients
through the sign unchanged.
"""

from dataclasses import dataclass

import numpy as np

from .nn import as_matrix


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    trainable: bool = True
    batches_tracked: int = 0

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


def bn_init(dim: int, eps: float = 1e-5, momentum: float = 0.1, trainable: bool = True) -> BatchNormState:
    if dim < 1:
        raise ValueError("dim must be positive")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    return BatchNormState(
        gamma=np.ones(dim),
        beta=np.zeros(dim),
        running_mean=np.zeros(dim),
        running_var=np.ones(dim),
        eps=eps,
        momentum=momentum,
        trainable=trainable,
    )


def bn_forward_train(X, state: BatchNormState) -> tuple[np.ndarray, dict]:
    """Normalize a batch with its own statistics and update running buffers.

    Needs m >= 2 rows; a single row has no batch variance to speak of.
    Returns (output, cache) where the cache feeds `bn_backward`.
    """
    Xm = as_matrix(X, cols=state.dim)
    m = Xm.shape[0]
    if m < 2:
        raise ValueError("train-mode batch normalization needs at least 2 rows")
    mean = Xm.mean(axis=0)
    var = Xm.var(axis=0)  # biased, matches the normalization denominator
    inv_std = 1.0 / np.sqrt(var + state.eps)
    x_hat = (Xm - mean) * inv_std
    out = state.gamma * x_hat + state.beta

    mom = state.momentum
    state.running_mean[:] = (1.0 - mom) * state.running_mean + mom * mean
    state.running_var[:] = (1.0 - mom) * state.running_var + mom * var * (m / (m - 1.0))
    state.batches_tracked += 1

    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": state.gamma.copy(), "m": m}
    return out, cache


def bn_forward_infer(X, state: BatchNormState) -> np.ndarray:
    """Per-sample affine normalization from the running statistics."""
    if state.batches_tracked == 0:
        raise ValueError("batch normalization has no tracked statistics yet")
    Xm = as_matrix(X, cols=state.dim)
    scale = state.gamma / np.sqrt(state.running_var + state.eps)
    return scale * Xm + (state.beta - scale * state.running_mean)


def bn_infer_scale_shift(state: BatchNormState) -> tuple[np.ndarray, np.ndarray]:
    """The (scale, shift) pair such that infer output = scale * x + shift."""
    if state.batches_tracked == 0:
        raise ValueError("batch normalization has no tracked statistics yet")
    scale = state.gamma / np.sqrt(state.running_var + state.eps)
    return scale, state.beta - scale * state.running_mean


def bn_backward(grad_out, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients through a cached train-mode pass.

    Returns (grad wrt input, grad_gamma, grad_beta). The input gradient
    accounts for the batch mean and variance both depending on every row.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    x_hat = cache["x_hat"]
    if g.shape != x_hat.shape:
        raise ValueError("grad_out shape does not match cached batch")
    inv_std = cache["inv_std"]
    gamma = cache["gamma"]
    m = cache["m"]

    grad_gamma = (g * x_hat).sum(axis=0)
    grad_beta = g.sum(axis=0)
    dxhat = g * gamma
    grad_in = (inv_std / m) * (m * dxhat - dxhat.sum(axis=0) - x_hat * (dxhat * x_hat).sum(axis=0))
    return grad_in, grad_gamma, grad_beta


def sign_forward(V) -> np.ndarray:
    """Elementwise sign with sign(0) = +1, as float64 +-1."""
    Vm = np.asarray(V, dtype=np.float64)
    if not np.all(np.isfinite(Vm)):
        raise ValueError("sign input must be finite")
    return np.where(Vm >= 0.0, 1.0, -1.0)


def ste_backward(grad_out) -> np.ndarray:
    """Straight-through estimator: the gradient crosses sign unchanged."""
    return np.asarray(grad_out, dtype=np.float64).copy()
