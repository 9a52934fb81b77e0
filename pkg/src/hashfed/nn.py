"""Dense feedforward networks with explicit forward/backward passes.

Everything is float64 numpy. A network is a list of affine layers with an
activation tag; caches returned by `forward` feed `backward`, which produces
the input gradient plus per-layer parameter gradients. Adam with L2-style
weight decay (the decay term joins the gradient before the moment updates)
handles optimization.
"""

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")


def as_matrix(X, cols: int | None = None) -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    if cols is not None and A.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {A.shape[1]}")
    return A


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("layer weight/bias shapes are inconsistent")


@dataclass
class DenseNet:
    layers: list[Layer] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]


def dense_net(dims, rng: np.random.Generator, hidden_activation: str = "relu") -> DenseNet:
    """Build a network with the given layer widths.

    Weights and biases are drawn uniformly from +-1/sqrt(fan_in). Hidden
    layers use `hidden_activation`; the final layer is always linear.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output widths")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        act = hidden_activation if i < len(dims) - 2 else "identity"
        layers.append(
            Layer(
                weight=rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                bias=rng.uniform(-bound, bound, size=fan_out),
                activation=act,
            )
        )
    return DenseNet(layers)


def forward(net: DenseNet, X) -> tuple[np.ndarray, list]:
    """Run the network on a batch.

    Returns (output, cache); the cache holds per-layer (input, pre-activation)
    pairs and must be handed unchanged to `backward`.
    """
    a = as_matrix(X, cols=net.input_dim)
    cache = []
    for layer in net.layers:
        z = a @ layer.weight + layer.bias
        cache.append((a, z))
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a, cache


def backward(net: DenseNet, cache: list, grad_out) -> tuple[np.ndarray, list]:
    """Backpropagate `grad_out` through a cached forward pass.

    Returns (grad wrt input, [(grad_weight, grad_bias), ...]) with parameter
    gradients ordered like `net.layers`.
    """
    if len(cache) != len(net.layers):
        raise ValueError("cache does not match network depth")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (cache[-1][0].shape[0], net.output_dim):
        raise ValueError("grad_out shape does not match cached forward pass")
    param_grads: list = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        a_in, z = cache[i]
        if layer.activation == "relu":
            g = g * (z > 0.0)
        param_grads[i] = (a_in.T @ g, g.sum(axis=0))
        g = g @ layer.weight.T
    return g, param_grads


def net_params(net: DenseNet) -> list[np.ndarray]:
    """Flat parameter list (views, so optimizer updates mutate the net)."""
    out = []
    for layer in net.layers:
        out.append(layer.weight)
        out.append(layer.bias)
    return out


def flatten_grads(param_grads: list) -> list[np.ndarray]:
    """Flatten `backward`'s per-layer pairs to match `net_params` order."""
    out = []
    for gw, gb in param_grads:
        out.append(gw)
        out.append(gb)
    return out


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, grad wrt logits). Labels outside [0, C) raise.
    """
    Z = as_matrix(logits)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (Z.shape[0],):
        raise ValueError("labels must be a vector matching the batch size")
    if Z.shape[0] == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= Z.shape[1]:
        raise ValueError("label out of range")
    shifted = Z - Z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    m = Z.shape[0]
    loss = float(-log_probs[np.arange(m), y].mean())
    grad = np.exp(log_probs)
    grad[np.arange(m), y] -= 1.0
    grad /= m
    return loss, grad


def cosine_loss(H, targets) -> tuple[float, np.ndarray]:
    """Mean of 1 - cos(row, target_row), plus the gradient wrt H.

    Rows with zero norm on either side raise, since the cosine is undefined
    there.
    """
    Hm = as_matrix(H)
    T = as_matrix(targets)
    if Hm.shape != T.shape:
        raise ValueError("H and targets must have the same shape")
    hn = np.linalg.norm(Hm, axis=1)
    tn = np.linalg.norm(T, axis=1)
    if np.any(hn == 0.0) or np.any(tn == 0.0):
        raise ValueError("zero-norm row in cosine loss")
    cos = (Hm * T).sum(axis=1) / (hn * tn)
    loss = float((1.0 - cos).mean())
    m = Hm.shape[0]
    grad = -(T / (hn * tn)[:, None] - (cos / hn**2)[:, None] * Hm) / m
    return loss, grad


@dataclass
class AdamState:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(params: list[np.ndarray], lr: float = 1e-3, weight_decay: float = 0.0) -> AdamState:
    state = AdamState(lr=lr, weight_decay=weight_decay)
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]
    return state


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One Adam update, in place on `params` and `state`.

    Weight decay folds into the gradient before the moment updates, so decay
    alone still moves parameters toward zero.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("params/grads do not match optimizer state")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError("gradient shape mismatch")
        g = g + state.weight_decay * p if state.weight_decay else g
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def lr_schedule(epoch: int, base_lr: float) -> float:
    """Stepwise decay: multiply by 0.9 every 10 epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return base_lr * 0.9 ** (epoch // 10)
