"""Attacks against a trained system, run with full adversary knowledge.

Three threats: feature reconstruction from a party's code (inversion of the
local pipeline), projected-gradient label forcing through the adversary's
submitted vector, and passive label inference from one party's local
representations via a trained probe.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .hashing import bn_infer_scale_shift
from .protocol import PartyState, ServerState, party_codes, server_predict_codes


def tv_value_grad(x) -> tuple[float, np.ndarray]:
    """Total variation of a 2-D image and its gradient.

    Per pixel: sqrt(vertical_diff^2 + horizontal_diff^2), boundary pixels
    using only the neighbors that exist; the value sums those terms. The
    gradient treats zero-difference pixels as flat (subgradient 0).
    """
    img = np.asarray(x, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("total variation needs a 2-D image")
    dv = np.zeros_like(img)
    dh = np.zeros_like(img)
    dv[:-1, :] = img[1:, :] - img[:-1, :]
    dh[:, :-1] = img[:, 1:] - img[:, :-1]
    r = np.sqrt(dv * dv + dh * dh)
    inv = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0.0)
    gdv = dv * inv
    gdh = dh * inv
    grad = np.zeros_like(img)
    grad[:-1, :] -= gdv[:-1, :]
    grad[1:, :] += gdv[:-1, :]
    grad[:, :-1] -= gdh[:, :-1]
    grad[:, 1:] += gdh[:, :-1]
    return float(r.sum()), grad


def total_variation(x) -> float:
    """Smoothness penalty of a 2-D image (see tv_value_grad)."""
    return tv_value_grad(x)[0]


@dataclass
class ReconstructionResult:
    x: np.ndarray  # (1, n_features) final iterate
    objective: list[float] = field(default_factory=list)  # trace incl. start


def _recon_objective(party: PartyState, x, target, lam, image_shape):
    v, cache = nn.forward(party.bottom, x)
    if party.bn is not None:
        scale, shift = bn_infer_scale_shift(party.bn)
        pre = scale * v + shift
    else:
        scale = None
        pre = v
    resid = pre - target
    value = float((resid**2).mean())
    g = 2.0 * resid / resid.size
    if scale is not None:
        g = g * scale
    grad_x, _ = nn.backward(party.bottom, cache, g)
    if lam > 0.0 and image_shape is not None:
        tv, tv_grad = tv_value_grad(x.reshape(image_shape))
        value += lam * tv
        grad_x = grad_x + lam * tv_grad.reshape(x.shape)
    return value, grad_x


def reconstruct_from_code(
    party: PartyState,
    target_code,
    lam: float = 1e-2,
    steps: int = 3000,
    lr: float = 0.1,
    seed: int = 0,
    image_shape: tuple[int, int] | None = None,
    step_halving: bool = True,
) -> ReconstructionResult:
    """Invert a party's pipeline: find x whose pre-sign output matches a code.

    Minimizes MSE(pipeline(x), target) + lam * TV(x) by gradient descent from
    a seeded uniform start. The target is compared against the output before
    the sign stage (the sign itself has zero gradient everywhere). With
    `step_halving` the objective trace is non-increasing: a step that would
    increase the objective is retried at half the rate, and skipped entirely
    once the rate underflows. `image_shape` switches the TV term on and gives
    the 2-D layout of the party's feature block.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    target = np.asarray(target_code, dtype=np.float64).reshape(1, -1)
    if target.shape[1] != party.code_bits:
        raise ValueError("target code length does not match the party")
    if image_shape is not None and int(np.prod(image_shape)) != party.feature_columns.size:
        raise ValueError("image_shape does not match the party's feature count")

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(1, party.feature_columns.size))
    value, grad = _recon_objective(party, x, target, lam, image_shape)
    if not np.isfinite(value):
        raise ValueError("non-finite objective")
    trace = [value]
    for _ in range(steps):
        rate = lr
        accepted = False
        for _ in range(40):
            x_next = x - rate * grad
            v_next, g_next = _recon_objective(party, x_next, target, lam, image_shape)
            if not np.isfinite(v_next):
                raise ValueError("non-finite objective")
            if not step_halving or v_next <= value:
                accepted = True
                break
            rate *= 0.5
        if accepted:
            x, value, grad = x_next, v_next, g_next
        trace.append(value)
    return ReconstructionResult(x=x, objective=trace)


@dataclass
class PgdResult:
    success: bool
    steps_to_success: int | None
    perturbed_code: np.ndarray  # adversary's final continuous vector (1, d)
    submitted_codes: list  # all parties, adversary block perturbed
    base_prediction: int
    final_prediction: int
    target_class: int


def pgd_attack(
    parties,
    server: ServerState,
    sample,
    target_class: int,
    omega: float,
    eta: float,
    steps: int,
    adv_party: int = 0,
) -> PgdResult:
    """Force a target label by perturbing one party's submitted vector.

    Sign-of-gradient descent on the adversary's block, with the cumulative
    perturbation clipped into [-omega, omega] around the honest code x_0.
    Other parties stay honest. The adversary differentiates through the top
    model directly (full knowledge), but success is judged on the server's
    view, which re-binarizes every submission; success means the guarded
    prediction equals the target class at some iterate.
    """
    if omega <= 0.0 or eta <= 0.0:
        raise ValueError("omega and eta must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not 0 <= adv_party < len(parties):
        raise ValueError("adv_party out of range")
    X = nn.as_matrix(sample)
    if X.shape[0] != 1:
        raise ValueError("attack one sample at a time")

    codes = party_codes(parties, X, mode="infer")
    x0 = codes[adv_party].copy()
    y_t = np.array([target_class])
    base_pred = int(server_predict_codes(server, codes)[0])

    x = x0.copy()
    success_step = None
    for m in range(1, steps + 1):
        blocks = [c.copy() for c in codes]
        blocks[adv_party] = x
        H = np.hstack(blocks)
        logits, cache = nn.forward(server.top, H)
        _, dlogits = nn.softmax_cross_entropy(logits, y_t)
        grad_H, _ = nn.backward(server.top, cache, dlogits)
        g = grad_H[:, adv_party * server.code_bits : (adv_party + 1) * server.code_bits]
        x = x - eta * np.sign(g)
        x = x0 + np.clip(x - x0, -omega, omega)

        submitted = [c.copy() for c in codes]
        submitted[adv_party] = x
        pred = int(server_predict_codes(server, submitted)[0])
        if pred == target_class:
            success_step = m
            break

    submitted = [c.copy() for c in codes]
    submitted[adv_party] = x
    final_pred = int(server_predict_codes(server, submitted)[0])
    return PgdResult(
        success=success_step is not None,
        steps_to_success=success_step,
        perturbed_code=x,
        submitted_codes=submitted,
        base_prediction=base_pred,
        final_prediction=final_pred,
        target_class=int(target_class),
    )


@dataclass(frozen=True)
class ProbeConfig:
    hidden: int = 32
    epochs: int = 50
    lr: float = 1e-3
    train_ratio: float = 0.7
    batch_size: int = 32


def passive_label_inference(
    representations, labels, probe: ProbeConfig = ProbeConfig(), seed: int = 0
) -> float:
    """Held-out accuracy of a probe trained to predict labels from one
    party's representations (continuous embeddings or hash codes alike)."""
    R = nn.as_matrix(representations)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (R.shape[0],):
        raise ValueError("labels must match representation rows")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("labels contain a single class")
    C = int(y.max()) + 1

    rng = np.random.default_rng(seed)
    order = rng.permutation(R.shape[0])
    n_train = int(R.shape[0] * probe.train_ratio + 1e-9)
    n_train = min(max(n_train, 1), R.shape[0] - 1)
    tr, te = order[:n_train], order[n_train:]

    net = nn.dense_net([R.shape[1], probe.hidden, C], rng)
    opt = nn.adam_init(nn.net_params(net), lr=probe.lr)
    for _ in range(probe.epochs):
        perm = rng.permutation(tr)
        for start in range(0, perm.size, probe.batch_size):
            batch = perm[start : start + probe.batch_size]
            logits, cache = nn.forward(net, R[batch])
            _, dlogits = nn.softmax_cross_entropy(logits, y[batch])
            _, pgrads = nn.backward(net, cache, dlogits)
            nn.adam_step(nn.net_params(net), nn.flatten_grads(pgrads), opt)
    logits, _ = nn.forward(net, R[te])
    return float((np.argmax(logits, axis=1) == y[te]).mean())
