"""The vertical training protocol: N parties, one server, synchronized rounds.

Each round, every party runs its bottom model on its own feature columns,
batch-normalizes, and signs, submitting only the resulting +-1 code. The
server concatenates codes in party order, computes cross-entropy through the
top model plus a consistency term (per-party cosine against the class's
pre-defined code, averaged), and hands each party the gradient of its own
code block. Parties push that gradient through the sign stage unchanged
(straight-through) and update from the batch-norm layer on down. Inference
re-binarizes whatever the parties submit before the top model sees it.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .codebook import Codebook, target_codes
from .data import AlignedDataset
from .hashing import (
    BatchNormState,
    bn_backward,
    bn_forward_infer,
    bn_forward_train,
    bn_init,
    sign_forward,
    ste_backward,
)


@dataclass
class PartyState:
    party_id: int
    bottom: nn.DenseNet
    bn: BatchNormState | None  # None disables the normalization stage
    feature_columns: np.ndarray
    optimizer: nn.AdamState

    @property
    def code_bits(self) -> int:
        return self.bottom.output_dim


@dataclass
class ServerState:
    top: nn.DenseNet
    optimizer: nn.AdamState
    codebook: Codebook
    num_parties: int
    code_bits: int


@dataclass
class LossParts:
    total: float
    ce: float
    cos_term: float
    grad_H: np.ndarray
    top_grads: list


@dataclass
class LogRow:
    epoch: int
    split: str
    accuracy: float
    ce: float
    cos_term: float
    lr: float


@dataclass
class TrainOptions:
    epochs: int = 30
    batch_size: int = 256
    base_lr: float = 1e-3
    seed: int = 0
    use_consistency: bool = True


def party_params(party: PartyState) -> list[np.ndarray]:
    """Trainable parameter list (bottom net, then gamma/beta when trainable)."""
    params = nn.net_params(party.bottom)
    if party.bn is not None and party.bn.trainable:
        params = params + [party.bn.gamma, party.bn.beta]
    return params


def build_party(
    party_id: int,
    feature_columns,
    hidden,
    code_bits: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    weight_decay: float = 5e-4,
    use_bn: bool = True,
    bn_trainable: bool = True,
) -> PartyState:
    cols = np.asarray(feature_columns, dtype=np.int64)
    if cols.size == 0:
        raise ValueError("party needs at least one feature column")
    bottom = nn.dense_net([cols.size, *hidden, code_bits], rng)
    bn = bn_init(code_bits, trainable=bn_trainable) if use_bn else None
    party = PartyState(
        party_id=party_id,
        bottom=bottom,
        bn=bn,
        feature_columns=cols,
        optimizer=nn.AdamState(lr=lr),
    )
    party.optimizer = nn.adam_init(party_params(party), lr=lr, weight_decay=weight_decay)
    return party


def build_server(
    codebook: Codebook,
    num_parties: int,
    top_hidden: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    weight_decay: float = 5e-4,
) -> ServerState:
    if num_parties < 1:
        raise ValueError("need at least one party")
    d = codebook.code_bits
    top = nn.dense_net([num_parties * d, top_hidden, codebook.num_classes], rng)
    return ServerState(
        top=top,
        optimizer=nn.adam_init(nn.net_params(top), lr=lr, weight_decay=weight_decay),
        codebook=codebook,
        num_parties=num_parties,
        code_bits=d,
    )


def party_forward(party: PartyState, X_local, mode: str) -> tuple[np.ndarray, dict]:
    """Local pipeline: bottom net, batch norm (per mode), sign.

    Returns the +-1 code block and a cache for `party_backward`. Train mode
    updates the party's running statistics and needs at least 2 rows.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    X = nn.as_matrix(X_local, cols=party.feature_columns.size)
    v, net_cache = nn.forward(party.bottom, X)
    bn_cache = None
    if party.bn is None:
        pre = v
    elif mode == "train":
        pre, bn_cache = bn_forward_train(v, party.bn)
    else:
        pre = bn_forward_infer(v, party.bn)
    return sign_forward(pre), {"net": net_cache, "bn": bn_cache, "pre_sign": pre}


def party_backward(party: PartyState, cache: dict, grad_code) -> list[np.ndarray]:
    """Gradients for `party_params`, from the server's code-block gradient.

    The sign stage passes the gradient through unchanged; updates then flow
    through batch norm into the bottom net.
    """
    g = ste_backward(grad_code)
    if party.bn is not None:
        if cache["bn"] is None:
            raise ValueError("cache lacks a train-mode batch norm pass")
        g, grad_gamma, grad_beta = bn_backward(g, cache["bn"])
    _, pgrads = nn.backward(party.bottom, cache["net"], g)
    grads = nn.flatten_grads(pgrads)
    if party.bn is not None and party.bn.trainable:
        grads = grads + [grad_gamma, grad_beta]
    return grads


def server_aggregate(codes, expected_parties: int | None = None) -> np.ndarray:
    """Concatenate per-party code blocks horizontally, in party order."""
    blocks = [nn.as_matrix(c) for c in codes]
    if not blocks:
        raise ValueError("no party codes to aggregate")
    if expected_parties is not None and len(blocks) != expected_parties:
        raise ValueError(f"expected {expected_parties} parties, got {len(blocks)}")
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ValueError("party code row counts disagree")
    return np.hstack(blocks)


def rebinarize_guard(H_submitted) -> np.ndarray:
    """Force submitted codes back onto {-1, +1} before the top model."""
    return sign_forward(H_submitted)


def compute_loss(
    server: ServerState, H, labels, include_consistency: bool = True
) -> LossParts:
    """Cross-entropy through the top model plus the per-party cosine term.

    The cosine term compares each party's block against the class code and
    averages over parties; its gradient touches only the owning block, while
    the cross-entropy gradient arrives through the top model. Returns both
    summed in `grad_H`, plus the top model's parameter gradients.
    """
    d = server.code_bits
    Hm = nn.as_matrix(H, cols=server.num_parties * d)
    logits, top_cache = nn.forward(server.top, Hm)
    ce, dlogits = nn.softmax_cross_entropy(logits, labels)
    grad_H, top_pgrads = nn.backward(server.top, top_cache, dlogits)

    cos_term = 0.0
    if include_consistency:
        T = target_codes(labels, server.codebook)
        cos_vals = []
        for i in range(server.num_parties):
            block = slice(i * d, (i + 1) * d)
            li, gi = nn.cosine_loss(Hm[:, block], T)
            cos_vals.append(li)
            grad_H[:, block] += gi / server.num_parties
        cos_term = float(np.mean(cos_vals))

    return LossParts(
        total=ce + cos_term,
        ce=ce,
        cos_term=cos_term,
        grad_H=grad_H,
        top_grads=nn.flatten_grads(top_pgrads),
    )


def party_codes(parties, X, mode: str = "infer") -> list[np.ndarray]:
    """Each party's code block for global feature rows (own columns only)."""
    return [party_forward(p, X[:, p.feature_columns], mode)[0] for p in parties]


def server_predict_codes(server: ServerState, codes) -> np.ndarray:
    """Server-side prediction from submitted codes: guard, concat, argmax."""
    H = rebinarize_guard(server_aggregate(codes, expected_parties=server.num_parties))
    logits, _ = nn.forward(server.top, H)
    return np.argmax(logits, axis=1)


def predict(parties, server: ServerState, X) -> np.ndarray:
    """End-to-end inference on global feature rows."""
    return server_predict_codes(server, party_codes(parties, X, mode="infer"))


def evaluate(parties, server: ServerState, X, y, include_consistency: bool = True) -> dict:
    """Infer-mode accuracy and loss parts on the given rows."""
    codes = party_codes(parties, X, mode="infer")
    H = rebinarize_guard(server_aggregate(codes, expected_parties=server.num_parties))
    logits, _ = nn.forward(server.top, H)
    ce, _ = nn.softmax_cross_entropy(logits, y)
    cos_term = 0.0
    if include_consistency:
        T = target_codes(y, server.codebook)
        d = server.code_bits
        cos_term = float(
            np.mean(
                [
                    nn.cosine_loss(H[:, i * d : (i + 1) * d], T)[0]
                    for i in range(server.num_parties)
                ]
            )
        )
    accuracy = float((np.argmax(logits, axis=1) == np.asarray(y)).mean())
    return {"accuracy": accuracy, "ce": ce, "cos_term": cos_term}


def train(parties, server: ServerState, ds: AlignedDataset, options: TrainOptions) -> list[LogRow]:
    """Run the synchronized training loop and return the per-epoch log.

    Per batch: all parties forward, server aggregates and differentiates the
    loss, each party receives exactly its own code-block gradient, everyone
    takes an Adam step. The learning rate follows the step schedule. Batches
    that would reach the hash layer with a single row are skipped (train-mode
    batch norm is undefined there). Deterministic for a fixed seed.
    """
    if options.epochs < 1:
        raise ValueError("epochs must be at least 1")
    if options.batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    d = server.code_bits
    rng = np.random.default_rng(options.seed)
    log: list[LogRow] = []
    for epoch in range(options.epochs):
        lr = nn.lr_schedule(epoch, options.base_lr)
        server.optimizer.lr = lr
        for p in parties:
            p.optimizer.lr = lr

        order = rng.permutation(ds.train_idx)
        for start in range(0, order.size, options.batch_size):
            batch = order[start : start + options.batch_size]
            if batch.size < 2:
                continue
            X = ds.features[batch]
            y = ds.labels[batch]
            forwards = [party_forward(p, X[:, p.feature_columns], "train") for p in parties]
            H = server_aggregate([h for h, _ in forwards], expected_parties=server.num_parties)
            parts = compute_loss(server, H, y, include_consistency=options.use_consistency)
            nn.adam_step(nn.net_params(server.top), parts.top_grads, server.optimizer)
            for i, p in enumerate(parties):
                grads = party_backward(p, forwards[i][1], parts.grad_H[:, i * d : (i + 1) * d])
                nn.adam_step(party_params(p), grads, p.optimizer)

        for split, idx in (("train", ds.train_idx), ("test", ds.test_idx)):
            if idx.size == 0:
                continue
            stats = evaluate(
                parties,
                server,
                ds.features[idx],
                ds.labels[idx],
                include_consistency=options.use_consistency,
            )
            log.append(
                LogRow(
                    epoch=epoch,
                    split=split,
                    accuracy=stats["accuracy"],
                    ce=stats["ce"],
                    cos_term=stats["cos_term"],
                    lr=lr,
                )
            )
    return log
