"""Checkpoint manifests: JSON round-trip of a trained system.

The manifest stores the config echo, the codebook (seed plus integer codes),
every party's bottom net and batch-norm buffers, the server's top net, and
the training log. Python's json writes floats at full round-trip precision,
so a save/load cycle reproduces predictions bit for bit. Optimizer moments
are not persisted; a loaded system predicts and serves attacks but does not
resume training mid-run.
"""

import json
from pathlib import Path

import numpy as np

from . import nn
from .codebook import Codebook
from .config import ExperimentConfig, config_hash
from .hashing import BatchNormState
from .protocol import LogRow, PartyState, ServerState

FORMAT_VERSION = 1


def _net_to_dict(net: nn.DenseNet) -> list[dict]:
    return [
        {
            "weight": layer.weight.tolist(),
            "bias": layer.bias.tolist(),
            "activation": layer.activation,
        }
        for layer in net.layers
    ]


def _net_from_dict(entries: list[dict]) -> nn.DenseNet:
    return nn.DenseNet(
        [
            nn.Layer(
                weight=np.array(d["weight"], dtype=np.float64),
                bias=np.array(d["bias"], dtype=np.float64),
                activation=d["activation"],
            )
            for d in entries
        ]
    )


def _bn_to_dict(bn: BatchNormState | None) -> dict | None:
    if bn is None:
        return None
    return {
        "gamma": bn.gamma.tolist(),
        "beta": bn.beta.tolist(),
        "running_mean": bn.running_mean.tolist(),
        "running_var": bn.running_var.tolist(),
        "eps": bn.eps,
        "momentum": bn.momentum,
        "trainable": bn.trainable,
        "batches_tracked": bn.batches_tracked,
    }


def _bn_from_dict(d: dict | None) -> BatchNormState | None:
    if d is None:
        return None
    return BatchNormState(
        gamma=np.array(d["gamma"], dtype=np.float64),
        beta=np.array(d["beta"], dtype=np.float64),
        running_mean=np.array(d["running_mean"], dtype=np.float64),
        running_var=np.array(d["running_var"], dtype=np.float64),
        eps=d["eps"],
        momentum=d["momentum"],
        trainable=d["trainable"],
        batches_tracked=d["batches_tracked"],
    )


def to_manifest(parties, server: ServerState, cfg: ExperimentConfig, log) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": cfg.model_dump(mode="json"),
        "config_hash": config_hash(cfg),
        "codebook": {
            "seed": server.codebook.seed,
            "codes": server.codebook.codes.astype(int).tolist(),
        },
        "server": {
            "top": _net_to_dict(server.top),
            "num_parties": server.num_parties,
            "code_bits": server.code_bits,
        },
        "parties": [
            {
                "party_id": p.party_id,
                "feature_columns": p.feature_columns.tolist(),
                "bottom": _net_to_dict(p.bottom),
                "bn": _bn_to_dict(p.bn),
            }
            for p in parties
        ],
        "log": [vars(row) for row in log],
    }


def from_manifest(manifest: dict):
    """Rebuild (parties, server, config, log) from a manifest dict."""
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unrecognized checkpoint format version {version!r}")
    cfg = ExperimentConfig.model_validate(manifest["config"])
    cb = Codebook(
        codes=np.array(manifest["codebook"]["codes"], dtype=np.float64),
        seed=manifest["codebook"]["seed"],
    )
    srv = manifest["server"]
    top = _net_from_dict(srv["top"])
    server = ServerState(
        top=top,
        optimizer=nn.adam_init(
            nn.net_params(top),
            lr=cfg.optimizer.learning_rate,
            weight_decay=cfg.optimizer.weight_decay,
        ),
        codebook=cb,
        num_parties=srv["num_parties"],
        code_bits=srv["code_bits"],
    )
    parties = []
    for pd in manifest["parties"]:
        bottom = _net_from_dict(pd["bottom"])
        party = PartyState(
            party_id=pd["party_id"],
            bottom=bottom,
            bn=_bn_from_dict(pd["bn"]),
            feature_columns=np.array(pd["feature_columns"], dtype=np.int64),
            optimizer=nn.AdamState(lr=cfg.optimizer.learning_rate),
        )
        parties.append(party)
    log = [LogRow(**row) for row in manifest["log"]]
    return parties, server, cfg, log


def save_checkpoint(path, parties, server, cfg, log) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_manifest(parties, server, cfg, log), indent=1))


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint {path}")
    return from_manifest(json.loads(path.read_text()))
