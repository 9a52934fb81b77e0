"""Experiment orchestration: build, train, persist, evaluate, attack.

A run is addressed by its config hash; artifacts live under
out_root/<hash>/ as checkpoint.json, train_log.csv, and reports/*. All
report builders here load a previously trained run (raising when the
checkpoint is missing), rebuild the dataset deterministically from the
config echo, and write their JSON/CSV next to the checkpoint.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import attacks, defense, metrics, protocol
from .checkpoint import load_checkpoint, save_checkpoint
from .codebook import code_length, generate_codebook, orthogonality_report
from .config import ExperimentConfig, config_hash
from .data import (
    AlignedDataset,
    load_csv,
    oversample_balance,
    synth_blobs,
    synth_images,
    train_test_split,
    with_partition,
)


def build_dataset(cfg: ExperimentConfig) -> AlignedDataset:
    """Materialize the config's dataset: generate or load, split, partition."""
    dcfg = cfg.dataset
    if dcfg.kind == "blobs":
        ds = synth_blobs(dcfg.classes, dcfg.n_per_class, dcfg.dim, dcfg.separation, cfg.seed)
        ds = train_test_split(ds, cfg.train_ratio, seed=cfg.seed)
    elif dcfg.kind == "images":
        ds = synth_images(dcfg.classes, dcfg.n_per_class, dcfg.side, dcfg.noise, cfg.seed)
        ds = train_test_split(ds, cfg.train_ratio, seed=cfg.seed)
    else:
        ds = load_csv(
            dcfg.path,
            dcfg.label_column,
            dcfg.drop_columns,
            train_ratio=cfg.train_ratio,
            seed=cfg.seed,
        )
    ds = with_partition(ds, cfg.resolved_ratios())
    if cfg.oversample:
        ds = oversample_balance(ds, seed=cfg.seed)
    if ds.num_classes < 2:
        raise ValueError("dataset must contain at least 2 classes")
    return ds


def build_system(cfg: ExperimentConfig, ds: AlignedDataset):
    """Fresh parties and server for a dataset, seeded from the config."""
    classes = ds.num_classes
    bits = cfg.resolved_code_bits(classes)
    cb = generate_codebook(classes, bits, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    parties = [
        protocol.build_party(
            i,
            cols,
            cfg.bottom_hidden,
            bits,
            rng,
            lr=cfg.optimizer.learning_rate,
            weight_decay=cfg.optimizer.weight_decay,
            use_bn=cfg.use_bn,
            bn_trainable=cfg.bn_affine_trainable,
        )
        for i, cols in enumerate(ds.feature_partition)
    ]
    server = protocol.build_server(
        cb,
        len(parties),
        cfg.top_hidden,
        rng,
        lr=cfg.optimizer.learning_rate,
        weight_decay=cfg.optimizer.weight_decay,
    )
    return parties, server


def run_dir(cfg: ExperimentConfig, out_root) -> Path:
    return Path(out_root) / config_hash(cfg)


def write_train_log(path, log) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "split", "accuracy", "ce", "cos_term", "lr"])
        for row in log:
            w.writerow([row.epoch, row.split, repr(row.accuracy), repr(row.ce), repr(row.cos_term), repr(row.lr)])


def _write_report(directory: Path, name: str, payload: dict) -> str:
    reports = directory / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    path = reports / name
    path.write_text(json.dumps(payload, indent=1))
    return str(path)


def run_experiment(cfg: ExperimentConfig, out_root) -> dict:
    """Train per config and write checkpoint + train log; returns a summary."""
    ds = build_dataset(cfg)
    parties, server = build_system(cfg, ds)
    options = protocol.TrainOptions(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        base_lr=cfg.optimizer.learning_rate,
        seed=cfg.seed,
        use_consistency=cfg.use_consistency,
    )
    log = protocol.train(parties, server, ds, options)
    directory = run_dir(cfg, out_root)
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(directory / "checkpoint.json", parties, server, cfg, log)
    write_train_log(directory / "train_log.csv", log)

    test_rows = [r for r in log if r.split == "test"]
    train_rows = [r for r in log if r.split == "train"]
    return {
        "run_id": config_hash(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "out_dir": str(directory),
        "checkpoint_path": str(directory / "checkpoint.json"),
        "train_log_path": str(directory / "train_log.csv"),
        "epochs": cfg.epochs,
        "final_train_accuracy": train_rows[-1].accuracy if train_rows else None,
        "final_test_accuracy": test_rows[-1].accuracy if test_rows else None,
    }


def load_run(cfg: ExperimentConfig, out_root):
    """Load a trained run for this config; the checkpoint must exist."""
    directory = run_dir(cfg, out_root)
    parties, server, stored_cfg, log = load_checkpoint(directory / "checkpoint.json")
    if config_hash(stored_cfg) != config_hash(cfg):
        raise ValueError("checkpoint does not match the requested config")
    ds = build_dataset(cfg)
    return parties, server, ds, log, directory


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed}


def write_pgm(path, img) -> None:
    """Plain PGM (P2), maxval 255; values clipped to [0, 1] first."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise ValueError("PGM needs a 2-D image")
    gray = np.rint(arr * 255).astype(int)
    lines = ["P2", f"{arr.shape[1]} {arr.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in gray]
    Path(path).write_text("\n".join(lines) + "\n")


def _party_block_shape(ds: AlignedDataset, party) -> tuple[int, int] | None:
    if ds.image_side is None:
        return None
    return (ds.image_side, party.feature_columns.size // ds.image_side)


def reconstruction_report(
    cfg: ExperimentConfig,
    out_root,
    party: int = 0,
    lam: float | None = None,
    steps: int | None = None,
    lr: float | None = None,
    seed: int | None = None,
    restarts: int | None = None,
    dump_pgm: bool = False,
) -> dict:
    """Per-class reconstruction from codebook targets, with leakage metrics.

    For every class, gradient-descend inputs whose pre-sign output matches
    the class code, from `restarts` seeded starts; compare against the class
    mean of the party's real feature block (SSIM and value-histogram KLD per
    class, distance correlation across all restarts x classes).
    """
    rc = cfg.attacks.reconstruction
    lam = rc.lam if lam is None else lam
    steps = rc.steps if steps is None else steps
    lr = rc.lr if lr is None else lr
    seed = cfg.seed if seed is None else seed
    restarts = rc.seeds if restarts is None else restarts

    parties, server, ds, _, directory = load_run(cfg, out_root)
    if not 0 <= party < len(parties):
        raise ValueError("party out of range")
    p = parties[party]
    shape = _party_block_shape(ds, p)

    per_class = []
    real_rows = []
    recon_rows = []
    for c in range(server.codebook.num_classes):
        target = server.codebook.codes[c]
        mask = ds.labels == c
        class_mean = ds.features[mask][:, p.feature_columns].mean(axis=0)
        best = None
        for r in range(restarts):
            result = attacks.reconstruct_from_code(
                p,
                target,
                lam=lam,
                steps=steps,
                lr=lr,
                seed=seed + 1000 * r + c,
                image_shape=shape,
            )
            real_rows.append(class_mean)
            recon_rows.append(result.x.ravel())
            if best is None or result.objective[-1] < best.objective[-1]:
                best = result
        x = best.x.ravel()
        entry = {
            "label": c,
            "ssim": min(max(metrics.ssim(class_mean, x), 0.0), 1.0),
            "kld": metrics.kld_hist(class_mean, x),
            "final_objective": best.objective[-1],
        }
        if dump_pgm and shape is not None:
            reports = directory / "reports"
            reports.mkdir(parents=True, exist_ok=True)
            recon_path = reports / f"recon_class{c}.pgm"
            real_path = reports / f"real_class{c}.pgm"
            write_pgm(recon_path, x.reshape(shape))
            write_pgm(real_path, class_mean.reshape(shape))
            entry["pgm"] = str(recon_path)
            entry["real_pgm"] = str(real_path)
        per_class.append(entry)

    report = {
        **_provenance(cfg),
        "attack": "reconstruction",
        "party": party,
        "lam": lam,
        "steps": steps,
        "lr": lr,
        "attack_seed": seed,
        "restarts": restarts,
        "per_class": per_class,
        "ssim_mean": float(np.mean([e["ssim"] for e in per_class])),
        "kld_mean": float(np.mean([e["kld"] for e in per_class])),
        "dcor": metrics.dcor(np.array(real_rows), np.array(recon_rows)),
    }
    report["report_path"] = _write_report(directory, "reconstruction.json", report)
    return report


def pgd_report(
    cfg: ExperimentConfig,
    out_root,
    omega: float | None = None,
    eta: float | None = None,
    steps: int | None = None,
    targets: int | None = None,
    party: int = 0,
    seed: int | None = None,
) -> dict:
    """Label-forcing attack over seeded (sample, target-class) trials.

    Targets are drawn to differ from the clean prediction, so a success
    always means the perturbation actually moved the server.
    """
    pc = cfg.attacks.pgd
    omega = pc.omega if omega is None else omega
    eta = pc.eta if eta is None else eta
    steps = pc.steps if steps is None else steps
    targets = pc.targets if targets is None else targets
    seed = cfg.seed if seed is None else seed

    parties, server, ds, _, directory = load_run(cfg, out_root)
    if not 0 <= party < len(parties):
        raise ValueError("party out of range")
    C = server.codebook.num_classes
    if C < 2:
        raise ValueError("need at least 2 classes to force a label")
    rng = np.random.default_rng(seed)
    rows = ds.test_idx if ds.test_idx.size else ds.train_idx

    trials = []
    for _ in range(targets):
        idx = int(rng.choice(rows))
        sample = ds.features[idx : idx + 1]
        base = int(protocol.predict(parties, server, sample)[0])
        options = [c for c in range(C) if c != base]
        y_t = int(rng.choice(options))
        result = attacks.pgd_attack(parties, server, sample, y_t, omega, eta, steps, adv_party=party)
        trials.append(
            {
                "row": idx,
                "true_label": int(ds.labels[idx]),
                "base_prediction": base,
                "target": y_t,
                "success": result.success,
                "steps_to_success": result.steps_to_success,
            }
        )
    report = {
        **_provenance(cfg),
        "attack": "pgd",
        "party": party,
        "omega": omega,
        "eta": eta,
        "steps": steps,
        "attack_seed": seed,
        "targets": targets,
        "success_rate": float(np.mean([t["success"] for t in trials])),
        "trials": trials,
    }
    report["report_path"] = _write_report(directory, "pgd.json", report)
    return report


def pla_report(cfg: ExperimentConfig, out_root, party: int = 0, seed: int | None = None) -> dict:
    """Probe label leakage from one party's codes vs continuous embeddings."""
    seed = cfg.seed if seed is None else seed
    parties, server, ds, _, directory = load_run(cfg, out_root)
    if not 0 <= party < len(parties):
        raise ValueError("party out of range")
    p = parties[party]
    X_local = ds.features[:, p.feature_columns]
    codes, cache = protocol.party_forward(p, X_local, mode="infer")
    embeddings = cache["pre_sign"]
    probe_cfg = attacks.ProbeConfig(
        hidden=cfg.attacks.probe.hidden,
        epochs=cfg.attacks.probe.epochs,
        lr=cfg.attacks.probe.lr,
        train_ratio=cfg.attacks.probe.train_ratio,
    )
    acc_hash = attacks.passive_label_inference(codes, ds.labels, probe_cfg, seed=seed)
    acc_embed = attacks.passive_label_inference(embeddings, ds.labels, probe_cfg, seed=seed)
    report = {
        **_provenance(cfg),
        "attack": "pla",
        "party": party,
        "attack_seed": seed,
        "probe_hash_accuracy": acc_hash,
        "probe_embedding_accuracy": acc_embed,
        "leakage_gap": acc_embed - acc_hash,
        "chance_level": 1.0 / server.codebook.num_classes,
    }
    report["report_path"] = _write_report(directory, "pla.json", report)
    return report


def detect_report(cfg: ExperimentConfig, out_root, reference: str | None = None) -> dict:
    """Consistency audit on the test split plus detection flag counts."""
    reference = cfg.defense.detection_reference if reference is None else reference
    parties, server, ds, _, directory = load_run(cfg, out_root)
    X, y = ds.test_features(), ds.test_labels()
    audit = defense.consistency_audit(parties, server, X, y, reference=reference)
    policy = defense.DetectionPolicy(
        code_bits=server.code_bits,
        threshold=cfg.defense.detection_threshold,
        reference=reference,
    )
    codes = protocol.party_codes(parties, X, mode="infer")
    flags = []
    for u in range(X.shape[0]):
        flag, worst = defense.detect_abnormal([c[u] for c in codes], policy)
        flags.append((flag, worst))
    report = {
        **_provenance(cfg),
        "kind": "detection",
        "threshold": policy.resolved_threshold,
        "reference": reference,
        "flagged": int(sum(f for f, _ in flags)),
        "samples": len(flags),
        "max_distance": int(max(w for _, w in flags)) if flags else None,
        "audit": audit,
    }
    report["report_path"] = _write_report(directory, "detection.json", report)
    return report


def _eps_label(eps: float) -> str:
    return "inf" if math.isinf(eps) else repr(float(eps))


def dp_sweep_report(
    cfg: ExperimentConfig,
    out_root,
    epsilons=None,
    seed: int | None = None,
    repeats: int | None = None,
) -> dict:
    """Accuracy-versus-epsilon table on the test split, written as CSV too."""
    eps = list(cfg.defense.dp_epsilons) if epsilons is None else [float(e) for e in epsilons]
    seed = cfg.seed if seed is None else seed
    repeats = cfg.defense.dp_repeats if repeats is None else repeats
    parties, server, ds, _, directory = load_run(cfg, out_root)
    rows = defense.dp_sweep(
        parties, server, ds.test_features(), ds.test_labels(), eps, seed=seed, repeats=repeats
    )
    table = [
        {
            "epsilon": _eps_label(r["epsilon"]),
            "accuracy": r["accuracy"],
            "delta": r["delta"],
            "repeats": r["repeats"],
        }
        for r in rows
    ]
    reports = directory / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    csv_path = reports / "dp_sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "accuracy", "delta", "repeats"])
        for r in table:
            w.writerow(
                [r["epsilon"], repr(r["accuracy"]), "" if r["delta"] is None else repr(r["delta"]), r["repeats"]]
            )
    report = {
        **_provenance(cfg),
        "kind": "dp_sweep",
        "attack_seed": seed,
        "rows": table,
        "csv_path": str(csv_path),
    }
    report["report_path"] = _write_report(directory, "dp_sweep.json", report)
    return report


def _toggled(cfg: ExperimentConfig, toggle: str) -> ExperimentConfig:
    if toggle == "bn":
        return cfg.model_copy(update={"use_bn": False})
    if toggle == "consistency":
        return cfg.model_copy(update={"use_consistency": False})
    raise ValueError(f"unknown toggle {toggle!r}")


def _epochs_to_reach(log, bar: float) -> int | None:
    for row in log:
        if row.split == "test" and row.accuracy >= bar:
            return row.epoch
    return None


def ablate_report(cfg: ExperimentConfig, out_root, toggle: str) -> dict:
    """Train the base config and its toggled variant, compare trajectories.

    For the consistency toggle the report also states how fast each run
    reaches the base run's epoch-10 test accuracy.
    """
    base_summary = run_experiment(cfg, out_root)
    variant_cfg = _toggled(cfg, toggle)
    variant_summary = run_experiment(variant_cfg, out_root)

    _, _, _, base_log, directory = load_run(cfg, out_root)
    _, _, _, variant_log, _ = load_run(variant_cfg, out_root)

    report = {
        **_provenance(cfg),
        "kind": "ablation",
        "toggle": toggle,
        "base": base_summary,
        "variant": variant_summary,
        "accuracy_drop": (base_summary["final_test_accuracy"] or 0.0)
        - (variant_summary["final_test_accuracy"] or 0.0),
    }
    if toggle == "consistency":
        bar_rows = [r for r in base_log if r.split == "test" and r.epoch == min(10, cfg.epochs - 1)]
        if bar_rows:
            bar = bar_rows[0].accuracy
            report["bar_accuracy"] = bar
            report["epochs_to_bar_with"] = _epochs_to_reach(base_log, bar)
            report["epochs_to_bar_without"] = _epochs_to_reach(variant_log, bar)
    report["report_path"] = _write_report(directory, f"ablate_{toggle}.json", report)
    return report


def eval_report(cfg: ExperimentConfig, out_root) -> dict:
    """Infer-mode metrics of a stored run on both splits."""
    parties, server, ds, _, directory = load_run(cfg, out_root)
    train_stats = protocol.evaluate(parties, server, ds.train_features(), ds.train_labels())
    out = {**_provenance(cfg), "kind": "eval", "train": train_stats, "test": None}
    if ds.test_idx.size:
        out["test"] = protocol.evaluate(parties, server, ds.test_features(), ds.test_labels())
    out["report_path"] = _write_report(directory, "eval.json", out)
    return out


def gen_codes_report(classes: int, code_bits: int | None, seed: int, out_root) -> dict:
    """Generate and persist a standalone codebook with its pair statistics."""
    bits = code_length(classes) if code_bits is None else code_bits
    cb = generate_codebook(classes, bits, seed)
    payload = {
        "classes": classes,
        "code_bits": bits,
        "seed": seed,
        "codes": cb.codes.astype(int).tolist(),
        "orthogonality": orthogonality_report(cb),
    }
    directory = Path(out_root) / "codebooks"
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"C{classes}_d{bits}_seed{seed}.json"
    path.write_text(json.dumps(payload, indent=1))
    payload["report_path"] = str(path)
    return payload
