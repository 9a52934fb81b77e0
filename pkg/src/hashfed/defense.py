"""Cross-party consistency detection and Laplace-noise privacy analytics.

Detection exploits the consistency requirement: honest parties' codes for one
sample should agree, so a large cross-party Hamming distance flags cheating.
The DP side binarizes twice, Sign(code + Laplace(2/eps)), and comes with the
closed-form per-bit flip probability, the flipped-bit-count distribution, and
an accuracy-versus-epsilon sweep.
"""

import math
from dataclasses import dataclass

import numpy as np

from .protocol import ServerState, party_codes, server_predict_codes


@dataclass(frozen=True)
class DetectionPolicy:
    code_bits: int
    threshold: int | None = None  # None means floor(code_bits / 2), at least 1
    reference: str = "pairwise"  # or "initiator": distances to party 0 only

    def __post_init__(self):
        if self.reference not in ("pairwise", "initiator"):
            raise ValueError(f"unknown reference mode {self.reference!r}")
        t = self.resolved_threshold
        if not 0 < t <= self.code_bits:
            raise ValueError("threshold must be in (0, code_bits]")

    @property
    def resolved_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        # the floor(d/2) default degenerates to 0 at one-bit codes
        return max(1, self.code_bits // 2)


def _code_rows(codes) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    if not np.all(np.abs(rows) == 1.0):
        raise ValueError("codes must have +-1 entries")
    return rows


def detect_abnormal(codes, policy: DetectionPolicy) -> tuple[bool, int]:
    """Flag one sample's per-party codes when they disagree too much.

    `codes` holds one code row per party. Returns (flag, max pairwise
    Hamming); the flag fires only when the distance strictly exceeds the
    threshold.
    """
    rows = _code_rows(codes)
    n, d = rows.shape
    if n < 2:
        raise ValueError("detection needs at least two parties")
    if d != policy.code_bits:
        raise ValueError("code length does not match the policy")
    if policy.reference == "initiator":
        pairs = [(0, j) for j in range(1, n)]
    else:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    worst = max(int(round((d - rows[i] @ rows[j]) / 2.0)) for i, j in pairs)
    return worst > policy.resolved_threshold, worst


def _pair_distances(codes: list, reference: str) -> np.ndarray:
    n = len(codes)
    d = codes[0].shape[1]
    if reference == "initiator":
        pairs = [(0, j) for j in range(1, n)]
    else:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    per_pair = [(d - (codes[i] * codes[j]).sum(axis=1)) / 2.0 for i, j in pairs]
    return np.mean(per_pair, axis=0)


def consistency_audit(parties, server: ServerState, X, y, reference: str = "pairwise") -> dict:
    """Mean cross-party code distance, split by prediction correctness.

    Evaluates the trained system on the given rows and reports, per class and
    overall, the mean cross-party Hamming distance among correctly and
    wrongly predicted samples. Cells with no samples are None (a class can be
    absent, or have no errors).
    """
    if len(parties) < 2:
        raise ValueError("audit needs at least two parties")
    if reference not in ("pairwise", "initiator"):
        raise ValueError(f"unknown reference mode {reference!r}")
    y = np.asarray(y, dtype=np.int64)
    codes = party_codes(parties, X, mode="infer")
    preds = server_predict_codes(server, codes)
    dist = _pair_distances(codes, reference)
    correct = preds == y

    def cell(mask) -> tuple[float | None, int]:
        k = int(mask.sum())
        return (float(dist[mask].mean()) if k else None, k)

    per_class = []
    for c in range(server.codebook.num_classes):
        in_class = y == c
        if not in_class.any():
            per_class.append(
                {"label": c, "correct_mean": None, "correct_count": 0, "wrong_mean": None, "wrong_count": 0}
            )
            continue
        cm, ck = cell(in_class & correct)
        wm, wk = cell(in_class & ~correct)
        per_class.append(
            {"label": c, "correct_mean": cm, "correct_count": ck, "wrong_mean": wm, "wrong_count": wk}
        )
    overall_correct, n_correct = cell(correct)
    overall_wrong, n_wrong = cell(~correct)
    return {
        "reference": reference,
        "per_class": per_class,
        "correct_mean": overall_correct,
        "correct_count": n_correct,
        "wrong_mean": overall_wrong,
        "wrong_count": n_wrong,
        "accuracy": float(correct.mean()),
    }


@dataclass(frozen=True)
class DpParams:
    epsilon: float
    sensitivity: float = 2.0  # the gap between -1 and +1

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValueError("epsilon must be finite and positive")
        if self.sensitivity != 2.0:
            raise ValueError("sensitivity is fixed at 2 for binary codes")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon


def laplace_noise(rng: np.random.Generator, scale: float, size) -> np.ndarray:
    """Inverse-CDF Laplace draw from the given generator.

    Kept explicit (rather than the generator's own method) so sampled values
    are reproducible from the seed across library versions.
    """
    u = rng.random(size)
    centered = u - 0.5
    inner = np.maximum(1.0 - 2.0 * np.abs(centered), 1e-300)
    return -scale * np.sign(centered) * np.log(inner)


def dp_binarize(pre_code, dp: DpParams, seed: int = 0) -> np.ndarray:
    """Noisy re-binarization: Sign(code + Laplace(2/eps)) per bit."""
    code = np.asarray(pre_code, dtype=np.float64)
    if not np.all(np.abs(code) == 1.0):
        raise ValueError("codes must have +-1 entries")
    noise = laplace_noise(np.random.default_rng(seed), dp.scale, code.shape)
    return np.where(code + noise >= 0.0, 1.0, -1.0)


def flip_probability(epsilon: float) -> float:
    """Chance Laplace(2/eps) noise flips one bit's sign: (1/2) e^(-eps/2)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return 0.5 * math.exp(-epsilon / 2.0)


def dp_delta(epsilon: float) -> float:
    """The delta in the (eps, delta) guarantee after re-signing: 1 - e^(-eps/2)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return 1.0 - math.exp(-epsilon / 2.0)


def flip_count_pmf(n: int, k: int, epsilon: float) -> float:
    """Probability that exactly k of n bits flip under the noise."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("k out of range")
    p = flip_probability(epsilon)
    return float(math.comb(n, k) * p**k * (1.0 - p) ** (n - k))


def dp_sweep(
    parties,
    server: ServerState,
    X,
    y,
    epsilons,
    seed: int = 0,
    repeats: int = 1,
) -> list[dict]:
    """Accuracy versus privacy budget, with noise injected at every party.

    Each requested epsilon gets a row (averaged over `repeats` noise draws);
    an epsilon=inf clean-baseline row is appended when not requested. Rows
    carry the matching delta = 1 - e^(-eps/2) (None for the baseline).
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    y = np.asarray(y, dtype=np.int64)
    eps_list = [float(e) for e in epsilons]
    if not any(math.isinf(e) for e in eps_list):
        eps_list.append(math.inf)
    codes = party_codes(parties, X, mode="infer")
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=(len(eps_list), repeats, len(parties)))

    rows = []
    for e_i, eps in enumerate(eps_list):
        if math.isinf(eps):
            acc = float((server_predict_codes(server, codes) == y).mean())
            rows.append({"epsilon": eps, "accuracy": acc, "delta": None, "repeats": 1})
            continue
        dp = DpParams(epsilon=eps)
        accs = []
        for r in range(repeats):
            noisy = [
                dp_binarize(c, dp, seed=int(seeds[e_i, r, p_i]))
                for p_i, c in enumerate(codes)
            ]
            accs.append(float((server_predict_codes(server, noisy) == y).mean()))
        rows.append(
            {"epsilon": eps, "accuracy": float(np.mean(accs)), "delta": dp_delta(eps), "repeats": repeats}
        )
    return rows
