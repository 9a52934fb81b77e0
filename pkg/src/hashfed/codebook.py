"""Pre-defined binary target codes, one per class.

Codes are drawn i.i.d. uniform over {-1, +1} per bit, with per-row rejection
sampling to keep rows distinct. Distinct random codes are nearly orthogonal
once the code is a few dozen bits long, which is what the target-alignment
loss leans on.
"""

import math
from dataclasses import dataclass

import numpy as np

from .nn import as_matrix


@dataclass(frozen=True)
class Codebook:
    codes: np.ndarray  # (num_classes, code_bits), entries +-1.0
    seed: int

    @property
    def num_classes(self) -> int:
        return self.codes.shape[0]

    @property
    def code_bits(self) -> int:
        return self.codes.shape[1]


def code_length(num_classes: int) -> int:
    """Minimum bits that give every class a distinct code: ceil(log2 C)."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    return (num_classes - 1).bit_length()


def generate_codebook(num_classes: int, code_bits: int, seed: int) -> Codebook:
    """Sample a codebook of distinct +-1 rows.

    Each row is redrawn until unseen, so generation works even when the code
    space is exactly full (2**code_bits == num_classes).
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if code_bits < 1:
        raise ValueError("code_bits must be positive")
    if 2**code_bits < num_classes:
        raise ValueError(f"{code_bits} bits cannot give {num_classes} distinct codes")
    rng = np.random.default_rng(seed)
    seen: set[bytes] = set()
    rows = []
    for _ in range(num_classes):
        while True:
            row = np.where(rng.random(code_bits) < 0.5, -1.0, 1.0)
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(row)
                break
    return Codebook(codes=np.array(rows), seed=seed)


def _check_code(h) -> np.ndarray:
    v = np.asarray(h, dtype=np.float64).ravel()
    if not np.all(np.abs(v) == 1.0):
        raise ValueError("codes must have +-1 entries")
    return v


def hamming(h1, h2) -> int:
    """Number of positions where two +-1 codes disagree."""
    a = _check_code(h1)
    b = _check_code(h2)
    if a.shape != b.shape:
        raise ValueError("codes must have equal length")
    return int(round((len(a) - float(a @ b)) / 2.0))


def cosine_binary(h1, h2) -> float:
    """Cosine similarity of two +-1 codes: <a, b> / d."""
    a = _check_code(h1)
    b = _check_code(h2)
    if a.shape != b.shape:
        raise ValueError("codes must have equal length")
    return float(a @ b) / len(a)


def target_codes(labels, cb: Codebook) -> np.ndarray:
    """Stack the code rows for a label vector: out[i] = codes[labels[i]]."""
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1:
        raise ValueError("labels must be a vector")
    if y.size and (y.min() < 0 or y.max() >= cb.num_classes):
        raise ValueError("label out of range")
    return cb.codes[y].copy()


def orthogonality_report(cb: Codebook) -> dict:
    """Pairwise cosine statistics over distinct class pairs."""
    C = cb.num_classes
    codes = as_matrix(cb.codes)
    gram = codes @ codes.T / cb.code_bits
    iu = np.triu_indices(C, k=1)
    cos = gram[iu]
    return {
        "mean_cos": float(cos.mean()),
        "mean_abs_cos": float(np.abs(cos).mean()),
        "max_abs_cos": float(np.abs(cos).max()),
        "orthogonal_fraction": float((cos == 0.0).mean()),
    }


def orthogonal_pair_probability(code_bits: int, p: float = 0.5) -> float:
    """Chance two independent codes are exactly orthogonal.

    Per bit, two codes agree with probability q = p^2 + (1-p)^2 when each bit
    is +1 with probability p. Orthogonality needs exactly half the bits to
    agree, so the answer is binom(d, d/2) q^(d/2) (1-q)^(d/2), and 0 for odd
    d.
    """
    if code_bits < 1:
        raise ValueError("code_bits must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if code_bits % 2 == 1:
        return 0.0
    q = p * p + (1.0 - p) * (1.0 - p)
    half = code_bits // 2
    return float(math.comb(code_bits, half) * q**half * (1.0 - q) ** half)
