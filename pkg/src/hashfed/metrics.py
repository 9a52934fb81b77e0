"""Leakage metrics for comparing reconstructions against real data.

kld_hist measures value-distribution divergence via smoothed histograms, ssim
is the global structural-similarity index for unit-range images, and dcor is
distance correlation between two row-aligned sample sets.
"""

import numpy as np

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def kld_hist(x_real, x_recon, bins: int = 32) -> float:
    """KL divergence between value histograms, add-one smoothed.

    Both inputs are flattened; shared bin edges span the combined value
    range. Smoothing keeps every bin positive, so the result is finite.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    a = np.asarray(x_real, dtype=np.float64).ravel()
    b = np.asarray(x_recon, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty input")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0  # all values identical, both histograms match anyway
    pc = np.histogram(a, bins=bins, range=(lo, hi))[0] + 1.0
    qc = np.histogram(b, bins=bins, range=(lo, hi))[0] + 1.0
    p = pc / pc.sum()
    q = qc / qc.sum()
    return float(np.sum(p * np.log(p / q)))


def ssim(x, y) -> float:
    """Global structural similarity for unit-range images.

    Single-window form: (2 mu_x mu_y + C1)(2 cov + C2) over
    (mu_x^2 + mu_y^2 + C1)(var_x + var_y + C2). Raw value in [-1, 1];
    reports clamp to [0, 1] where needed.
    """
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    if a.size == 0:
        raise ValueError("empty input")
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(num / den)


def dcor(x_set, y_set) -> float:
    """Distance correlation between two sample sets with aligned rows.

    Double-centers the pairwise Euclidean distance matrices and correlates
    them. Degenerate sets (zero distance variance on either side) return 0.
    """
    X = np.atleast_2d(np.asarray(x_set, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(y_set, dtype=np.float64))
    if X.shape[0] != Y.shape[0]:
        raise ValueError("row counts must match")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")

    def centered(D):
        return D - D.mean(axis=0) - D.mean(axis=1)[:, None] + D.mean()

    def pairwise(Z):
        diff = Z[:, None, :] - Z[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    A = centered(pairwise(X))
    B = centered(pairwise(Y))
    dvar_x = (A * A).mean()
    dvar_y = (B * B).mean()
    if dvar_x <= 0.0 or dvar_y <= 0.0:
        return 0.0
    dcov2 = (A * B).mean()
    r2 = dcov2 / np.sqrt(dvar_x * dvar_y)
    return float(np.sqrt(max(r2, 0.0)))
