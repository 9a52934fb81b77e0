"""Dataset construction for vertical experiments.

An AlignedDataset pairs a feature matrix with labels, a per-party column
partition, and train/test row indices. Parties only ever see their own
columns; the partition is the isolation boundary. Builders here cover sample
alignment across id-keyed sources, vertical feature splitting (tabular and
image variants), class balancing by oversampling, seeded train/test splits,
two synthetic generators, and a CSV loader.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .nn import as_matrix

RATIO_TOL = 1e-6


@dataclass(frozen=True)
class AlignedDataset:
    features: np.ndarray  # (n, total_features)
    labels: np.ndarray  # (n,) int64
    feature_partition: tuple  # per-party column index arrays
    train_idx: np.ndarray  # may repeat rows after oversampling
    test_idx: np.ndarray
    image_side: int | None = None

    def __post_init__(self):
        X = as_matrix(self.features)
        y = np.asarray(self.labels, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("labels length must match feature rows")
        if y.size and y.min() < 0:
            raise ValueError("labels must be non-negative class indices")
        cols = np.concatenate([np.asarray(p) for p in self.feature_partition])
        if len(np.unique(cols)) != len(cols):
            raise ValueError("feature partition blocks overlap")
        if sorted(cols.tolist()) != list(range(X.shape[1])):
            raise ValueError("feature partition must cover all columns")
        used = set(self.train_idx.tolist()) | set(self.test_idx.tolist())
        if set(self.train_idx.tolist()) & set(self.test_idx.tolist()):
            raise ValueError("train/test rows overlap")
        if used != set(range(X.shape[0])):
            raise ValueError("train/test rows must cover the dataset")

    @property
    def num_rows(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def num_parties(self) -> int:
        return len(self.feature_partition)

    def train_features(self) -> np.ndarray:
        return self.features[self.train_idx]

    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    def test_features(self) -> np.ndarray:
        return self.features[self.test_idx]

    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_idx]


def _fresh(features, labels, partition=None, image_side=None) -> AlignedDataset:
    X = as_matrix(features)
    if partition is None:
        partition = (np.arange(X.shape[1]),)
    return AlignedDataset(
        features=X,
        labels=np.asarray(labels, dtype=np.int64),
        feature_partition=tuple(np.asarray(p, dtype=np.int64) for p in partition),
        train_idx=np.arange(X.shape[0]),
        test_idx=np.arange(0),
        image_side=image_side,
    )


def align(feature_sources, label_source) -> AlignedDataset:
    """Join id-keyed feature sources and a label source on their common ids.

    Each source is an (ids, values) pair. Rows are restricted to the id
    intersection and ordered by sorted id; the column partition follows the
    source order. Raises when a source repeats an id or the intersection is
    empty.
    """
    sources = list(feature_sources)
    if not sources:
        raise ValueError("need at least one feature source")
    keyed = []
    for ids, values in list(sources) + [label_source]:
        ids = list(ids)
        if len(set(ids)) != len(ids):
            raise ValueError("source ids must be unique")
        keyed.append((ids, values))
    common = set(keyed[0][0])
    for ids, _ in keyed[1:]:
        common &= set(ids)
    if not common:
        raise ValueError("empty id intersection across sources")
    order = sorted(common)

    blocks = []
    partition = []
    start = 0
    for ids, values in keyed[:-1]:
        V = as_matrix(values)
        if V.shape[0] != len(ids):
            raise ValueError("feature rows must match ids")
        lookup = {k: i for i, k in enumerate(ids)}
        blocks.append(V[[lookup[k] for k in order]])
        partition.append(np.arange(start, start + V.shape[1]))
        start += V.shape[1]

    label_ids, labels = keyed[-1]
    labels = np.asarray(labels)
    lookup = {k: i for i, k in enumerate(label_ids)}
    y = labels[[lookup[k] for k in order]]
    return _fresh(np.hstack(blocks), y, partition)


def _split_counts(total: int, ratios) -> list[int]:
    ratios = [float(r) for r in ratios]
    if any(r <= 0.0 for r in ratios):
        raise ValueError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > RATIO_TOL:
        raise ValueError("ratios must sum to 1")
    counts = [int(math.floor(total * r + 1e-9)) for r in ratios[:-1]]
    counts.append(total - sum(counts))
    if any(c < 1 for c in counts):
        raise ValueError("a party receives 0 columns")
    return counts


def vertical_split(total_features: int, ratios) -> list[np.ndarray]:
    """Contiguous column blocks sized by ratios; leftover columns go last."""
    counts = _split_counts(total_features, ratios)
    out = []
    start = 0
    for c in counts:
        out.append(np.arange(start, start + c))
        start += c
    return out


def image_vertical_split(side: int, ratios) -> list[np.ndarray]:
    """Partition flattened side x side pixels into vertical column bands.

    For two parties the boundary sits at the center: the left band gets
    ceil(side * ratio) pixel-columns. More parties fall back to the floor
    rounding of `vertical_split` applied to pixel-columns.
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) == 2:
        if any(r <= 0.0 for r in ratios) or abs(sum(ratios) - 1.0) > RATIO_TOL:
            raise ValueError("ratios must be positive and sum to 1")
        left = int(math.ceil(side * ratios[0] - 1e-9))
        counts = [left, side - left]
        if any(c < 1 for c in counts):
            raise ValueError("a party receives 0 columns")
    else:
        counts = _split_counts(side, ratios)
    out = []
    start = 0
    for c in counts:
        band = [r * side + col for r in range(side) for col in range(start, start + c)]
        out.append(np.array(band, dtype=np.int64))
        start += c
    return out


def with_partition(ds: AlignedDataset, ratios) -> AlignedDataset:
    """Re-partition columns across parties; image data splits by pixel-column."""
    if ds.image_side is not None:
        partition = image_vertical_split(ds.image_side, ratios)
    else:
        partition = vertical_split(ds.num_features, ratios)
    return replace(ds, feature_partition=tuple(partition))


def train_test_split(ds: AlignedDataset, ratio: float = 0.7, seed: int = 0) -> AlignedDataset:
    """Seeded shuffle then row partition; both sides must be non-empty."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    n = ds.num_rows
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(n * ratio + 1e-9)  # guard float truncation at exact multiples
    n_train = min(max(n_train, 1), n - 1)
    return replace(ds, train_idx=order[:n_train], test_idx=order[n_train:])


def oversample_balance(ds: AlignedDataset, seed: int = 0) -> AlignedDataset:
    """Duplicate minority-class train rows until every class hits the max count.

    Duplication happens in the index list (train_idx repeats rows); test rows
    are untouched. The seed drives the with-replacement draw.
    """
    y = ds.labels[ds.train_idx]
    if y.size == 0:
        raise ValueError("no train rows to balance")
    rng = np.random.default_rng(seed)
    counts = np.bincount(y, minlength=ds.num_classes)
    present = np.nonzero(counts)[0]
    if len(present) == 0:
        raise ValueError("no classes present in train rows")
    target = counts.max()
    extra = []
    for c in present:
        short = target - counts[c]
        if short > 0:
            pool = ds.train_idx[y == c]
            extra.append(rng.choice(pool, size=short, replace=True))
    if not extra:
        return ds
    new_train = np.concatenate([ds.train_idx] + extra)
    return replace(ds, train_idx=new_train)


def synth_blobs(
    classes: int = 2,
    n_per_class: int = 200,
    dim: int = 8,
    separation: float = 6.0,
    seed: int = 0,
) -> AlignedDataset:
    """Gaussian clusters with unit covariance around seeded class means.

    Means are drawn standard-normal and rescaled (up only) so the minimum
    pairwise distance reaches `separation`.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if separation <= 0.0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, dim))
    dists = [
        np.linalg.norm(means[i] - means[j])
        for i in range(classes)
        for j in range(i + 1, classes)
    ]
    d_min = min(dists)
    if d_min == 0.0:
        raise ValueError("degenerate coincident class means")
    if d_min < separation:
        means = means * (separation / d_min)
    X = np.vstack([means[c] + rng.normal(size=(n_per_class, dim)) for c in range(classes)])
    y = np.repeat(np.arange(classes), n_per_class)
    return _fresh(X, y)


def _stroke_templates(side: int) -> list[np.ndarray]:
    masks = []
    q1, q3 = side // 4, (3 * side) // 4
    rows, cols = np.indices((side, side))
    masks.append(rows == q1)  # upper horizontal
    masks.append(cols == q1)  # left vertical
    masks.append(rows == q3)  # lower horizontal
    masks.append(cols == q3)  # right vertical
    masks.append(rows == cols)  # main diagonal
    masks.append(rows + cols == side - 1)  # anti-diagonal
    masks.append((rows % (side - 1) == 0) | (cols % (side - 1) == 0))  # border
    return masks


def class_template(label: int, side: int) -> np.ndarray:
    """Deterministic glyph for a class: a union of strokes picked by bits.

    Class c lights stroke k when bit k of (c + 1) is set, so every class gets
    a non-empty, pairwise-distinct pattern.
    """
    strokes = _stroke_templates(side)
    if label < 0 or label + 1 >= 2 ** len(strokes):
        raise ValueError("too many classes for the stroke alphabet")
    img = np.zeros((side, side))
    for k, mask in enumerate(strokes):
        if (label + 1) >> k & 1:
            img[mask] = 1.0
    return img


def synth_images(
    classes: int = 4,
    n_per_class: int = 100,
    side: int = 12,
    noise: float = 0.1,
    seed: int = 0,
) -> AlignedDataset:
    """Noisy glyph images, flattened row-major, pixels clipped to [0, 1]."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if side < 8:
        raise ValueError("side must be at least 8")
    if noise < 0.0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    rows = []
    for c in range(classes):
        base = class_template(c, side).ravel()
        block = np.tile(base, (n_per_class, 1))
        if noise > 0.0:
            block = block + rng.normal(0.0, noise, size=block.shape)
        rows.append(np.clip(block, 0.0, 1.0))
    X = np.vstack(rows)
    y = np.repeat(np.arange(classes), n_per_class)
    return _fresh(X, y, image_side=side)


def load_csv(
    path,
    label_column: str,
    drop_columns=(),
    train_ratio: float = 0.7,
    seed: int = 0,
) -> AlignedDataset:
    """Load a headered CSV, split rows, and standardize with train statistics.

    All columns except the label, the drop list, and an optional "id" column
    must be numeric. Labels map to indices by sorted value. Standardization
    (mean 0, variance 1 per column) uses train-split statistics only, which is
    why the row split happens in here; constant train columns are centered but
    left unscaled.
    """
    drop = set(drop_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("CSV must have a header row")
        if label_column not in reader.fieldnames:
            raise ValueError(f"missing label column {label_column!r}")
        feature_names = [
            c for c in reader.fieldnames if c not in drop and c != label_column and c != "id"
        ]
        if not feature_names:
            raise ValueError("no feature columns left")
        rows = []
        raw_labels = []
        for record in reader:
            vals = []
            for c in feature_names:
                try:
                    vals.append(float(record[c]))
                except (TypeError, ValueError):
                    raise ValueError(f"non-numeric value {record[c]!r} in column {c!r}") from None
            rows.append(vals)
            if record[label_column] in (None, ""):
                raise ValueError("missing label value")
            raw_labels.append(record[label_column])
    if not rows:
        raise ValueError("CSV has no data rows")

    try:
        keys = sorted(set(raw_labels), key=float)
    except ValueError:
        keys = sorted(set(raw_labels))
    index = {k: i for i, k in enumerate(keys)}
    y = np.array([index[v] for v in raw_labels], dtype=np.int64)

    ds = train_test_split(_fresh(np.array(rows), y), ratio=train_ratio, seed=seed)
    mu = ds.features[ds.train_idx].mean(axis=0)
    sd = ds.features[ds.train_idx].std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return replace(ds, features=(ds.features - mu) / sd)
