"""
WDBC ingestion, train-fitted standardization, seeded 80/20 resampling and
a synthetic dataset generator with a known relevant-feature set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import IngestionError, UsageError

_QUANTITIES = (
    "radius",
    "texture",
    "perimeter",
    "area",
    "smoothness",
    "compactness",
    "concavity",
    "concave points",
    "symmetry",
    "fractal dimension",
)
WDBC_FEATURE_NAMES = (
    tuple(f"mean {q}" for q in _QUANTITIES)
    + tuple(f"{q} error" for q in _QUANTITIES)
    + tuple(f"worst {q}" for q in _QUANTITIES)
)

DIAGNOSIS_LABELS = {"M": 1.0, "B": 0.0}


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    relevant_mask: np.ndarray | None = None  # ground truth, synthetic data only

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise UsageError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )
        if len(self.feature_names) != self.features.shape[1]:
            raise UsageError("one feature name per column is required")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "LabeledDataset":
        return replace(self, features=self.features[index], labels=self.labels[index])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    resample_count: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise UsageError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.resample_count < 1:
            raise UsageError("resample_count must be positive")


def bundled_wdbc_path() -> Path:
    """Path of the copy of UCI-WDBC shipped with the package."""
    return Path(str(resources.files("uainvase") / "_data" / "wdbc.csv"))


def _is_header(row) -> bool:
    try:
        float(row[2])
    except (ValueError, IndexError):
        return True
    return False


def load_wdbc(path=None) -> LabeledDataset:
    """Read a WDBC CSV: ``id, diagnosis, 30 features``; header optional.

    Diagnosis ``M`` maps to label 1 and ``B`` to 0. The id column is dropped
    and row order is kept. Without a header the canonical UCI feature names
    are used. Rows are numbered from 1 in error messages, counting the
    header line if there is one.
    """
    path = Path(path) if path is not None else bundled_wdbc_path()
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]

    names = WDBC_FEATURE_NAMES
    start = 0
    if rows and _is_header(rows[0]):
        header = [c.strip() for c in rows[0]]
        if len(header) != 32:
            raise IngestionError(f"expected 32 columns, found {len(header)}", row=1)
        names = tuple(header[2:])
        start = 1
    if len(rows) <= start:
        raise IngestionError(f"{path} contains no data rows")

    features, labels = [], []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != 32:
            raise IngestionError(f"expected 32 columns, found {len(row)}", row=lineno)
        diagnosis = row[1].strip()
        if diagnosis not in DIAGNOSIS_LABELS:
            raise IngestionError(f"invalid diagnosis {diagnosis!r}", row=lineno)
        try:
            values = [float(c) for c in row[2:]]
        except ValueError as exc:
            raise IngestionError(f"non-numeric feature ({exc})", row=lineno) from None
        if not np.all(np.isfinite(values)):
            raise IngestionError("missing or non-finite feature value", row=lineno)
        features.append(values)
        labels.append(DIAGNOSIS_LABELS[diagnosis])
    return LabeledDataset(np.array(features), np.array(labels), names)


def standardize(train: LabeledDataset, test: LabeledDataset):
    """Z-score both splits with statistics fitted on ``train`` only.

    Uses the population standard deviation. Constant training columns map to
    0 in both splits. Returns ``(train_std, test_std, means, stds)`` where a
    constant column reports ``std == 0``.
    """
    if train.n == 0:
        raise UsageError("cannot standardize with an empty training set")
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0)
    constant = stds == 0
    scale = np.where(constant, 1.0, stds)

    def apply(ds):
        z = (ds.features - means) / scale
        z[:, constant] = 0.0
        return replace(ds, features=z)

    return apply(train), apply(test), means, stds


def split_indices(n: int, spec: SplitSpec, index: int):
    """Train and test row indices for resample ``index``."""
    if not 0 <= index < spec.resample_count:
        raise UsageError(f"resample index {index} outside [0, {spec.resample_count})")
    rng = np.random.default_rng([spec.seed, index])
    perm = rng.permutation(n)
    n_train = int(round(spec.train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def resample(dataset: LabeledDataset, spec: SplitSpec, index: int):
    """Independent random train/test partition number ``index``."""
    train_idx, test_idx = split_indices(dataset.n, spec, index)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def dump_split_membership(n: int, spec: SplitSpec, path) -> None:
    """Write the row indices of every resample to a JSON audit file."""
    doc = {"n": n, "train_fraction": spec.train_fraction, "seed": spec.seed, "splits": []}
    for k in range(spec.resample_count):
        tr, te = split_indices(n, spec, k)
        doc["splits"].append({"index": k, "train": tr.tolist(), "test": te.tolist()})
    Path(path).write_text(json.dumps(doc))


def gen_synthetic(n, d, relevant_set, noise_std=0.0, seed=0) -> LabeledDataset:
    """Gaussian features; label is ``1[sum of relevant features + noise > 0]``.

    ``relevant_set`` holds 0-based column indices. The ground-truth mask is
    stored as ``relevant_mask``.
    """
    relevant = sorted(set(int(j) for j in relevant_set))
    if not relevant:
        raise UsageError("relevant_set must not be empty")
    if relevant[0] < 0 or relevant[-1] >= d:
        raise UsageError(f"relevant indices must lie in [0, {d})")
    if n < 1:
        raise UsageError("n must be at least 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    logit = x[:, relevant].sum(axis=1) + noise_std * rng.standard_normal(n)
    mask = np.zeros(d)
    mask[relevant] = 1.0
    return LabeledDataset(
        x,
        (logit > 0).astype(np.float64),
        tuple(f"x{j}" for j in range(d)),
        relevant_mask=mask,
    )
