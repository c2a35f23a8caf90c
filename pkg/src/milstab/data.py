"""Bags, datasets, CSV I/O, synthetic MIL data and bag-level resampling."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_bags


class DatasetParseError(ValueError):
    """Raised when a dataset file cannot be parsed.

    ``line`` is the 1-based line number of the offending row (0 when the
    problem is not tied to one line, e.g. an empty file).
    """

    def __init__(self, message: str, line: int = 0):
        self.line = line
        prefix = f"line {line}: " if line else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Bag:
    id: str
    instances: np.ndarray
    label: int

    def __post_init__(self):
        X = np.asarray(self.instances, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"bag {self.id!r}: instances must be a non-empty 2-D array")
        if not np.all(np.isfinite(X)):
            raise ValueError(f"bag {self.id!r}: non-finite feature value")
        if self.label not in (0, 1):
            raise ValueError(f"bag {self.id!r}: label must be 0 or 1, got {self.label!r}")
        X.setflags(write=False)
        object.__setattr__(self, "instances", X)
        object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return self.instances.shape[0]


@dataclass(frozen=True)
class Dataset:
    bags: tuple
    name: str = "dataset"
    d: int = field(init=False)

    def __post_init__(self):
        bags = tuple(self.bags)
        if not bags:
            raise ValueError("dataset has no bags")
        dims = {b.instances.shape[1] for b in bags}
        if len(dims) != 1:
            raise ValueError(f"bags disagree on dimensionality: {sorted(dims)}")
        ids = [b.id for b in bags]
        if len(set(ids)) != len(ids):
            raise ValueError("bag ids are not unique")
        object.__setattr__(self, "bags", bags)
        object.__setattr__(self, "d", dims.pop())

    def __len__(self):
        return len(self.bags)

    @property
    def ids(self) -> list[str]:
        return [b.id for b in self.bags]

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bags], dtype=int)

    @property
    def instances(self) -> list[np.ndarray]:
        return [b.instances for b in self.bags]

    @property
    def n_instances(self) -> int:
        return sum(len(b) for b in self.bags)

    def subset(self, ids: Sequence[str], name: str | None = None) -> "Dataset":
        """Return the bags with the given ids, in the order of ``ids``."""
        index = {b.id: b for b in self.bags}
        missing = [i for i in ids if i not in index]
        if missing:
            raise KeyError(f"unknown bag ids: {missing[:5]}")
        return Dataset(tuple(index[i] for i in ids), name=name or self.name)

    def with_instances(self, instances: Sequence[np.ndarray]) -> "Dataset":
        """Copy of this dataset with every bag's feature matrix replaced."""
        bags = tuple(Bag(b.id, X, b.label) for b, X in zip(self.bags, instances))
        return Dataset(bags, name=self.name)

    def summary(self) -> dict:
        sizes = [len(b) for b in self.bags]
        labels = self.labels
        return {
            "name": self.name,
            "n_bags": len(self.bags),
            "n_positive_bags": int(labels.sum()),
            "n_negative_bags": int(len(labels) - labels.sum()),
            "n_instances": self.n_instances,
            "min_instances_per_bag": min(sizes),
            "max_instances_per_bag": max(sizes),
            "d": self.d,
        }


def load_dataset(path, format: str = "csv", name: str | None = None) -> Dataset:
    """Read a dataset in the ``bag_id,label,f1,...,fd`` CSV format.

    Rows are grouped by ``bag_id``; bags appear in order of first occurrence
    and rows keep their file order within a bag.
    """
    if format != "csv":
        raise ValueError(f"unsupported dataset format {format!r}")
    path = Path(path)
    rows: dict[str, list] = {}
    labels: dict[str, int] = {}
    n_cols = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetParseError("empty file")
        if len(header) < 3 or [h.strip() for h in header[:2]] != ["bag_id", "label"]:
            raise DatasetParseError("header must start with 'bag_id,label' and list >= 1 feature", 1)
        n_cols = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_cols:
                raise DatasetParseError(
                    f"expected {n_cols} columns (d={n_cols - 2}), found {len(row)}", lineno)
            bag_id = row[0].strip()
            if not bag_id:
                raise DatasetParseError("empty bag_id", lineno)
            label_text = row[1].strip()
            if label_text not in ("0", "1"):
                raise DatasetParseError(f"label must be 0 or 1, got {label_text!r}", lineno)
            label = int(label_text)
            try:
                x = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise DatasetParseError(f"malformed feature value ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in x):
                raise DatasetParseError("non-finite feature value", lineno)
            if bag_id in labels and labels[bag_id] != label:
                raise DatasetParseError(
                    f"bag {bag_id!r} has conflicting labels {labels[bag_id]} and {label}", lineno)
            labels[bag_id] = label
            rows.setdefault(bag_id, []).append(x)
    if not rows:
        raise DatasetParseError("file contains a header but no rows")
    bags = tuple(Bag(k, np.array(v), labels[k]) for k, v in rows.items())
    return Dataset(bags, name=name or path.stem)


def write_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the CSV format read by :func:`load_dataset`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bag_id", "label"] + [f"f{j + 1}" for j in range(dataset.d)])
        for bag in dataset.bags:
            for x in bag.instances:
                writer.writerow([bag.id, bag.label] + [repr(float(v)) for v in x])


def load_musk(path, name: str | None = None) -> Dataset:
    """Read a Musk file in the public ``molecule,conformation,f1..f166,class`` form.

    The class column may carry a trailing period (``1.``), as in the UCI files.
    """
    path = Path(path)
    rows: dict[str, list] = {}
    labels: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                label = int(float(parts[-1].rstrip(".")))
                x = [float(c) for c in parts[2:-1]]
            except (ValueError, IndexError):
                raise DatasetParseError("malformed Musk row", lineno) from None
            rows.setdefault(parts[0], []).append(x)
            labels[parts[0]] = label
    bags = tuple(Bag(k, np.array(v), labels[k]) for k, v in rows.items())
    return Dataset(bags, name=name or path.stem)


def load_musk1() -> Dataset:
    """The bundled Musk 1 benchmark (92 bags, 476 instances, d=166)."""
    return load_dataset(Path(__file__).parent / "datasets" / "musk1.csv", name="musk1")


# -- synthetic data -------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_pos_bags: int = 20
    n_neg_bags: int = 20
    inst_per_bag: int = 10
    d: int = 5
    witness_fraction: float = 0.2
    cluster_separation: float = 6.0
    seed: int = 0

    def __post_init__(self):
        for key in ("n_pos_bags", "n_neg_bags", "inst_per_bag", "d"):
            if int(getattr(self, key)) < 1:
                raise ValueError(f"{key} must be >= 1")
        if not 0 < self.witness_fraction <= 1:
            raise ValueError("witness_fraction must lie in (0, 1]")
        if not self.cluster_separation > 0:
            raise ValueError("cluster_separation must be > 0")

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        return cls.from_dict(cfg)

    @classmethod
    def from_dict(cls, cfg: dict) -> "SynthConfig":
        expected = set(cls.__dataclass_fields__)
        if set(cfg) != expected:
            extra, missing = set(cfg) - expected, expected - set(cfg)
            raise ValueError(f"synthetic config fields mismatch: "
                             f"unexpected {sorted(extra)}, missing {sorted(missing)}")
        return cls(**cfg)


def generate_synthetic(cfg: SynthConfig) -> tuple[Dataset, dict[str, np.ndarray]]:
    """Draw a Gaussian MIL dataset satisfying the standard MIL assumption.

    Background instances come from N(0, I). A positive bag holds
    ``ceil(witness_fraction * inst_per_bag)`` witnesses drawn from the
    background shifted by ``cluster_separation`` along the first axis.

    Returns the dataset and a mapping from bag id to the true instance labels.
    The latter is for checking results only; no classifier should see it.
    """
    rng = np.random.default_rng(cfg.seed)
    n_wit = math.ceil(cfg.witness_fraction * cfg.inst_per_bag - 1e-12)
    shift = np.zeros(cfg.d)
    shift[0] = cfg.cluster_separation
    bags, truth = [], {}
    layout = [1] * cfg.n_pos_bags + [0] * cfg.n_neg_bags
    for i, label in enumerate(layout):
        X = rng.standard_normal((cfg.inst_per_bag, cfg.d))
        z = np.zeros(cfg.inst_per_bag, dtype=int)
        if label:
            X[:n_wit] += shift
            z[:n_wit] = 1
        bag_id = f"{'pos' if label else 'neg'}{i:04d}"
        bags.append(Bag(bag_id, X, label))
        truth[bag_id] = z
    return Dataset(tuple(bags), name="synthetic"), truth


# -- splitting and resampling --------------------------------------------

def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from a tuple of integers (blake2b digest)."""
    text = ":".join(str(int(p)) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class SplitSpec:
    train_bag_ids: tuple
    test_bag_ids: tuple
    seed: int = 0

    def __post_init__(self):
        train, test = tuple(self.train_bag_ids), tuple(self.test_bag_ids)
        if not train or not test:
            raise ValueError("train and test splits must both be non-empty")
        if set(train) & set(test):
            raise ValueError("train and test splits overlap")
        object.__setattr__(self, "train_bag_ids", train)
        object.__setattr__(self, "test_bag_ids", test)


def random_split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0) -> SplitSpec:
    """Stratified random split by bag.

    Each class contributes ``round(test_fraction * n_class)`` bags (at least
    one, and never all of them) to the test side.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    ids = np.array(dataset.ids, dtype=object)
    labels = dataset.labels
    test = set()
    for cls in (0, 1):
        members = ids[labels == cls]
        if len(members) < 2:
            raise ValueError(f"class {cls} needs at least 2 bags to split")
        k = min(max(1, round(test_fraction * len(members))), len(members) - 1)
        test.update(rng.choice(members, size=k, replace=False).tolist())
    train_ids = tuple(i for i in dataset.ids if i not in test)
    test_ids = tuple(i for i in dataset.ids if i in test)
    return SplitSpec(train_ids, test_ids, seed)


def resample_train_bags(train_ids: Sequence[str], labels: Sequence[int], fraction: float,
                        seed: int, max_attempts: int = 1000) -> list[str]:
    """Draw ``floor(fraction * n)`` training bags without replacement.

    ``labels`` are the bag labels aligned with ``train_ids``. When a draw
    loses a class, it is redrawn with the next derived sub-seed
    (``derive_seed(seed, attempt)``). The subset keeps the order of
    ``train_ids``.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    train_ids = list(train_ids)
    labels = np.asarray(labels, dtype=int)
    if not train_ids:
        raise ValueError("train set is empty")
    if len(labels) != len(train_ids):
        raise ValueError("labels and train_ids differ in length")
    n = len(train_ids)
    k = math.floor(fraction * n + 1e-9)
    both = len(set(labels.tolist())) == 2
    if k < (2 if both else 1):
        raise ValueError(f"fraction {fraction} of {n} bags leaves too few bags")
    if k == n:
        return train_ids
    sub_seed = seed
    for attempt in range(max_attempts):
        rng = np.random.default_rng(sub_seed)
        picked = np.sort(rng.choice(n, size=k, replace=False))
        if not both or len(set(labels[picked].tolist())) == 2:
            return [train_ids[i] for i in picked]
        sub_seed = derive_seed(seed, attempt + 1)
    raise RuntimeError("could not draw a class-preserving resample")


# -- feature standardization ---------------------------------------------

class BagStandardizer(BaseEstimator, TransformerMixin):
    """Z-score features using statistics pooled over all training instances.

    Constant features keep unit scale so they map to zero.
    """

    def __init__(self, with_mean=True, with_std=True):
        self.with_mean = with_mean
        self.with_std = with_std

    def fit(self, bags, y=None):
        bags = check_bags(bags)
        X = np.vstack(bags)
        self.mean_ = X.mean(axis=0) if self.with_mean else np.zeros(X.shape[1])
        scale = X.std(axis=0) if self.with_std else np.ones(X.shape[1])
        scale[scale < 1e-12] = 1.0
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, bags):
        check_is_fitted(self, "mean_")
        bags = check_bags(bags, n_features=self.n_features_in_)
        return [(X - self.mean_) / self.scale_ for X in bags]
