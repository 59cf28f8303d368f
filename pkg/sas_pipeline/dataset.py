"""In-memory dataset: features X, labels Y (with an unknown sentinel), splits."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, OverlappingSplitsError, UnknownClassError

UNLABELED = -1
SPLIT_NAMES = ("train", "val", "test")

__all__ = ["UNLABELED", "SPLIT_NAMES", "Splits", "Dataset"]


def _index_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Splits:
    train: np.ndarray = field(default_factory=lambda: _index_array([]))
    val:   np.ndarray = field(default_factory=lambda: _index_array([]))
    test:  np.ndarray = field(default_factory=lambda: _index_array([]))

    def __post_init__(self):
        for name in SPLIT_NAMES:
            object.__setattr__(self, name, _index_array(getattr(self, name)))

    def items(self):
        return [(name, getattr(self, name)) for name in SPLIT_NAMES]


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    features    : float64[N, D]
    labels      : int64[N], ``UNLABELED`` where the class is unknown
    num_classes : C
    splits      : train / val / test node indices, pairwise disjoint
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: Splits
    name: str = "dataset"

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x.setflags(write=False)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def with_features(self, features: np.ndarray) -> "Dataset":
        """Same labels and splits over another representation (e.g. Ŝ^K X)."""
        return replace(self, features=features)

    def validate(self) -> "Dataset":
        """Check every invariant eagerly; raise an **InputError** subclass on the first failure."""
        n = self.num_nodes
        if self.labels.size != n:
            raise InputError(f"{self.name}: {self.labels.size} labels for {n} nodes")
        if self.num_classes < 1:
            raise InputError(f"{self.name}: num_classes must be ≥ 1")
        if not np.isfinite(self.features).all():
            raise InputError(f"{self.name}: features contain NaN or Inf")

        bad = np.flatnonzero((self.labels < UNLABELED) | (self.labels >= self.num_classes))
        if bad.size:
            i = int(bad[0])
            raise UnknownClassError(
                f"{self.name}: node {i} has class {int(self.labels[i])} outside [0, {self.num_classes})"
            )

        seen: dict[int, str] = {}
        for split, idx in self.splits.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InputError(f"{self.name}: {split} split holds an index outside [0, {n})")
            if np.unique(idx).size != idx.size:
                raise OverlappingSplitsError(f"{self.name}: {split} split lists a node twice")
            for node in idx.tolist():
                if node in seen:
                    raise OverlappingSplitsError(
                        f"{self.name}: node {node} is in both {seen[node]} and {split}"
                    )
                seen[node] = split

        train = self.splits.train
        if train.size and (self.labels[train] == UNLABELED).any():
            node = int(train[np.flatnonzero(self.labels[train] == UNLABELED)[0]])
            raise InputError(f"{self.name}: training node {node} has no label")
        return self
