"""Synthetic classification data, Dirichlet label skew and trigger poisoning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigurationError("features and labels differ in length")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class TriggerSpec:
    coords: tuple[int, ...]
    offset: float
    target_label: int
    poison_rate: float = 0.5

    def __post_init__(self) -> None:
        if len(self.coords) == 0:
            raise ConfigurationError("trigger needs at least one coordinate")
        if not 0.0 < self.poison_rate <= 1.0:
            raise ConfigurationError("poison_rate must lie in (0, 1]")
        if self.target_label < 0:
            raise ConfigurationError("target_label must be a class id")

    def validate_for(self, width: int, num_classes: int | None = None) -> None:
        if min(self.coords) < 0 or max(self.coords) >= width:
            raise ConfigurationError(f"trigger coords {self.coords} outside feature width {width}")
        if num_classes is not None and self.target_label >= num_classes:
            raise ConfigurationError("target_label out of range")


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int
    dirichlet_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 2:
            raise ConfigurationError("need at least two clients")
        if not self.dirichlet_alpha > 0:
            raise ConfigurationError("dirichlet_alpha must be > 0")


def generate_dataset(
    num_classes: int,
    dim: int,
    per_class_count: int,
    cluster_spread: float,
    seed: int,
    *,
    mean_scale: float = 1.0,
) -> LabeledDataset:
    """Isotropic Gaussian blobs around ``mean_scale * e_c`` for each class ``c``."""
    if num_classes < 2:
        raise ConfigurationError("need at least two classes")
    if dim < num_classes:
        raise ConfigurationError(f"feature width {dim} < class count {num_classes}")
    if per_class_count < 1:
        raise ConfigurationError("per_class_count must be positive")
    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = mean_scale
    labels = np.repeat(np.arange(num_classes), per_class_count)
    noise = rng.standard_normal((labels.shape[0], dim))
    features = means[labels] + cluster_spread * noise
    return LabeledDataset(features, labels)


def dirichlet_shares(num_classes: int, spec: PartitionSpec, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet(alpha * 1_K) share vector per class, shape ``(C, K)``."""
    return rng.dirichlet(np.full(spec.num_clients, spec.dirichlet_alpha), size=num_classes)


def dirichlet_partition(dataset: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    if len(dataset) == 0:
        raise ConfigurationError("cannot partition an empty dataset")
    rng = np.random.default_rng(spec.seed)
    classes = np.unique(dataset.labels)
    shares = dirichlet_shares(len(classes), spec, rng)
    buckets: list[list[int]] = [[] for _ in range(spec.num_clients)]
    for c, share in zip(classes, shares):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        cuts = (np.cumsum(share)[:-1] * idx.shape[0]).astype(np.int64)
        for k, part in enumerate(np.split(idx, cuts)):
            buckets[k].extend(part.tolist())
    _repair_empty(buckets)
    return [dataset.subset(np.sort(np.asarray(b, dtype=np.int64))) for b in buckets]


def _repair_empty(buckets: list[list[int]]) -> None:
    for k in range(len(buckets)):
        if not buckets[k]:
            donor = max(range(len(buckets)), key=lambda j: (len(buckets[j]), -j))
            if len(buckets[donor]) < 2:
                raise ConfigurationError("not enough samples to give every client one")
            buckets[k].append(buckets[donor].pop())


def poison_dataset(dataset: LabeledDataset, trigger: TriggerSpec, seed: int) -> LabeledDataset:
    """Stamp the trigger on ``ceil(poison_rate * n)`` samples and relabel them."""
    n = len(dataset)
    if n == 0:
        raise ConfigurationError("cannot poison an empty dataset")
    trigger.validate_for(dataset.features.shape[1])
    # the guard keeps 0.3 * 10 from rounding up to 4
    count = max(1, math.ceil(trigger.poison_rate * n - 1e-9))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=min(count, n), replace=False)
    features = dataset.features.copy()
    labels = dataset.labels.copy()
    coords = np.asarray(trigger.coords)
    features[np.ix_(chosen, coords)] += trigger.offset
    labels[chosen] = trigger.target_label
    return LabeledDataset(features, labels)


def apply_trigger_for_eval(features: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    features = np.array(features, dtype=np.float64, copy=True)
    trigger.validate_for(features.shape[-1])
    features[..., list(trigger.coords)] += trigger.offset
    return features
