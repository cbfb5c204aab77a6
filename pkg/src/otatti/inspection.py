"""Server-side layer-wise inspection of suspicious clients.

For every layer the suspects are described by nine gradient statistics,
split into two clusters by average-linkage agglomeration, and the cluster
that sits closer to the trusted reference is marked benign. A suspect is
accepted when the share of layers it passes reaches ``rho``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, InspectionUnavailableError, ShapeError
from .model import LayerSegment, slice_layers

FEATURE_NAMES = (
    "pos_count",
    "neg_count",
    "zero_count",
    "kurtosis",
    "skewness",
    "d_mean",
    "l1_dev",
    "l2_norm",
    "angle_sim",
)


@dataclass(frozen=True)
class LayerFeatureVector:
    pos_count: int
    neg_count: int
    zero_count: int
    kurtosis: float
    skewness: float
    d_mean: float
    l1_dev: float
    l2_norm: float
    angle_sim: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class ClusterStats:
    members: frozenset[int]
    d_mean: float
    sd_mean: float
    dev_mean: float
    rs_sum: float


@dataclass(frozen=True)
class InspectionVerdict:
    client_id: int
    layer_pass: tuple[bool, ...]
    benign_fraction: float
    accepted: bool


def trusted_reference(trusted_deltas: Sequence[np.ndarray], layer_map: Sequence[LayerSegment]) -> list[np.ndarray]:
    """Per-layer mean of the trusted clients' updates."""
    if len(trusted_deltas) == 0:
        raise InspectionUnavailableError("no trusted clients to form a reference")
    mean = np.mean(np.stack([np.asarray(d, dtype=np.float64) for d in trusted_deltas]), axis=0)
    return [s.copy() for s in slice_layers(mean, layer_map)]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def extract_features(
    candidate: np.ndarray, reference: np.ndarray, peers: Sequence[np.ndarray] = ()
) -> LayerFeatureVector:
    """Statistics of one candidate's layer slice.

    ``peers`` are the other candidates' slices at the same layer; ``d_mean``
    is 0 when there are none.
    """
    g = np.ascontiguousarray(candidate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if g.shape != ref.shape or any(np.shape(p) != g.shape for p in peers):
        raise ShapeError("all slices at a layer must share one length")
    pos, neg, zero, skew, kurt = kernels.shape_moments(g)
    d_mean = float(np.mean([np.linalg.norm(g - p) for p in peers])) if len(peers) else 0.0
    return LayerFeatureVector(
        pos_count=int(pos),
        neg_count=int(neg),
        zero_count=int(zero),
        kurtosis=float(kurt),
        skewness=float(skew),
        d_mean=d_mean,
        l1_dev=float(np.abs(g - ref).sum()),
        l2_norm=float(np.linalg.norm(g)),
        angle_sim=_cosine(g, ref),
    )


def layer_feature_matrix(slices: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Feature rows for all candidates at one layer (``slices`` is ``(n, len)``)."""
    slices = np.ascontiguousarray(slices, dtype=np.float64)
    n = slices.shape[0]
    dist = kernels.pairwise_distances(slices)
    out = np.empty((n, len(FEATURE_NAMES)))
    for i in range(n):
        pos, neg, zero, skew, kurt = kernels.shape_moments(slices[i])
        g = slices[i]
        out[i] = (
            pos,
            neg,
            zero,
            kurt,
            skew,
            dist[i].sum() / (n - 1) if n > 1 else 0.0,
            np.abs(g - reference).sum(),
            np.linalg.norm(g),
            _cosine(g, reference),
        )
    return out


SPREAD_REL_TOL = 1e-9


def standardize_columns(features: np.ndarray) -> np.ndarray:
    """Z-score each column; columns with no spread become zeros.

    Spread at rounding level relative to the column's magnitude counts as none,
    so z-scoring cannot blow float noise up into a unit-variance feature.
    """
    features = np.asarray(features, dtype=np.float64)
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    out = np.zeros_like(features)
    live = sd > SPREAD_REL_TOL * np.abs(features).max(axis=0, initial=0.0)
    out[:, live] = (features[:, live] - mu[live]) / sd[live]
    return out


def ahc_two(feature_matrix: np.ndarray) -> np.ndarray:
    """Two-cluster labels (0/1) from average-linkage AHC on z-scored features."""
    x = np.ascontiguousarray(standardize_columns(feature_matrix))
    if x.shape[0] < 2:
        raise ConfigurationError("clustering needs at least two candidates")
    return np.asarray(kernels.average_linkage_two(kernels.pairwise_distances(x)), dtype=np.int64)


def cluster_stats(
    members: Sequence[int],
    slices: Mapping[int, np.ndarray],
    reference: np.ndarray,
    reputation: Mapping[int, float],
) -> ClusterStats:
    members = list(members)
    if not members:
        raise ConfigurationError("cluster must be nonempty")
    block = np.stack([np.asarray(slices[m], dtype=np.float64) for m in members])
    if len(members) > 1:
        dist = kernels.pairwise_distances(np.ascontiguousarray(block))
        iu = np.triu_indices(len(members), k=1)
        d_mean = float(dist[iu].mean())
        sd_mean = float(block.std(axis=0).mean())
    else:
        d_mean = sd_mean = 0.0
    dev_mean = float(np.abs(block - reference).mean(axis=1).mean())
    rs_sum = float(sum(reputation.get(m, 0) for m in members))
    return ClusterStats(frozenset(members), d_mean, sd_mean, dev_mean, rs_sum)


def _rule_prefers(a: ClusterStats, b: ClusterStats) -> bool:
    rule_i = a.dev_mean < b.dev_mean and a.rs_sum >= b.rs_sum
    rule_ii = a.d_mean < b.d_mean and a.dev_mean < b.dev_mean and a.rs_sum >= b.rs_sum
    return rule_i or rule_ii


def select_benign(a: ClusterStats, b: ClusterStats) -> int:
    """Return 0 if cluster ``a`` is the benign one, else 1."""
    if _rule_prefers(a, b):
        return 0
    if _rule_prefers(b, a):
        return 1
    # neither rule fires: reference alignment first, then reputation, then lowest id
    if a.dev_mean != b.dev_mean:
        return 0 if a.dev_mean < b.dev_mean else 1
    if a.rs_sum != b.rs_sum:
        return 0 if a.rs_sum > b.rs_sum else 1
    return 0 if min(a.members) < min(b.members) else 1


def verdict(client_id: int, layer_pass: Sequence[bool], rho: float) -> InspectionVerdict:
    if len(layer_pass) == 0:
        raise ConfigurationError("need at least one layer vote")
    if not 0.0 < rho < 1.0:
        raise ConfigurationError("rho must lie in (0, 1)")
    flags = tuple(bool(p) for p in layer_pass)
    frac = sum(flags) / len(flags)
    return InspectionVerdict(client_id, flags, frac, frac >= rho)


def inspect_layer(
    suspect_ids: Sequence[int],
    slices: Mapping[int, np.ndarray],
    reference: np.ndarray,
    reputation: Mapping[int, float],
) -> dict[int, bool]:
    """Pass/fail flags for every suspect at one layer."""
    ids = list(suspect_ids)
    block = np.stack([slices[c] for c in ids])
    labels = ahc_two(layer_feature_matrix(block, reference))
    groups = [[c for c, lab in zip(ids, labels) if lab == g] for g in (0, 1)]
    stats = [cluster_stats(grp, slices, reference, reputation) for grp in groups]
    benign = select_benign(stats[0], stats[1])
    return {c: c in stats[benign].members for c in ids}


def inspect_suspects(
    suspects: Mapping[int, np.ndarray],
    reference: np.ndarray,
    layer_map: Sequence[LayerSegment],
    reputation: Mapping[int, float],
    rho: float,
    trusted_layer_l1: Sequence[Sequence[float]] | None = None,
) -> dict[int, InspectionVerdict]:
    """Layer-wise verdicts for all suspects.

    ``reference`` is the flat trusted aggregate. With a single suspect the
    clustering step is undefined; that suspect passes a layer when its l1
    deviation is no larger than the median of ``trusted_layer_l1`` (one row
    of per-layer deviations per trusted client) at that layer.
    """
    if not suspects:
        return {}
    ids = sorted(suspects)
    ref_slices = slice_layers(reference, layer_map)
    per_client = {c: slice_layers(suspects[c], layer_map) for c in ids}
    n_layers = len(layer_map)
    flags: dict[int, list[bool]] = {c: [] for c in ids}
    if len(ids) == 1:
        if trusted_layer_l1 is None or len(trusted_layer_l1) == 0:
            raise InspectionUnavailableError("single suspect needs trusted deviation reports")
        med = np.median(np.asarray(trusted_layer_l1, dtype=np.float64), axis=0)
        c = ids[0]
        for layer in range(n_layers):
            dev = float(np.abs(per_client[c][layer] - ref_slices[layer]).sum())
            flags[c].append(dev <= med[layer])
    else:
        for layer in range(n_layers):
            layer_slices = {c: per_client[c][layer] for c in ids}
            passed = inspect_layer(ids, layer_slices, ref_slices[layer], reputation)
            for c in ids:
                flags[c].append(passed[c])
    return {c: verdict(c, flags[c], rho) for c in ids}
