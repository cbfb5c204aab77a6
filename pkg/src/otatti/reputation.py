"""Per-client reputation counts and the median/MAD participation filter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import OtaTtiError


@dataclass
class ReputationLedger:
    num_clients: int
    warm_up: int = 10
    rs: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.rs is None:
            self.rs = np.zeros(self.num_clients, dtype=np.int64)
        else:
            self.rs = np.asarray(self.rs, dtype=np.int64).copy()

    def as_dict(self) -> dict[int, int]:
        return {k: int(v) for k, v in enumerate(self.rs)}

    def copy(self) -> "ReputationLedger":
        return ReputationLedger(self.num_clients, self.warm_up, self.rs.copy())


def increment(ledger: ReputationLedger, participants: Iterable[int]) -> ReputationLedger:
    out = ledger.copy()
    for k in participants:
        if not 0 <= k < ledger.num_clients:
            raise OtaTtiError(f"unknown client id {k}")
        out.rs[k] += 1
    return out


def median_and_mad(values) -> tuple[float, float]:
    """Median and raw (unscaled) median absolute deviation."""
    v = np.asarray(values, dtype=np.float64)
    med = float(np.median(v))
    return med, float(np.median(np.abs(v - med)))


def mad_filter(ledger: ReputationLedger, candidates: Iterable[int], round: int) -> set[int]:
    """Keep candidates with ``RS >= median - MAD`` over all clients once past warm-up."""
    candidates = set(candidates)
    if round <= ledger.warm_up:
        return candidates
    med, mad = median_and_mad(ledger.rs)
    threshold = med - mad
    return {k for k in candidates if ledger.rs[k] >= threshold}
