"""Client-side indicators, their [0, 1] transforms, trust scores and tiering."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, DefenseSetupError, ShapeError

SIMPLEX_TOL = 1e-9


class Tier(str, enum.Enum):
    TRUSTED = "trusted"
    SUSPICIOUS = "suspicious"
    MALICIOUS = "malicious"


@dataclass(frozen=True)
class IndicatorVector:
    tda: float
    rel_l2: float
    spikiness: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tda, self.rel_l2, self.spikiness])


@dataclass(frozen=True)
class TransformParams:
    r0: float = 0.0
    alpha_steep: float = 1.5
    s0: float = 0.3
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.r0 < 0 or self.s0 < 0 or self.s0 >= 1:
            raise ConfigurationError("need r0 >= 0 and 0 <= s0 < 1")
        if self.alpha_steep <= 0 or self.gamma <= 0:
            raise ConfigurationError("alpha_steep and gamma must be positive")


@dataclass(frozen=True)
class TierSpec:
    mode: str = "proportion"
    p_trusted: float = 0.5
    p_suspicious: float = 0.3
    p_malicious: float = 0.2
    tau_high: float = 0.8
    tau_low: float = 0.5

    def __post_init__(self) -> None:
        if self.mode == "proportion":
            ps = (self.p_trusted, self.p_suspicious, self.p_malicious)
            if min(ps) < 0 or abs(sum(ps) - 1.0) > SIMPLEX_TOL:
                raise ConfigurationError(
                    f"tiering fractions (p_trusted, p_suspicious, p_malicious)={ps} must be "
                    "nonnegative and sum to 1"
                )
        elif self.mode == "threshold":
            if not self.tau_high > self.tau_low:
                raise ConfigurationError("tau_high must exceed tau_low")
        else:
            raise ConfigurationError(f"unknown tiering mode {self.mode!r}")


@dataclass(frozen=True)
class TrustAssessment:
    client_id: int
    normalized: np.ndarray
    score: float
    tier: Tier | None = None


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")


def compute_tda(delta: np.ndarray, global_prev: np.ndarray) -> float:
    """Cosine between an update and the model it started from (0 if either is zero)."""
    delta = np.asarray(delta, dtype=np.float64)
    global_prev = np.asarray(global_prev, dtype=np.float64)
    _check_pair(delta, global_prev)
    nd = float(np.linalg.norm(delta))
    ng = float(np.linalg.norm(global_prev))
    if nd == 0.0 or ng == 0.0:
        return 0.0
    return float(np.clip(delta @ global_prev / (nd * ng), -1.0, 1.0))


def compute_rel_l2(delta: np.ndarray, global_prev: np.ndarray) -> float:
    delta = np.asarray(delta, dtype=np.float64)
    global_prev = np.asarray(global_prev, dtype=np.float64)
    _check_pair(delta, global_prev)
    ng = float(np.linalg.norm(global_prev))
    if ng == 0.0:
        raise DefenseSetupError("relative l2 norm is undefined for a zero global model")
    return float(np.linalg.norm(delta)) / ng


def top_count(size: int, fraction: float = 0.01) -> int:
    return max(1, math.ceil(fraction * size))


def compute_spikiness(delta: np.ndarray) -> float:
    """Share of squared energy in the top 1% of coordinates by magnitude."""
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    if delta.size == 0:
        return 0.0
    return float(kernels.top_energy_fraction(delta, top_count(delta.size)))


IndicatorFn = Callable[[np.ndarray, np.ndarray], float]

# extension point: modality-specific indicators register here with a transform
INDICATORS: dict[str, IndicatorFn] = {
    "tda": compute_tda,
    "rel_l2": compute_rel_l2,
    "spikiness": lambda delta, _prev: compute_spikiness(delta),
}


def compute_indicators(delta: np.ndarray, global_prev: np.ndarray) -> IndicatorVector:
    return IndicatorVector(
        tda=compute_tda(delta, global_prev),
        rel_l2=compute_rel_l2(delta, global_prev),
        spikiness=compute_spikiness(delta),
    )


def normalize_indicators(ind: IndicatorVector, params: TransformParams = TransformParams()) -> np.ndarray:
    phi_tda = (ind.tda + 1.0) / 2.0
    phi_l2 = 1.0 - math.tanh(params.alpha_steep * max(0.0, ind.rel_l2 - params.r0))
    phi_spike = 1.0 - max(0.0, ind.spikiness - params.s0) ** params.gamma
    return np.clip(np.array([phi_tda, phi_l2, phi_spike]), 0.0, 1.0)


def check_simplex(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or np.any(w < 0) or abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
        raise ConfigurationError(f"trust weights {w.tolist()} must be nonnegative and sum to 1")
    return w


def trust_score(normalized: Sequence[float], weights: Sequence[float]) -> float:
    w = check_simplex(weights)
    phi = np.asarray(normalized, dtype=np.float64)
    if phi.shape != w.shape:
        raise ShapeError("indicator and weight vectors differ in length")
    return float(np.clip(phi @ w, 0.0, 1.0))


def proportion_counts(k: int, spec: TierSpec) -> tuple[int, int, int]:
    # the 1e-9 guard keeps 0.3 * 20 from flooring to 5
    n_t = int(math.floor(spec.p_trusted * k + 1e-9))
    n_s = int(math.floor(spec.p_suspicious * k + 1e-9))
    n_s = min(n_s, k - n_t)
    return n_t, n_s, k - n_t - n_s


def tier_clients(scores: Mapping[int, float], spec: TierSpec) -> dict[int, Tier]:
    """Map client id -> tier from trust scores.

    Proportion mode ranks by descending score with lower client id first on
    ties; threshold mode uses ``TS >= tau_high`` / ``TS >= tau_low`` boundaries.
    """
    if spec.mode == "threshold":
        out = {}
        for cid, ts in scores.items():
            if ts >= spec.tau_high:
                out[cid] = Tier.TRUSTED
            elif ts >= spec.tau_low:
                out[cid] = Tier.SUSPICIOUS
            else:
                out[cid] = Tier.MALICIOUS
        return out
    if not scores:
        raise ConfigurationError("proportion tiering needs at least one client")
    ranked = sorted(scores, key=lambda cid: (-scores[cid], cid))
    n_t, n_s, _ = proportion_counts(len(ranked), spec)
    out = {}
    for pos, cid in enumerate(ranked):
        if pos < n_t:
            out[cid] = Tier.TRUSTED
        elif pos < n_t + n_s:
            out[cid] = Tier.SUSPICIOUS
        else:
            out[cid] = Tier.MALICIOUS
    return out


def assess_clients(
    deltas: Mapping[int, np.ndarray],
    global_prev: np.ndarray,
    weights: Sequence[float],
    params: TransformParams,
    spec: TierSpec,
) -> dict[int, TrustAssessment]:
    normalized = {cid: normalize_indicators(compute_indicators(d, global_prev), params) for cid, d in deltas.items()}
    scores = {cid: trust_score(phi, weights) for cid, phi in normalized.items()}
    tiers = tier_clients(scores, spec)
    return {cid: TrustAssessment(cid, normalized[cid], scores[cid], tiers[cid]) for cid in deltas}
