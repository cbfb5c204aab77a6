"""Malicious client behaviours.

All four attacks train on trigger-poisoned local data; they differ in how the
local objective or the outgoing update is shaped to look benign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import FlatModel, LossSpec, TrainConfig, UpdateDelta, local_train

ATTACK_KINDS = ("bounded_scaling", "euclidean_constrained", "cosine_constrained", "neurotoxin")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    alpha_mix: float = 0.5
    scale_factor: float = 5.0
    # ``None`` -> set per round by the simulator from benign update norms
    norm_bound: float | None = None
    norm_bound_ratio: float = 1.5
    mask_top_fraction: float = 0.95

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ConfigurationError("alpha_mix must lie in [0, 1]")
        if self.kind == "bounded_scaling" and not self.scale_factor > 1.0:
            raise ConfigurationError("scale_factor must exceed 1")
        if self.norm_bound is not None and not self.norm_bound > 0:
            raise ConfigurationError("norm_bound must be positive")
        if not self.norm_bound_ratio > 0:
            raise ConfigurationError("norm_bound_ratio must be positive")
        if self.kind == "neurotoxin" and not 0.0 < self.mask_top_fraction < 1.0:
            raise ConfigurationError("mask_top_fraction must lie in (0, 1)")


def clip_norm(v: np.ndarray, bound: float) -> np.ndarray:
    """Rescale ``v`` onto the l2 ball of radius ``bound`` (no-op when inside)."""
    if not bound > 0:
        raise ConfigurationError("bound must be positive")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= bound:
        return v.copy()
    return v * (bound / norm)


def neurotoxin_mask(hint: np.ndarray, top_fraction: float) -> np.ndarray:
    """Boolean keep-mask that drops the ``top_fraction`` largest ``|hint|`` coordinates."""
    hint = np.abs(np.asarray(hint, dtype=np.float64))
    n_drop = int(round(top_fraction * hint.size))
    keep = np.ones(hint.size, dtype=bool)
    if n_drop > 0:
        # stable sort so equal magnitudes resolve by index
        order = np.argsort(-hint, kind="stable")
        keep[order[:n_drop]] = False
    return keep


def attack_local_round(
    model_prev: FlatModel,
    poisoned_dataset,
    spec: AttackSpec,
    train_config: TrainConfig,
    benign_direction_hint: np.ndarray | None = None,
    *,
    norm_bound: float | None = None,
    client_id: int = -1,
    round: int = 0,
) -> UpdateDelta:
    """One round of malicious local training; returns the update it uploads.

    ``norm_bound`` overrides ``spec.norm_bound`` (the simulator supplies a
    per-round value derived from benign norms).
    """
    bound = norm_bound if norm_bound is not None else spec.norm_bound
    anchor = model_prev.params
    if spec.kind == "bounded_scaling":
        _, raw = local_train(model_prev, poisoned_dataset, train_config, client_id=client_id, round=round)
        scaled = spec.scale_factor * raw.delta
        if bound is None:
            bound = float(np.linalg.norm(raw.delta))
        return UpdateDelta(clip_norm(scaled, bound) if bound > 0 else scaled, client_id, round)
    if spec.kind in ("euclidean_constrained", "cosine_constrained"):
        kind = "euclidean" if spec.kind == "euclidean_constrained" else "cosine"
        loss = LossSpec(kind, spec.alpha_mix, anchor)
        _, upd = local_train(model_prev, poisoned_dataset, train_config, loss, client_id=client_id, round=round)
        return upd
    if benign_direction_hint is None:
        raise ConfigurationError("neurotoxin needs a benign direction hint")
    magnitude = np.abs(np.asarray(benign_direction_hint, dtype=np.float64))
    # a flat hint (the round-1 all-ones default) says nothing about benign usage: no mask
    mask = None if np.ptp(magnitude) == 0 else neurotoxin_mask(magnitude, spec.mask_top_fraction)
    _, upd = local_train(
        model_prev, poisoned_dataset, train_config, grad_mask=mask, client_id=client_id, round=round
    )
    return upd
