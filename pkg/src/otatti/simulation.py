"""Round loop of the over-the-air federated simulation and its defenses."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .attacks import AttackSpec, attack_local_round
from .data import (
    LabeledDataset,
    PartitionSpec,
    TriggerSpec,
    apply_trigger_for_eval,
    dirichlet_partition,
    generate_dataset,
    poison_dataset,
)
from .errors import AggregationError, ConfigurationError
from .inspection import InspectionVerdict, inspect_suspects
from .model import FlatModel, ModelDims, TrainConfig, init_model, local_train, slice_layers, whole_model_map
from .reputation import ReputationLedger, increment, mad_filter
from .trust import (
    Tier,
    TierSpec,
    TransformParams,
    check_simplex,
    compute_indicators,
    normalize_indicators,
    tier_clients,
    trust_score,
)

log = logging.getLogger(__name__)

DEFENSE_MODES = ("tti", "tda_only", "l2_only", "spikiness_only", "model_wise", "bev", "none")
SINGLE_INDICATOR = {"tda_only": 0, "l2_only": 1, "spikiness_only": 2}
BEV_WEIGHTS = {Tier.TRUSTED: 1.0, Tier.SUSPICIOUS: 0.1, Tier.MALICIOUS: 0.0}


@dataclass(frozen=True)
class DataConfig:
    num_classes: int = 10
    input_dim: int = 32
    hidden: tuple[int, ...] = (64, 32)
    per_class_train: int = 200
    per_class_test: int = 100
    spread: float = 0.25
    dirichlet_alpha: float = 0.5


def default_trigger() -> TriggerSpec:
    return TriggerSpec(coords=(28, 29, 30, 31), offset=2.0, target_label=0, poison_rate=0.5)


@dataclass(frozen=True)
class ScenarioConfig:
    num_clients: int = 20
    num_malicious: int = 6
    malicious_ids: tuple[int, ...] | None = None
    attack: AttackSpec | None = None
    defense_mode: str = "tti"
    tier: TierSpec = TierSpec()
    transform: TransformParams = TransformParams()
    trust_weights: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    rho: float = 0.6
    rounds: int = 60
    warm_up: int = 10
    ota_noise_std: float = 0.0
    rs_only_after_round: int | None = None
    seed: int = 1
    data: DataConfig = DataConfig()
    trigger: TriggerSpec = field(default_factory=default_trigger)
    train: TrainConfig = TrainConfig()

    def __post_init__(self) -> None:
        if self.defense_mode not in DEFENSE_MODES:
            raise ConfigurationError(f"defense_mode must be one of {DEFENSE_MODES}, got {self.defense_mode!r}")
        if self.num_clients < 2:
            raise ConfigurationError("num_clients must be >= 2")
        if self.malicious_ids is not None:
            if len(set(self.malicious_ids)) != len(self.malicious_ids):
                raise ConfigurationError("malicious_ids must be distinct")
            if any(not 0 <= m < self.num_clients for m in self.malicious_ids):
                raise ConfigurationError("malicious_ids out of range")
        if not 0 <= self.n_malicious < self.num_clients:
            raise ConfigurationError("num_malicious must satisfy 0 <= M < K")
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError("rho must lie in (0, 1)")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        if not 0 <= self.warm_up < self.rounds:
            raise ConfigurationError("warm_up must satisfy 0 <= warm_up < rounds")
        if self.ota_noise_std < 0:
            raise ConfigurationError("ota_noise_std must be >= 0")
        check_simplex(self.trust_weights)
        self.trigger.validate_for(self.data.input_dim, self.data.num_classes)

    @property
    def n_malicious(self) -> int:
        if self.malicious_ids is not None:
            return len(self.malicious_ids)
        return self.num_malicious

    @property
    def attacked(self) -> bool:
        return self.attack is not None and self.n_malicious > 0


@dataclass
class RoundRecord:
    round: int
    mta: float
    asr: float
    tiers: dict[int, str]
    verdicts: dict[int, bool]
    final_participants: tuple[int, ...]
    rs_snapshot: dict[int, int]
    n_rs_filtered: int = 0
    stalled: bool = False

    def tier_counts(self) -> tuple[int, int, int]:
        vals = list(self.tiers.values())
        return (vals.count(Tier.TRUSTED.value), vals.count(Tier.SUSPICIOUS.value), vals.count(Tier.MALICIOUS.value))


class Uplink:
    """The server's only view of client updates.

    Trusted clients transmit over the air, so the server receives their
    superposed mean and never an individual update. Individual uploads are
    granted only to clients the server has opened a dedicated link for; any
    other individual read trips ``tripped``.
    """

    def __init__(self, deltas: dict[int, np.ndarray]):
        self._deltas = deltas
        self._granted: set[int] = set()
        self.tripped = False

    def grant_individual(self, ids) -> None:
        self._granted.update(ids)

    def upload(self, cid: int) -> np.ndarray:
        if cid not in self._granted:
            self.tripped = True
            log.error("OTA opacity violated: individual read of client %d", cid)
        return self._deltas[cid]

    def superpose(self, ids, noise_std: float, rng: np.random.Generator, weights=None) -> np.ndarray:
        return ota_aggregate([self._deltas[c] for c in sorted(ids)], noise_std, rng, weights=weights)

    def layer_l1_reports(self, ids, reference: np.ndarray, layer_map) -> list[list[float]]:
        """Per-layer l1 distance to ``reference`` computed client-side (scalars only)."""
        ref = slice_layers(reference, layer_map)
        return [
            [float(np.abs(s - r).sum()) for s, r in zip(slice_layers(self._deltas[c], layer_map), ref)]
            for c in sorted(ids)
        ]


def ota_aggregate(
    deltas: Sequence[np.ndarray],
    noise_std: float = 0.0,
    rng: np.random.Generator | int | None = None,
    *,
    weights: Sequence[float] | None = None,
) -> np.ndarray:
    """Idealised over-the-air mean, with optional per-coordinate Gaussian noise.

    With ``weights`` the channel carries ``sum(w_k * delta_k) / sum(w_k)``.
    """
    if len(deltas) == 0:
        raise AggregationError("nothing to aggregate")
    stack = np.stack([np.asarray(d, dtype=np.float64) for d in deltas])
    if weights is None:
        agg = stack.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.sum() <= 0:
            raise AggregationError("aggregation weights sum to zero")
        agg = (w[:, None] * stack).sum(axis=0) / w.sum()
    if noise_std > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        agg = agg + gen.normal(0.0, noise_std, size=agg.shape)
    return agg


def evaluate(model: FlatModel, clean_test: LabeledDataset, trigger: TriggerSpec) -> tuple[float, float]:
    """Clean accuracy and the share of triggered non-target samples sent to the target."""
    if len(clean_test) == 0:
        raise ConfigurationError("test set is empty")
    mta = float(np.mean(model.predict(clean_test.features) == clean_test.labels))
    keep = clean_test.labels != trigger.target_label
    if not np.any(keep):
        return mta, 0.0
    triggered = apply_trigger_for_eval(clean_test.features[keep], trigger)
    asr = float(np.mean(model.predict(triggered) == trigger.target_label))
    return mta, asr


@dataclass
class Environment:
    """Everything derived once per scenario: data, client roles, initial model."""

    model: FlatModel
    client_data: list[LabeledDataset]
    test: LabeledDataset
    malicious: frozenset[int]


def build_environment(scenario: ScenarioConfig) -> Environment:
    dc = scenario.data
    seeds = np.random.SeedSequence(scenario.seed).spawn(5)
    ints = [int(s.generate_state(1)[0]) for s in seeds]
    train = generate_dataset(dc.num_classes, dc.input_dim, dc.per_class_train, dc.spread, ints[0])
    test = generate_dataset(dc.num_classes, dc.input_dim, dc.per_class_test, dc.spread, ints[1])
    parts = dirichlet_partition(train, PartitionSpec(scenario.num_clients, dc.dirichlet_alpha, ints[2]))
    if scenario.malicious_ids is not None:
        malicious = frozenset(scenario.malicious_ids)
    elif scenario.attacked:
        rng = np.random.default_rng(ints[3])
        malicious = frozenset(int(m) for m in rng.choice(scenario.num_clients, scenario.num_malicious, replace=False))
    else:
        malicious = frozenset()
    if not scenario.attacked:
        malicious = frozenset()
    for m in malicious:
        parts[m] = poison_dataset(parts[m], scenario.trigger, ints[4] + m)
    model = init_model(ModelDims(dc.input_dim, tuple(dc.hidden), dc.num_classes), ints[4])
    return Environment(model, parts, test, malicious)


@dataclass
class SimulationState:
    model: FlatModel
    ledger: ReputationLedger
    round: int = 0
    last_update: np.ndarray | None = None
    benign_norm_median: float | None = None
    opacity_tripped: bool = False


def _client_seed(seed: int, round_: int, cid: int) -> int:
    return int(np.random.SeedSequence([seed, round_, cid]).generate_state(1)[0])


def local_updates(state: SimulationState, env: Environment, scenario: ScenarioConfig, round_: int) -> dict[int, np.ndarray]:
    deltas: dict[int, np.ndarray] = {}
    hint = state.last_update if state.last_update is not None else np.ones(state.model.size)
    for cid in range(scenario.num_clients):
        cfg = replace(scenario.train, seed=_client_seed(scenario.seed, round_, cid))
        if cid in env.malicious:
            upd = attack_local_round(
                state.model,
                env.client_data[cid],
                scenario.attack,
                cfg,
                hint,
                norm_bound=_attack_bound(scenario.attack, state),
                client_id=cid,
                round=round_,
            )
        else:
            _, upd = local_train(state.model, env.client_data[cid], cfg, client_id=cid, round=round_)
        deltas[cid] = upd.delta
    return deltas


def _attack_bound(spec: AttackSpec, state: SimulationState) -> float | None:
    if spec.norm_bound is not None:
        return spec.norm_bound
    if state.benign_norm_median is None:
        return None
    return spec.norm_bound_ratio * state.benign_norm_median


def _trust_weights(scenario: ScenarioConfig) -> np.ndarray:
    if scenario.defense_mode in SINGLE_INDICATOR:
        w = np.zeros(3)
        w[SINGLE_INDICATOR[scenario.defense_mode]] = 1.0
        return w
    return np.asarray(scenario.trust_weights, dtype=np.float64)


def run_round(
    state: SimulationState, env: Environment, scenario: ScenarioConfig
) -> tuple[SimulationState, RoundRecord]:
    t = state.round + 1
    w_prev = state.model.params
    deltas = local_updates(state, env, scenario, t)
    uplink = Uplink(deltas)
    noise_rng = np.random.default_rng(_client_seed(scenario.seed, t, 10**6))
    ids = list(range(scenario.num_clients))
    mode = scenario.defense_mode
    tiers: dict[int, Tier] = {}
    verdicts: dict[int, InspectionVerdict] = {}
    ledger = state.ledger
    n_filtered = 0

    rs_only = scenario.rs_only_after_round is not None and t > scenario.rs_only_after_round
    if mode == "none":
        final = set(ids)
        update = uplink.superpose(final, scenario.ota_noise_std, noise_rng)
    elif mode == "bev":
        tiers = _tier(deltas, w_prev, scenario)
        weighted = [c for c in ids if BEV_WEIGHTS[tiers[c]] > 0]
        final = set(weighted)
        update = uplink.superpose(
            weighted, scenario.ota_noise_std, noise_rng, weights=[BEV_WEIGHTS[tiers[c]] for c in sorted(weighted)]
        )
    elif rs_only:
        final = mad_filter(ledger, ids, t)
        n_filtered = len(ids) - len(final)
        ledger = increment(ledger, final)
        update = uplink.superpose(final, scenario.ota_noise_std, noise_rng) if final else None
    else:
        tiers = _tier(deltas, w_prev, scenario)
        trusted = [c for c in ids if tiers[c] is Tier.TRUSTED]
        suspects = [c for c in ids if tiers[c] is Tier.SUSPICIOUS]
        if not trusted:
            # threshold tiering can leave no reference; promote the best-scored client
            best = max(ids, key=lambda c: (_scores(deltas, w_prev, scenario)[c], -c))
            log.warning("round %d: empty trusted tier, promoting client %d", t, best)
            tiers[best] = Tier.TRUSTED
            trusted = [best]
            suspects = [c for c in suspects if c != best]
        reference = uplink.superpose(trusted, scenario.ota_noise_std, noise_rng)
        uplink.grant_individual(suspects)
        suspect_deltas = {c: uplink.upload(c) for c in suspects}
        layer_map = whole_model_map(state.model.size) if mode == "model_wise" else state.model.layer_map
        reports = uplink.layer_l1_reports(trusted, reference, layer_map) if len(suspects) == 1 else None
        verdicts = inspect_suspects(suspect_deltas, reference, layer_map, ledger.as_dict(), scenario.rho, reports)
        accepted = [c for c in suspects if verdicts[c].accepted]
        candidates = set(trusted) | set(accepted)
        final = mad_filter(ledger, candidates, t)
        n_filtered = len(candidates) - len(final)
        ledger = increment(ledger, final)
        kept_trusted = sorted(set(trusted) & final)
        kept_accepted = sorted(set(accepted) & final)
        if not final:
            update = None
        else:
            if kept_trusted == sorted(trusted):
                trusted_mean = reference
            elif kept_trusted:
                # filtered trusted clients stay silent in a second OTA slot
                trusted_mean = uplink.superpose(kept_trusted, scenario.ota_noise_std, noise_rng)
            else:
                trusted_mean = np.zeros_like(w_prev)
            total = len(kept_trusted) * trusted_mean + sum((suspect_deltas[c] for c in kept_accepted), np.zeros_like(w_prev))
            update = total / (len(kept_trusted) + len(kept_accepted))

    if mode in ("none", "bev"):
        ledger = increment(ledger, final)
    stalled = update is None
    if stalled:
        log.info("round %d: no participants, global model unchanged", t)
        update = np.zeros_like(w_prev)
    new_model = state.model.with_params(w_prev + update)
    mta, asr = evaluate(new_model, env.test, scenario.trigger)
    benign = [np.linalg.norm(deltas[c]) for c in ids if c not in env.malicious]
    new_state = SimulationState(
        model=new_model,
        ledger=ledger,
        round=t,
        last_update=update,
        benign_norm_median=float(np.median(benign)) if benign else state.benign_norm_median,
        opacity_tripped=state.opacity_tripped or uplink.tripped,
    )
    record = RoundRecord(
        round=t,
        mta=mta,
        asr=asr,
        tiers={c: tiers[c].value for c in sorted(tiers)},
        verdicts={c: verdicts[c].accepted for c in sorted(verdicts)},
        final_participants=tuple(sorted(final)),
        rs_snapshot=ledger.as_dict(),
        n_rs_filtered=n_filtered,
        stalled=stalled,
    )
    return new_state, record


def _scores(deltas, w_prev, scenario: ScenarioConfig) -> dict[int, float]:
    weights = _trust_weights(scenario)
    return {
        c: trust_score(normalize_indicators(compute_indicators(d, w_prev), scenario.transform), weights)
        for c, d in deltas.items()
    }


def _tier(deltas, w_prev, scenario: ScenarioConfig) -> dict[int, Tier]:
    return tier_clients(_scores(deltas, w_prev, scenario), scenario.tier)


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    model: FlatModel
    malicious: frozenset[int]
    opacity_tripped: bool
    wall_time: float

    @property
    def final_mta(self) -> float:
        return self.records[-1].mta

    @property
    def final_asr(self) -> float:
        return self.records[-1].asr


def run_experiment(scenario: ScenarioConfig) -> ExperimentResult:
    start = time.perf_counter()
    env = build_environment(scenario)
    state = SimulationState(env.model, ReputationLedger(scenario.num_clients, scenario.warm_up))
    records = []
    for _ in range(scenario.rounds):
        state, rec = run_round(state, env, scenario)
        records.append(rec)
    return ExperimentResult(records, state.model, env.malicious, state.opacity_tripped, time.perf_counter() - start)
