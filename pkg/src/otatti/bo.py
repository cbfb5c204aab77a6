"""Offline Bayesian optimisation of the Stage-I trust weights on the simplex."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, NumericalError

log = logging.getLogger(__name__)

LENGTH_SCALE = 0.5
JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class BOConfig:
    n_init: int = 5
    n_iter: int = 15
    lambda_tradeoff: float = 1.0
    ei_candidate_count: int = 512
    gp_noise: float = 1e-6
    seed: int = 0
    dim: int = 3

    def __post_init__(self) -> None:
        if self.n_init < 2:
            raise ConfigurationError("n_init must be >= 2")
        if self.n_iter < 0:
            raise ConfigurationError("n_iter must be >= 0")
        if not self.lambda_tradeoff > 0:
            raise ConfigurationError("lambda_tradeoff must be positive")
        if self.ei_candidate_count < 1:
            raise ConfigurationError("ei_candidate_count must be >= 1")
        if not self.gp_noise > 0:
            raise ConfigurationError("gp_noise must be positive")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")


@dataclass(frozen=True)
class BORecord:
    beta: tuple[float, ...]
    objective: float


@dataclass
class BOResult:
    best_beta: tuple[float, ...]
    best_objective: float
    records: list[BORecord] = field(default_factory=list)


def sample_dirichlet(dim: int, seed: int | np.random.Generator, count: int | None = None) -> np.ndarray:
    """Draw from Dirichlet(1, ..., 1); one vector, or ``(count, dim)`` rows."""
    if dim < 1:
        raise ConfigurationError("dim must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (dim,) if count is None else (count, dim)
    g = rng.standard_gamma(1.0, size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def se_kernel(a: np.ndarray, b: np.ndarray, variance: float, length_scale: float = LENGTH_SCALE) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return variance * np.exp(-0.5 * sq / length_scale**2)


def _cholesky(k: np.ndarray) -> np.ndarray:
    for jitter in (0.0,) + JITTERS:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("kernel matrix is not positive definite even with jitter")


def signal_variance(values: np.ndarray) -> float:
    v = float(np.var(values))
    return v if v > 0 else 1.0


def gp_fit_predict(
    x_obs: Sequence[Sequence[float]],
    y_obs: Sequence[float],
    x_query: Sequence[Sequence[float]],
    gp_noise: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation of a constant-mean SE-kernel GP.

    The prior mean is the mean of the observations and the signal variance
    their sample variance (1.0 when they are all equal).
    """
    x = np.atleast_2d(np.asarray(x_obs, dtype=np.float64))
    y = np.asarray(y_obs, dtype=np.float64)
    q = np.atleast_2d(np.asarray(x_query, dtype=np.float64))
    if y.size == 0:
        raise ConfigurationError("GP needs at least one observation")
    if x.shape[0] != y.size:
        raise ConfigurationError("observation inputs and targets differ in count")
    mu0 = float(y.mean())
    var = signal_variance(y)
    k = se_kernel(x, x, var) + gp_noise * np.eye(len(y))
    chol = _cholesky(k)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y - mu0))
    ks = se_kernel(q, x, var)
    mean = mu0 + ks @ alpha
    v = np.linalg.solve(chol, ks.T)
    post_var = np.maximum(var - (v * v).sum(axis=0), 0.0)
    return mean, np.sqrt(post_var)


def expected_improvement(mean, std, best):
    """EI for maximisation; zero-std entries reduce to ``max(0, mean - best)``."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std < 0):
        raise ConfigurationError("standard deviation must be nonnegative")
    gain = mean - best
    safe = np.where(std > 0, std, 1.0)
    z = gain / safe
    ei = np.where(std > 0, gain * norm.cdf(z) + std * norm.pdf(z), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def run_bo(objective: Callable[[np.ndarray], float], config: BOConfig) -> BOResult:
    """Maximise ``objective`` over the simplex: Dirichlet warm start, then EI steps."""
    rng = np.random.default_rng(config.seed)
    records: list[BORecord] = []

    def evaluate(beta: np.ndarray) -> None:
        j = float(objective(beta))
        if not math.isfinite(j):
            raise NumericalError(f"objective returned {j} at beta={beta.tolist()}")
        records.append(BORecord(tuple(float(b) for b in beta), j))
        log.info("bo eval %d: beta=%s J=%.6f", len(records), np.round(beta, 4).tolist(), j)

    for beta in sample_dirichlet(config.dim, rng, config.n_init):
        evaluate(beta)
    for _ in range(config.n_iter):
        x = np.array([r.beta for r in records])
        y = np.array([r.objective for r in records])
        cands = sample_dirichlet(config.dim, rng, config.ei_candidate_count)
        mean, std = gp_fit_predict(x, y, cands, config.gp_noise)
        ei = expected_improvement(mean, std, float(y.max()))
        evaluate(cands[int(np.argmax(ei))])
    best = max(records, key=lambda r: r.objective)
    return BOResult(best.beta, best.objective, records)


def defense_objective(mta: float, asr: float, lambda_tradeoff: float) -> float:
    return mta - lambda_tradeoff * asr


def scenario_objective(
    scenario,
    lambda_tradeoff: float,
    seeds: Sequence[int] | None = None,
    attack_kinds: Sequence[str] | None = None,
):
    """Objective closure: mean ``MTA - lambda * ASR`` of tti runs at the given weights.

    The mean runs over ``seeds`` and, when given, over ``attack_kinds`` (each
    replacing the scenario's attack kind, other attack settings kept).
    """
    from .attacks import AttackSpec
    from .simulation import run_experiment

    seeds = list(seeds) if seeds else [scenario.seed]
    if attack_kinds:
        base = scenario.attack or AttackSpec(attack_kinds[0])
        variants = [replace(scenario, attack=replace(base, kind=k)) for k in attack_kinds]
    else:
        variants = [scenario]

    def objective(beta: np.ndarray) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        beta = beta / beta.sum()
        weights = tuple(float(b) for b in beta)
        vals = []
        for variant in variants:
            for s in seeds:
                res = run_experiment(replace(variant, trust_weights=weights, seed=s, defense_mode="tti"))
                vals.append(defense_objective(res.final_mta, res.final_asr, lambda_tradeoff))
        return float(np.mean(vals))

    return objective
