"""Simulated language-model advisor with ensemble (dropout-style) calibration.

A frozen fine-tuned model is emulated per state: a keyed hash decides once
and for all whether the model gets that state right, and which wrong action
it prefers when it does not. Stochastic forward passes are emulated by
Gaussian logit noise. States the model gets wrong are the ones it has not
really learned, so their passes disagree more: the noise there is scaled by
``error_noise_gain``. A single deterministic pass cannot see any of this and
is equally confident on right and wrong states.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from uashape.gridworld import N_ACTIONS, GridConfig, GridState
from uashape.oracle import optimal_action

LOG_N_ACTIONS = math.log(N_ACTIONS)


@dataclass(frozen=True)
class AdvisorProfile:
    accuracy: float = 0.93
    concentration: float = 9.0
    pass_noise: float = 1.0
    error_noise_gain: float = 8.0
    error_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        if self.concentration <= 0:
            raise ValueError("concentration must be positive")
        if self.pass_noise < 0 or self.error_noise_gain < 0:
            raise ValueError("noise scales must be non-negative")


@dataclass(frozen=True)
class CalibratedAdvice:
    mean_dist: np.ndarray
    entropy_norm: float
    one_minus_max: float
    predicted_action: int
    passes_used: int


def normalized_entropy(dist) -> float:
    """Shannon entropy divided by log(5); 0 log 0 is taken as 0."""
    p = np.asarray(dist, dtype=float)
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum()) / LOG_N_ACTIONS
    return min(max(h, 0.0), 1.0)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _state_draws(state: GridState, error_seed: int) -> tuple[float, int]:
    digest = hashlib.blake2b(repr(state.situation()).encode(), digest_size=16,
                             key=error_seed.to_bytes(8, "little")).digest()
    u = int.from_bytes(digest[:8], "little") / 2.0**64
    pick = int.from_bytes(digest[8:], "little")
    return u, pick


_JUDGEMENTS: dict = {}


def _judgement(state: GridState, profile: AdvisorProfile, config: GridConfig) -> tuple[int, bool]:
    key = (state.situation(), profile, config)
    hit = _JUDGEMENTS.get(key)
    if hit is not None:
        return hit
    oracle = optimal_action(state, config)
    u, pick = _state_draws(state, profile.error_seed)
    if u < profile.accuracy:
        hit = (oracle, True)
    else:
        wrong = [a for a in range(N_ACTIONS) if a != oracle]
        hit = (wrong[pick % len(wrong)], False)
    if len(_JUDGEMENTS) > 1 << 18:
        _JUDGEMENTS.clear()
    _JUDGEMENTS[key] = hit
    return hit


def advised_action(state: GridState, profile: AdvisorProfile, config: GridConfig) -> tuple[int, bool]:
    """(advised action, whether the state is one the advisor gets right)."""
    return _judgement(state, profile, config)


def base_logits(state: GridState, profile: AdvisorProfile, config: GridConfig) -> np.ndarray:
    a_star, _ = _judgement(state, profile, config)
    z = np.zeros(N_ACTIONS)
    z[a_star] = profile.concentration
    return z


def base_distribution(state: GridState, profile: AdvisorProfile, config: GridConfig) -> np.ndarray:
    return _softmax(base_logits(state, profile, config))


def _summarise(mean_dist: np.ndarray, passes: int) -> CalibratedAdvice:
    return CalibratedAdvice(
        mean_dist=mean_dist,
        entropy_norm=normalized_entropy(mean_dist),
        one_minus_max=float(1.0 - mean_dist.max()),
        predicted_action=int(np.argmax(mean_dist)),
        passes_used=passes,
    )


def advise_deterministic(state: GridState, profile: AdvisorProfile, config: GridConfig) -> CalibratedAdvice:
    return _summarise(base_distribution(state, profile, config), 1)


def pass_distributions(state: GridState, profile: AdvisorProfile, config: GridConfig,
                       passes: int, pass_rng: np.random.Generator) -> np.ndarray:
    """``passes`` stochastic forward passes, shape ``(passes, 5)``."""
    z = base_logits(state, profile, config)
    _, correct = _judgement(state, profile, config)
    sigma = profile.pass_noise if correct else profile.pass_noise * profile.error_noise_gain
    noise = pass_rng.standard_normal((passes, N_ACTIONS))
    return _softmax(z + sigma * noise)


def advise_mc(state: GridState, profile: AdvisorProfile, config: GridConfig,
              passes: int, pass_rng: np.random.Generator) -> CalibratedAdvice:
    """Average ``passes`` noisy passes and summarise the mean distribution."""
    if passes < 2:
        raise ValueError(f"ensemble advice needs at least 2 passes, got {passes}")
    dists = pass_distributions(state, profile, config, passes, pass_rng)
    return _summarise(dists.mean(axis=0), passes)
