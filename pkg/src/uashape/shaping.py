"""Policy shaping: fuse advisor and agent action distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ENTROPY_MIX = "entropy-mix"
LINEAR_DECAY_MIX = "linear-decay-mix"
AGENT_ONLY = "agent-only"
ADVISOR_ONLY = "advisor-only"


@dataclass(frozen=True)
class MixedPolicy:
    dist: np.ndarray
    coeff_agent: float
    source: str

    @property
    def coeff_llm(self) -> float:
        return 1.0 - self.coeff_agent


def _mix(p_llm, p_agent, coeff_agent: float, source: str) -> MixedPolicy:
    if not 0.0 <= coeff_agent <= 1.0 or math.isnan(coeff_agent):
        raise ValueError(f"mixing weight {coeff_agent!r} outside [0, 1]")
    p_llm = np.asarray(p_llm, dtype=float)
    p_agent = np.asarray(p_agent, dtype=float)
    if coeff_agent == 0.0:
        dist = p_llm.copy()
    elif coeff_agent == 1.0:
        dist = p_agent.copy()
    else:
        dist = (1.0 - coeff_agent) * p_llm + coeff_agent * p_agent
    return MixedPolicy(dist, float(coeff_agent), source)


def mix_entropy(p_llm, p_agent, entropy_norm: float) -> MixedPolicy:
    """Weight the agent by the advisor's normalized entropy, the advisor by the rest."""
    return _mix(p_llm, p_agent, entropy_norm, ENTROPY_MIX)


def mix_fixed(p_llm, p_agent, lam: float) -> MixedPolicy:
    """``lam * p_llm + (1 - lam) * p_agent``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam!r} outside [0, 1]")
    return _mix(p_llm, p_agent, 1.0 - lam, LINEAR_DECAY_MIX)


def agent_only(p_agent) -> MixedPolicy:
    return MixedPolicy(np.asarray(p_agent, dtype=float), 1.0, AGENT_ONLY)


def linear_decay_coeff(episode: int, total_episodes: int) -> float:
    """Advisor weight falling linearly from 1 at the first episode to 0 at the last."""
    if total_episodes < 2:
        raise ValueError("linear decay needs at least 2 episodes")
    if not 0 <= episode < total_episodes:
        raise ValueError(f"episode {episode} outside [0, {total_episodes})")
    return 1.0 - episode / (total_episodes - 1)


def sample_action(policy: MixedPolicy, rng: np.random.Generator) -> tuple[int, float]:
    """Draw an action; the log-probability is taken under the mixed distribution."""
    cdf = np.cumsum(policy.dist)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    a = min(a, len(cdf) - 1)
    return a, math.log(policy.dist[a])
