"""Actor-critic learner trained with the clipped PPO surrogate.

Both networks are single-hidden-layer tanh perceptrons. Gradients are
computed by hand in :mod:`uashape.kernels`; the learner only orchestrates
minibatching and Adam.

When a guidance condition is active the behaviour policy is a mixture of
advisor and actor. Every transition caches the advisor distribution and the
agent weight used at sampling time so the same mixture can be rebuilt with
the current actor, which keeps the importance ratio at 1 on the first
minibatch of each update.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from uashape import kernels
from uashape.gridworld import N_ACTIONS

CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    """Non-finite activations or losses during training."""


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    clip_epsilon: float = 0.2
    learning_rate: float = 1e-4
    minibatch_size: int = 15
    epochs_per_update: int = 4
    hidden_width: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    value_loss_weight: float = 0.5
    entropy_bonus_weight: float = 0.01

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class NetworkParams:
    """All weights in one flat float64 buffer, exposed as shaped views."""

    _NAMES = ("W1a", "b1a", "W2a", "b2a", "W1c", "b1c", "w2c", "b2c")

    def __init__(self, n_inputs: int, hidden: int, flat: Optional[np.ndarray] = None):
        self.n_inputs = n_inputs
        self.hidden = hidden
        shapes = self.shapes(n_inputs, hidden)
        size = sum(int(np.prod(s)) for s in shapes)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ValueError(f"flat buffer has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        off = 0
        for name, shape in zip(self._NAMES, shapes):
            n = int(np.prod(shape))
            setattr(self, name, flat[off:off + n].reshape(shape))
            off += n

    @staticmethod
    def shapes(n_inputs: int, hidden: int):
        return [(n_inputs, hidden), (hidden,), (hidden, N_ACTIONS), (N_ACTIONS,),
                (n_inputs, hidden), (hidden,), (hidden,), (1,)]

    def arrays(self) -> tuple:
        return tuple(getattr(self, n) for n in self._NAMES)

    def actor(self) -> tuple:
        return self.W1a, self.b1a, self.W2a, self.b2a

    def critic(self) -> tuple:
        return self.W1c, self.b1c, self.w2c, self.b2c

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.n_inputs, self.hidden, self.flat.copy())

    def like(self) -> "NetworkParams":
        return NetworkParams(self.n_inputs, self.hidden)


def init_params(n_inputs: int, config: PpoConfig, rng: np.random.Generator) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) hidden layers, zero output layers."""
    p = NetworkParams(n_inputs, config.hidden_width)
    bound = 1.0 / np.sqrt(n_inputs)
    for arr in (p.W1a, p.b1a, p.W1c, p.b1c):
        arr[...] = rng.uniform(-bound, bound, size=arr.shape)
    return p


def forward_actor(params: NetworkParams, observation: np.ndarray) -> np.ndarray:
    probs = kernels.actor_probs(observation, *params.actor())
    if not np.all(np.isfinite(probs)):
        raise DivergenceError("actor produced non-finite probabilities")
    return probs


def forward_critic(params: NetworkParams, observation: np.ndarray) -> float:
    return float(critic_values(params, observation[None, :])[0])


def critic_values(params: NetworkParams, observations: np.ndarray) -> np.ndarray:
    values = kernels.critic_values(np.ascontiguousarray(observations), *params.critic())
    if not np.all(np.isfinite(values)):
        raise DivergenceError("critic produced non-finite values")
    return values


@dataclass
class Transition:
    observation: np.ndarray
    action: int
    behavior_log_prob: float
    reward: float
    done: bool
    p_llm: Optional[np.ndarray] = None
    coeff_agent: Optional[float] = None


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    behavior_log_probs: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray
    p_llm: np.ndarray
    coeff_agent: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx) -> "RolloutBatch":
        return RolloutBatch(*(np.ascontiguousarray(getattr(self, f)[idx]) for f in self.__dataclass_fields__))


def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    out = np.empty(len(rewards))
    running = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / max(float(x.std()), 1e-8)


def compute_returns_and_advantages(trajectory: Sequence[Transition], params: NetworkParams, gamma: float,
                                   final_observation: Optional[np.ndarray] = None,
                                   normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Discounted returns and baseline-subtracted advantages.

    A truncated trajectory (last transition not ``done`` by termination) is
    bootstrapped from the critic at ``final_observation``.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    obs = np.stack([t.observation for t in trajectory])
    values = critic_values(params, obs)
    bootstrap = 0.0
    if final_observation is not None:
        bootstrap = forward_critic(params, final_observation)
    returns = discounted_returns([t.reward for t in trajectory], gamma, bootstrap)
    adv = returns - values
    return returns, (standardize(adv) if normalize else adv)


def make_batch(trajectory: Sequence[Transition], returns: np.ndarray, advantages: np.ndarray) -> RolloutBatch:
    n = len(trajectory)
    p_llm = np.zeros((n, N_ACTIONS))
    coeff = np.ones(n)
    for i, t in enumerate(trajectory):
        if t.p_llm is not None:
            p_llm[i] = t.p_llm
            coeff[i] = t.coeff_agent
    return RolloutBatch(
        observations=np.stack([t.observation for t in trajectory]),
        actions=np.array([t.action for t in trajectory], dtype=np.int64),
        behavior_log_probs=np.array([t.behavior_log_prob for t in trajectory]),
        returns=np.asarray(returns, dtype=float),
        advantages=np.asarray(advantages, dtype=float),
        p_llm=p_llm,
        coeff_agent=coeff,
    )


@dataclass
class Adam:
    size: int
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    t: int = 0

    def __post_init__(self):
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)

    def step(self, params: np.ndarray, grad: np.ndarray, config: PpoConfig) -> None:
        self.t += 1
        kernels.adam_step(params, grad, self.m, self.v, config.learning_rate,
                          config.adam_beta1, config.adam_beta2, config.adam_eps, float(self.t))


def loss_and_grad(params: NetworkParams, batch: RolloutBatch, config: PpoConfig,
                  grad: Optional[NetworkParams] = None) -> tuple[float, NetworkParams, dict]:
    """Total minibatch loss and its gradient (as a NetworkParams of gradients).

    ``grad`` is overwritten when given.
    """
    if grad is None:
        grad = params.like()
    total, pol, val, ent, ratio = kernels.ppo_loss_grad(
        batch.observations, batch.actions, batch.behavior_log_probs, batch.advantages, batch.returns,
        batch.p_llm, batch.coeff_agent, *params.arrays(),
        config.clip_epsilon, config.value_loss_weight, config.entropy_bonus_weight, *grad.arrays(),
    )
    return total, grad, {"policy_loss": pol, "value_loss": val, "entropy": ent, "mean_ratio": ratio}


def ppo_update(params: NetworkParams, batch: RolloutBatch, config: PpoConfig,
               optimizer: Adam, shuffle_rng: np.random.Generator) -> tuple[NetworkParams, dict]:
    """Several epochs of minibatch Adam steps; returns new params and mean diagnostics."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    new = params.copy()
    n = len(batch)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "mean_ratio": 0.0}
    count = 0
    first_ratio = None
    grad = new.like()
    for _ in range(config.epochs_per_update):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            mb = batch.subset(order[start:start + config.minibatch_size])
            total, grad, diag = loss_and_grad(new, mb, config, grad)
            if not np.isfinite(total) or not np.all(np.isfinite(grad.flat)):
                raise DivergenceError(f"non-finite loss or gradient: {diag}")
            if first_ratio is None:
                first_ratio = diag["mean_ratio"]
            optimizer.step(new.flat, grad.flat, config)
            for k in sums:
                sums[k] += diag[k]
            count += 1
    out = {k: v / count for k, v in sums.items()}
    out["first_ratio"] = first_ratio
    return new, out


def save_checkpoint(path, params: NetworkParams, config: PpoConfig) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, version=CHECKPOINT_VERSION, flat=params.flat, n_inputs=params.n_inputs,
                     hidden=params.hidden, config_hash=config.digest(),
                     config_json=json.dumps(asdict(config), sort_keys=True))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[NetworkParams, PpoConfig]:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        config = PpoConfig(**json.loads(str(data["config_json"])))
        if config.digest() != str(data["config_hash"]):
            raise ValueError("checkpoint config hash mismatch")
        params = NetworkParams(int(data["n_inputs"]), int(data["hidden"]), data["flat"].copy())
    return params, config
