"""Time the numba loop kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Inputs mimic a real training step: 3x3 rooms (observation length 323),
hidden width 64, minibatch 15, sparse one-hot observations.
"""

import argparse
import timeit

import numpy as np

from uashape import _accel, kernels
from uashape.gridworld import GridConfig, new_env, observation_length
from uashape.oracle import _masks
from uashape.ppo import NetworkParams, PpoConfig, init_params


def make_inputs(rng):
    grid = GridConfig(3, 3)
    n_in = observation_length(grid)
    cfg = PpoConfig()
    p = init_params(n_in, cfg, rng)
    p.W2a[:] = rng.normal(0, 0.1, size=p.W2a.shape)
    p.w2c[:] = rng.normal(0, 0.1, size=p.w2c.shape)
    n = cfg.minibatch_size
    X = (rng.random((n, n_in)) < 0.15).astype(float)
    batch = (X, rng.integers(0, 5, size=n), np.log(rng.uniform(0.1, 0.3, size=n)), rng.normal(size=n),
             rng.normal(size=n), rng.dirichlet(np.ones(5), size=n), rng.uniform(size=n))
    state = new_env(grid, rng)
    passable, finish = _masks(grid, state.key_pos, state.door_pos, state.goal_pos, state.door_open, state.mission)
    return p, cfg, batch, passable, finish


def cases(p: NetworkParams, cfg: PpoConfig, batch, passable, finish):
    g = p.like()
    m, v = np.zeros(p.flat.size), np.zeros(p.flat.size)
    flat = p.flat.copy()
    X = batch[0]
    for suffix in ("loops", "numpy"):
        loss = getattr(kernels, f"ppo_loss_grad_{suffix}")
        adam = getattr(kernels, f"adam_{suffix}")
        actor = getattr(kernels, f"actor_probs_{suffix}")
        critic = getattr(kernels, f"critic_values_{suffix}")
        table = getattr(kernels, f"cost_table_{suffix}")
        yield suffix, "ppo_loss_grad", lambda loss=loss: loss(
            *batch, *p.arrays(), cfg.clip_epsilon, cfg.value_loss_weight, cfg.entropy_bonus_weight, *g.arrays())
        yield suffix, "adam_step", lambda adam=adam: adam(flat, g.flat, m, v, 1e-4, 0.9, 0.999, 1e-8, 10.0)
        yield suffix, "actor_probs", lambda actor=actor: actor(X[0], *p.actor())
        yield suffix, "critic_values", lambda critic=critic: critic(X, *p.critic())
        yield suffix, "cost_table", lambda table=table: table(passable, finish)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        print("numba unavailable: the 'loops' column runs as plain Python")
    inputs = make_inputs(np.random.default_rng(0))
    times = {}
    for suffix, name, fn in cases(*inputs):
        fn()  # compile / warm up
        best = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
        times[(name, suffix)] = best
    print(f"{'kernel':16s} {'numba us':>10s} {'numpy us':>10s} {'speedup':>8s}")
    for name in ("ppo_loss_grad", "adam_step", "actor_probs", "critic_values", "cost_table"):
        a, b = times[(name, "loops")], times[(name, "numpy")]
        print(f"{name:16s} {a * 1e6:10.1f} {b * 1e6:10.1f} {b / a:7.1f}x")


if __name__ == "__main__":
    main()
