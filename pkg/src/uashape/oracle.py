"""Shortest-plan oracle: one optimal action per state.

Cost counts every action, turns included. Plans cover only the current
mission; ties go to the lowest action id.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from uashape import kernels
from uashape.gridworld import (
    FORWARD,
    MISSION_DOOR,
    MISSION_GOAL,
    MISSION_KEY,
    OPEN_DOOR,
    PICKUP,
    GridConfig,
    GridState,
    Pos,
    is_terminal,
    step,
)


class UnsolvableError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlanTarget:
    target_pos: Pos
    terminal_action: int


def plan_target(state: GridState) -> PlanTarget:
    if state.mission == MISSION_KEY:
        return PlanTarget(state.key_pos, PICKUP)
    if state.mission == MISSION_DOOR:
        return PlanTarget(state.door_pos, OPEN_DOOR)
    return PlanTarget(state.goal_pos, FORWARD)


def _masks(config: GridConfig, key_pos, door_pos, goal_pos, door_open, mission):
    passable = np.zeros((config.height, config.width), dtype=np.bool_)
    for r in range(config.height):
        for c in range(config.width):
            passable[r, c] = not config.is_wall((c, r), door_pos)
    if not door_open:
        passable[door_pos[1], door_pos[0]] = False
    if key_pos is not None:
        passable[key_pos[1], key_pos[0]] = False
    passable[goal_pos[1], goal_pos[0]] = False
    finish = np.zeros_like(passable)
    target = {MISSION_KEY: key_pos, MISSION_DOOR: door_pos, MISSION_GOAL: goal_pos}[mission]
    finish[target[1], target[0]] = True
    return passable, finish


@lru_cache(maxsize=4096)
def _table(config: GridConfig, key_pos, door_pos, goal_pos, door_open, mission):
    passable, finish = _masks(config, key_pos, door_pos, goal_pos, door_open, mission)
    dist = kernels.cost_table(passable, finish)
    dist.setflags(write=False)
    return passable, dist


def _lookup(state: GridState, config: GridConfig):
    return _table(config, state.key_pos, state.door_pos, state.goal_pos, state.door_open, state.mission)


def cost_to_go(state: GridState, config: GridConfig) -> int:
    """Fewest actions that complete the current mission."""
    _, dist = _lookup(state, config)
    c, r = state.agent_pos
    value = int(dist[r, c, state.agent_dir])
    if value >= kernels.UNREACHABLE:
        raise UnsolvableError(f"mission {state.mission} cannot be completed from {state.situation()}")
    return value


def action_costs(state: GridState, config: GridConfig) -> list[int]:
    """Plan cost after taking each action first (completing action costs 1)."""
    passable, dist = _lookup(state, config)
    c, r = state.agent_pos
    d = state.agent_dir
    stay = 1 + int(dist[r, c, d])
    front = state.front_pos
    target = plan_target(state)
    costs = [1 + int(dist[r, c, (d - 1) % 4]), 1 + int(dist[r, c, (d + 1) % 4]), stay, stay, stay]
    if passable[front[1], front[0]]:
        costs[FORWARD] = 1 + int(dist[front[1], front[0], d])
    if front == target.target_pos:
        costs[target.terminal_action] = 1
    return costs


def optimal_action(state: GridState, config: GridConfig) -> int:
    if is_terminal(state, config):
        raise ValueError("no action is optimal in a terminal state")
    costs = action_costs(state, config)
    best = min(costs)
    if best >= kernels.UNREACHABLE:
        raise UnsolvableError(f"mission {state.mission} cannot be completed from {state.situation()}")
    return costs.index(best)


def greedy_rollout(state: GridState, config: GridConfig) -> tuple[GridState, list[int], float]:
    """Follow the oracle until the episode ends. Returns (final state, actions, return)."""
    actions = []
    total = 0.0
    while True:
        a = optimal_action(state, config)
        state, out = step(state, a, config)
        actions.append(a)
        total += out.reward
        if out.done:
            return state, actions, total


def clear_cache() -> None:
    _table.cache_clear()

