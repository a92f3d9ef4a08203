"""Two-room unlock-and-reach gridworld.

Layout (room_width=w, room_height=h)::

    col 0            boundary wall
    cols 1..w        left room (agent and key start here)
    col w+1          dividing wall, one cell of it is the locked door
    cols w+2..2w+1   right room (goal lives here)
    col 2w+2         boundary wall

Rows 0 and h+1 are boundary walls. Coordinates are ``(col, row)`` with row
growing downwards, so direction 1 ("down") increases the row.

The agent works through three missions in order: pick up the key, open the
door, step onto the goal. States are immutable; :func:`step` returns a new one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

Pos = tuple[int, int]

N_ACTIONS = 5
TURN_LEFT, TURN_RIGHT, FORWARD, PICKUP, OPEN_DOOR = range(N_ACTIONS)
ACTION_NAMES = ("turn-left", "turn-right", "forward", "pickup-key", "open-door")

# right, down, left, up
DIR_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))
DIR_GLYPH = (">", "v", "<", "^")

MISSION_KEY, MISSION_DOOR, MISSION_GOAL = 1, 2, 3
MISSION_TEXT = {1: "pick up key", 2: "open door", 3: "reach goal"}

SUBGOAL_REWARD = 0.5
GOAL_BONUS = 0.2
MISUSE_PENALTY = -0.02

# cell-type planes of the observation, in this order
CELL_TYPES = ("wall", "key", "closed_door", "open_door", "goal", "empty")


class LayoutError(ValueError):
    """No free cell is left for an object during layout placement."""


@dataclass(frozen=True)
class GridConfig:
    room_width: int = 3
    room_height: int = 3
    max_steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.room_width < 3 or self.room_height < 3:
            raise ValueError(f"rooms must be at least 3x3, got {self.room_width}x{self.room_height}")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", 8 * self.n_cells)
        if self.max_steps < 4 * self.n_cells:
            raise ValueError(
                f"max_steps={self.max_steps} is below 4 * cell count ({4 * self.n_cells})"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def width(self) -> int:
        return 2 * self.room_width + 3

    @property
    def height(self) -> int:
        return self.room_height + 2

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def wall_col(self) -> int:
        return self.room_width + 1

    def left_room(self) -> list[Pos]:
        return [(c, r) for r in range(1, self.room_height + 1) for c in range(1, self.room_width + 1)]

    def right_room(self) -> list[Pos]:
        lo = self.room_width + 2
        return [(c, r) for r in range(1, self.room_height + 1) for c in range(lo, lo + self.room_width)]

    def door_slots(self) -> list[Pos]:
        return [(self.wall_col, r) for r in range(1, self.room_height + 1)]

    def is_wall(self, pos: Pos, door_pos: Pos) -> bool:
        """Structural wall test; the door cell is never a wall."""
        c, r = pos
        if c <= 0 or r <= 0 or c >= self.width - 1 or r >= self.height - 1:
            return True
        return c == self.wall_col and pos != door_pos


@dataclass(frozen=True)
class GridState:
    agent_pos: Pos
    agent_dir: int
    carrying_key: bool
    door_open: bool
    key_pos: Optional[Pos]
    door_pos: Pos
    goal_pos: Pos
    mission: int = MISSION_KEY
    step_count: int = 0

    @property
    def front_pos(self) -> Pos:
        dc, dr = DIR_VEC[self.agent_dir]
        return (self.agent_pos[0] + dc, self.agent_pos[1] + dr)

    def layout_key(self) -> tuple:
        return (self.key_pos, self.door_pos, self.goal_pos)

    def situation(self) -> tuple:
        """Everything that defines the state except the step counter."""
        return (self.agent_pos, self.agent_dir, self.carrying_key, self.door_open,
                self.key_pos, self.door_pos, self.goal_pos, self.mission)


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    done: bool
    mission_completed: Optional[int] = None
    truncated: bool = False


def new_env(config: GridConfig, layout_rng: np.random.Generator) -> GridState:
    """Draw a fresh layout. Same generator state gives the same layout."""
    left = config.left_room()
    right = config.right_room()
    doors = config.door_slots()
    if len(left) < 2 or not right or not doors:
        raise LayoutError("rooms too small to place key, agent and goal")

    def pick(cells):
        if not cells:
            raise LayoutError("no free cell")
        return cells[int(layout_rng.integers(len(cells)))]

    key = pick(left)
    door = pick(doors)
    goal = pick(right)
    agent = pick([p for p in left if p != key])
    direction = int(layout_rng.integers(4))
    return GridState(agent_pos=agent, agent_dir=direction, carrying_key=False, door_open=False,
                     key_pos=key, door_pos=door, goal_pos=goal)


def is_terminal(state: GridState, config: GridConfig) -> bool:
    return state.agent_pos == state.goal_pos or state.step_count >= config.max_steps


def _blocked(state: GridState, config: GridConfig, pos: Pos) -> bool:
    if config.is_wall(pos, state.door_pos):
        return True
    if pos == state.door_pos and not state.door_open:
        return True
    return state.key_pos is not None and pos == state.key_pos


def step(state: GridState, action: int, config: GridConfig) -> tuple[GridState, StepOutcome]:
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action id {action!r} outside 0..{N_ACTIONS - 1}")
    if is_terminal(state, config):
        raise RuntimeError("step() called on a finished episode")

    count = state.step_count + 1
    reward = 0.0
    completed = None
    done = False
    changes: dict = {"step_count": count}

    if action == TURN_LEFT:
        changes["agent_dir"] = (state.agent_dir - 1) % 4
    elif action == TURN_RIGHT:
        changes["agent_dir"] = (state.agent_dir + 1) % 4
    elif action == FORWARD:
        front = state.front_pos
        if not _blocked(state, config, front):
            changes["agent_pos"] = front
            if front == state.goal_pos and state.mission == MISSION_GOAL:
                reward = GOAL_BONUS + (1.0 - count / config.max_steps)
                completed = MISSION_GOAL
                done = True
    elif action == PICKUP:
        if state.mission == MISSION_KEY and state.front_pos == state.key_pos:
            changes.update(carrying_key=True, key_pos=None, mission=MISSION_DOOR)
            reward = SUBGOAL_REWARD
            completed = MISSION_KEY
        else:
            reward = MISUSE_PENALTY
    else:
        if (state.mission == MISSION_DOOR and state.carrying_key
                and state.front_pos == state.door_pos and not state.door_open):
            changes.update(door_open=True, mission=MISSION_GOAL)
            reward = SUBGOAL_REWARD
            completed = MISSION_DOOR
        else:
            reward = MISUSE_PENALTY

    truncated = not done and count >= config.max_steps
    return replace(state, **changes), StepOutcome(reward, done or truncated, completed, truncated)


def observation_length(config: GridConfig) -> int:
    return (len(CELL_TYPES) + 1) * config.n_cells + 4 + 1 + 3


def cell_planes(state: GridState, config: GridConfig) -> np.ndarray:
    """Cell-type one-hot planes, shape ``(len(CELL_TYPES), height, width)``."""
    planes = np.zeros((len(CELL_TYPES), config.height, config.width))
    for r in range(config.height):
        for c in range(config.width):
            if config.is_wall((c, r), state.door_pos):
                planes[0, r, c] = 1.0
    if state.key_pos is not None:
        planes[1, state.key_pos[1], state.key_pos[0]] = 1.0
    dc, dr = state.door_pos
    planes[3 if state.door_open else 2, dr, dc] = 1.0
    planes[4, state.goal_pos[1], state.goal_pos[0]] = 1.0
    planes[5] = 1.0 - planes[:5].sum(axis=0)
    return planes


def encode_observation(state: GridState, config: GridConfig, planes: Optional[np.ndarray] = None) -> np.ndarray:
    """Flat 0/1 feature vector; ``planes`` may be passed in when cached."""
    if planes is None:
        planes = cell_planes(state, config)
    n = config.n_cells
    obs = np.zeros(observation_length(config))
    obs[: len(CELL_TYPES) * n] = planes.ravel()
    off = len(CELL_TYPES) * n
    obs[off + state.agent_pos[1] * config.width + state.agent_pos[0]] = 1.0
    off += n
    obs[off + state.agent_dir] = 1.0
    obs[off + 4] = float(state.carrying_key)
    obs[off + 5 + state.mission - 1] = 1.0
    return obs


def _front_description(state: GridState, config: GridConfig) -> str:
    front = state.front_pos
    if front == state.door_pos:
        return "open door" if state.door_open else "closed door"
    if config.is_wall(front, state.door_pos):
        return "wall"
    if front == state.key_pos:
        return "key"
    if front == state.goal_pos:
        return "goal"
    return "empty cell"


_PROMPT = (
    "The red agent is in a {w}x{h} grid environment surrounded by walls. "
    "Each grid cell is identified by coordinates (i, j), where i denotes the column and j denotes the row. "
    "The agent can turn left (action 0), turn right (action 1), move forward (action 2), "
    "pick up key (action 3), and open door (action 4). "
    "The agent can face right (0), down (1), left (2), or up (3). "
    "The agent cannot pass through walls. "
    "It can open the door if it has the key and is facing the closed door, "
    "and it can pick up the key when facing it. "
    "The agent needs to find the shortest route to key or door and then pickup the key or open the door. "
    "Consider the direction as the way the agent is facing, not the way we are seeing the agent, "
    "to avoid mixing right and left. "
    "In this state, the agent is at position ({ac}, {ar}), the agent direction is {glyph} "
    "and agent's direction number is {d}, and the forward object is {front}, "
    "and the key position is {key}, the key is {carry}being carried by the agent, "
    "the door is at position ({dc}, {dr}), the goal is at position ({gc}, {gr}), "
    "the door is {door_open} open, and the mission is {mission}. "
    "What is the optimal action for the agent to take in this state to accomplish the mission?"
    "just say the optimal action number"
)


def render_prompt(state: GridState, config: GridConfig) -> str:
    key = "carried" if state.key_pos is None else f"({state.key_pos[0]}, {state.key_pos[1]})"
    return _PROMPT.format(
        w=config.room_width, h=config.room_height,
        ac=state.agent_pos[0], ar=state.agent_pos[1],
        glyph=DIR_GLYPH[state.agent_dir], d=state.agent_dir,
        front=_front_description(state, config), key=key,
        carry="" if state.carrying_key else "not ",
        dc=state.door_pos[0], dr=state.door_pos[1],
        gc=state.goal_pos[0], gr=state.goal_pos[1],
        door_open=state.door_open, mission=MISSION_TEXT[state.mission],
    )


def prompt_hash(text: str) -> str:
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def check_invariants(state: GridState, config: GridConfig) -> None:
    """Raise AssertionError if ``state`` breaks a structural invariant."""
    assert state.carrying_key == (state.key_pos is None), "carry flag disagrees with key position"
    if state.mission == MISSION_KEY:
        assert not state.carrying_key and not state.door_open
    elif state.mission == MISSION_DOOR:
        assert state.carrying_key and not state.door_open
    else:
        assert state.mission == MISSION_GOAL and state.door_open
    assert not config.is_wall(state.agent_pos, state.door_pos), "agent inside a wall"
    if state.agent_pos[0] > config.wall_col:
        assert state.door_open, "agent in the right room behind a closed door"
    if state.agent_pos == state.door_pos:
        assert state.door_open
    assert 0 <= state.agent_dir < 4


class UnlockPickupEnv:
    """Stateful wrapper used by the training loop; caches cell planes per layout."""

    def __init__(self, config: GridConfig, layout_rng: np.random.Generator):
        self.config = config
        self.layout_rng = layout_rng
        self.state: Optional[GridState] = None
        self._planes: dict = {}

    def reset(self) -> GridState:
        self.state = new_env(self.config, self.layout_rng)
        self._planes.clear()
        return self.state

    def observe(self) -> np.ndarray:
        s = self.state
        key = (s.key_pos is None, s.door_open)
        planes = self._planes.get(key)
        if planes is None:
            planes = self._planes[key] = cell_planes(s, self.config)
        return encode_observation(s, self.config, planes)

    def step(self, action: int) -> StepOutcome:
        self.state, outcome = step(self.state, action, self.config)
        return outcome
