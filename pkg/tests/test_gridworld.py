from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bruteforce import explore
from conftest import make_state
from uashape.gridworld import (
    CELL_TYPES,
    FORWARD,
    OPEN_DOOR,
    PICKUP,
    TURN_LEFT,
    TURN_RIGHT,
    GridConfig,
    GridState,
    check_invariants,
    encode_observation,
    is_terminal,
    new_env,
    observation_length,
    render_prompt,
    step,
)


def test_grid_dimensions():
    cfg = GridConfig(4, 4)
    assert (cfg.width, cfg.height) == (11, 6)
    assert GridConfig(3, 3).n_cells == 9 * 5


def test_config_validation():
    with pytest.raises(ValueError):
        GridConfig(2, 3)
    with pytest.raises(ValueError):
        GridConfig(3, 3, max_steps=10)
    assert GridConfig(3, 3).max_steps == 8 * 45


def test_layout_deterministic_per_seed(cfg3):
    a = new_env(cfg3, np.random.default_rng(7))
    b = new_env(cfg3, np.random.default_rng(7))
    assert a == b


@pytest.mark.parametrize("seed", range(50))
def test_initial_state(seed, cfg4):
    s = new_env(cfg4, np.random.default_rng(seed))
    assert s.mission == 1 and not s.carrying_key and not s.door_open and s.step_count == 0
    assert s.agent_pos in cfg4.left_room() and s.key_pos in cfg4.left_room()
    assert s.agent_pos != s.key_pos
    assert s.goal_pos in cfg4.right_room()
    assert s.door_pos in cfg4.door_slots()
    check_invariants(s, cfg4)


def test_turns(cfg3):
    s = make_state(agent_dir=0)
    s1, out = step(s, TURN_LEFT, cfg3)
    assert s1.agent_dir == 3 and out.reward == 0.0
    s2, _ = step(s, TURN_RIGHT, cfg3)
    assert s2.agent_dir == 1


def test_forward_into_wall_is_blocked(cfg3):
    s = make_state(agent_pos=(1, 1), agent_dir=3)
    s1, out = step(s, FORWARD, cfg3)
    assert s1.agent_pos == (1, 1) and out.reward == 0.0 and s1.step_count == 1


def test_forward_blocked_by_key_and_closed_door(cfg3):
    s = make_state(agent_pos=(2, 2), agent_dir=0, key_pos=(3, 2))
    assert step(s, FORWARD, cfg3)[0].agent_pos == (2, 2)
    s = make_state(agent_pos=(3, 2), agent_dir=0, key_pos=(1, 1))
    assert step(s, FORWARD, cfg3)[0].agent_pos == (3, 2)


def test_pickup_facing_key(cfg3):
    s = make_state(agent_pos=(2, 2), agent_dir=0, key_pos=(3, 2))
    s1, out = step(s, PICKUP, cfg3)
    assert out.reward == 0.5 and out.mission_completed == 1
    assert s1.mission == 2 and s1.carrying_key and s1.key_pos is None


def test_pickup_not_facing_key_penalised(cfg3):
    s = make_state(agent_pos=(1, 2), agent_dir=0, key_pos=(3, 2))
    s1, out = step(s, PICKUP, cfg3)
    assert out.reward == -0.02 and not out.done
    assert s1 == replace(s, step_count=1)


def test_open_door(cfg3):
    s = make_state(agent_pos=(3, 2), agent_dir=0, key_pos=None, carrying_key=True, mission=2)
    s1, out = step(s, OPEN_DOOR, cfg3)
    assert out.reward == 0.5 and s1.door_open and s1.mission == 3
    # a second attempt no longer qualifies
    _, out2 = step(s1, OPEN_DOOR, cfg3)
    assert out2.reward == -0.02


def test_open_door_without_key_penalised(cfg3):
    s = make_state(agent_pos=(3, 2), agent_dir=0, key_pos=(1, 1))
    assert step(s, OPEN_DOOR, cfg3)[1].reward == -0.02


def test_goal_reward_at_half_horizon():
    cfg = GridConfig(3, 3, max_steps=200)
    s = make_state(agent_pos=(5, 2), agent_dir=0, key_pos=None, carrying_key=True,
                   door_open=True, mission=3, step_count=99)
    s1, out = step(s, FORWARD, cfg)
    assert s1.step_count == 100 and out.done and not out.truncated
    assert out.mission_completed == 3
    assert out.reward == pytest.approx(0.7, abs=1e-12)


def test_truncation(cfg3):
    s = make_state(step_count=cfg3.max_steps - 1)
    s1, out = step(s, TURN_LEFT, cfg3)
    assert out.done and out.truncated and out.mission_completed is None
    with pytest.raises(RuntimeError):
        step(s1, TURN_LEFT, cfg3)


def test_bad_action(cfg3):
    with pytest.raises(ValueError):
        step(make_state(), 5, cfg3)


def test_encoding_length_and_values(cfg3):
    s = make_state()
    v = encode_observation(s, cfg3)
    assert v.shape == (observation_length(cfg3),) == ((len(CELL_TYPES) + 1) * 45 + 8,)
    assert set(np.unique(v)) <= {0.0, 1.0}
    assert np.array_equal(v, encode_observation(s, cfg3))


def test_encoding_direction_block(cfg3):
    a = encode_observation(make_state(agent_dir=0), cfg3)
    b = encode_observation(make_state(agent_dir=2), cfg3)
    diff = np.flatnonzero(a != b)
    start = (len(CELL_TYPES) + 1) * cfg3.n_cells
    assert set(diff) <= set(range(start, start + 4)) and len(diff) == 2


def test_encoding_length_constant_over_episode(cfg3):
    rng = np.random.default_rng(3)
    s = new_env(cfg3, rng)
    n = observation_length(cfg3)
    for _ in range(200):
        if is_terminal(s, cfg3):
            break
        assert encode_observation(s, cfg3).shape == (n,)
        s, _ = step(s, int(rng.integers(5)), cfg3)


def test_prompt_matches_figure_state():
    cfg = GridConfig(4, 4)
    s = GridState(agent_pos=(4, 2), agent_dir=2, carrying_key=False, door_open=False,
                  key_pos=(2, 1), door_pos=(5, 3), goal_pos=(7, 1))
    text = render_prompt(s, cfg)
    assert "The red agent is in a 4x4 grid environment" in text
    assert "the agent is at position (4, 2)" in text
    assert "direction number is 2" in text
    assert "the agent direction is <" in text
    assert "the forward object is empty cell" in text
    assert "the key position is (2, 1)" in text
    assert "the door is False open" in text
    assert "the mission is pick up key" in text
    assert text == render_prompt(s, cfg)


def test_prompt_later_missions(cfg3):
    s = make_state(agent_pos=(3, 2), key_pos=None, carrying_key=True, mission=2)
    text = render_prompt(s, cfg3)
    assert "the mission is open door" in text and "closed door" in text
    assert "the key is being carried" in text


def test_exhaustive_reachable_states_satisfy_invariants(cfg3):
    for seed in range(20):
        start = new_env(cfg3, np.random.default_rng(seed))
        seen, _ = explore(start, cfg3)
        missions = {s.mission for s in seen.values()}
        assert missions == {1, 2, 3}
        for s in seen.values():
            check_invariants(s, cfg3)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), actions=st.lists(st.integers(0, 4), min_size=1, max_size=400))
def test_replay_and_return_bounds(seed, actions):
    cfg = GridConfig(3, 3)

    def play():
        s = new_env(cfg, np.random.default_rng(seed))
        trace = []
        for a in actions:
            s, out = step(s, a, cfg)
            trace.append((s, out))
            if out.done:
                break
        return trace

    first, second = play(), play()
    assert first == second
    total = sum(o.reward for _, o in first)
    assert -0.02 * cfg.max_steps - 1e-9 <= total <= 2.2
    missions = [s.mission for s, _ in first]
    assert missions == sorted(missions)
    for (s, o) in first:
        assert -0.02 <= o.reward <= 1.2
        if o.done:
            assert o.truncated or o.mission_completed == 3
        check_invariants(s, cfg)
    # mission only moves on a completion event
    prev = 1
    for s, o in first:
        if s.mission != prev:
            assert o.mission_completed == prev
            prev = s.mission
