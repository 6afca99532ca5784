import random

import pytest
from hypothesis import given, settings, strategies as st

from fecsched.model import (
    Action,
    ProblemParams,
    SystemState,
    enumerate_all_states,
    enumerate_states_for_n,
    is_valid_state,
    legal_actions,
    resolve_transition,
    reward,
    state_space_size,
    support_size,
    transition_distribution,
)


def params(n=2, p=0.3, **kw):
    return ProblemParams(block_size=n, erasure_prob=p, **kw)


def valid_states(max_n=10):
    """Strategy over valid states at block sizes up to max_n."""

    @st.composite
    def _states(draw):
        block = draw(st.integers(1, max_n))
        n = draw(st.integers(0, block))
        w = draw(st.integers(0, n))
        d = draw(st.integers(0, max(w - 1, 0))) if w else 0
        return block, SystemState(n, w, d)

    return _states()


# --- transition kernel ---------------------------------------------------------


def test_transition_info_from_start():
    dist = dict(transition_distribution(SystemState(0, 0, 0), Action.SEND_INFO, params()))
    assert dist == {
        SystemState(1, 0, 0): pytest.approx(0.7),
        SystemState(1, 1, 0): pytest.approx(0.3),
    }


def test_transition_coded_closes_block():
    dist = dict(transition_distribution(SystemState(2, 2, 1), Action.SEND_CODED, params()))
    assert dist == {
        SystemState(2, 0, 0): pytest.approx(0.7),
        SystemState(2, 2, 1): pytest.approx(0.3),
    }


def test_transition_coded_noop_when_nothing_waiting():
    for p in (0.1, 0.5, 0.9):
        dist = dict(
            transition_distribution(SystemState(2, 0, 0), Action.SEND_CODED, params(p=p))
        )
        assert dist == {SystemState(2, 0, 0): 1.0}


def test_transition_info_grows_waiting_set():
    dist = dict(transition_distribution(SystemState(2, 1, 0), Action.SEND_INFO, params(n=3)))
    assert dist == {
        SystemState(3, 2, 1): pytest.approx(0.7),
        SystemState(3, 2, 0): pytest.approx(0.3),
    }


def test_info_illegal_at_block_end():
    assert legal_actions(SystemState(2, 1, 0), 2) == (Action.SEND_CODED,)
    assert set(legal_actions(SystemState(1, 1, 0), 2)) == {
        Action.SEND_INFO,
        Action.SEND_CODED,
    }
    with pytest.raises(ValueError):
        transition_distribution(SystemState(2, 0, 0), Action.SEND_INFO, params())


def test_reward_examples():
    assert reward(SystemState(1, 0, 0), Action.SEND_INFO, params()) == -1
    assert reward(SystemState(1, 1, 0), Action.SEND_CODED, params()) == -2
    assert reward(SystemState(2, 0, 0), Action.SEND_CODED, params()) == 0
    # action-independent
    assert reward(SystemState(1, 1, 0), Action.SEND_INFO, params()) == -2


# --- state enumeration ---------------------------------------------------------


def test_state_space_size_examples():
    assert state_space_size(1) == 2
    assert state_space_size(2) == 6
    assert state_space_size(100) == 171_800


def test_state_space_size_matches_enumeration():
    # the closed-form count covers the levels n = 1..N reached after the
    # first transmission; full enumeration adds the start state (0,0,0)
    for block in range(1, 11):
        assert state_space_size(block) == sum(
            support_size(n) for n in range(1, block + 1)
        )
        assert state_space_size(block) == len(enumerate_all_states(block)) - 1


def test_canonical_ordering():
    assert enumerate_states_for_n(0) == (SystemState(0, 0, 0),)
    assert enumerate_states_for_n(2) == (
        SystemState(2, 0, 0),
        SystemState(2, 1, 0),
        SystemState(2, 2, 1),
        SystemState(2, 2, 0),
    )
    assert len(enumerate_states_for_n(3)) == 7 == support_size(3)


def test_enumeration_is_valid_and_unique():
    for block in range(1, 8):
        seen = set()
        for s in enumerate_all_states(block):
            assert is_valid_state(s, block)
            assert s not in seen
            seen.add(s)


# --- kernel properties ---------------------------------------------------------


@given(valid_states(), st.sampled_from([0.1, 0.3, 0.5, 0.9]))
@settings(max_examples=200)
def test_transitions_are_stochastic_and_stay_valid(block_state, p):
    block, s = block_state
    prm = params(n=block, p=p)
    for a in legal_actions(s, block):
        dist = transition_distribution(s, a, prm)
        assert len(dist) <= 2
        assert sum(pr for _, pr in dist) == pytest.approx(1.0, abs=1e-12)
        for s2, pr in dist:
            assert pr >= 0
            assert is_valid_state(s2, block)
            assert s2.n >= s.n
            assert s2.w <= s2.n


def test_every_trajectory_sends_each_packet_once():
    rng = random.Random(5)
    for block in (1, 3, 7):
        prm = params(n=block, p=0.4)
        for _ in range(20):
            s = SystemState(0, 0, 0)
            infos = 0
            guard = 0
            while s != prm.terminal_state:
                acts = legal_actions(s, block)
                a = rng.choice(acts)
                if a is Action.SEND_CODED and s.w == 0 and s.n < block:
                    a = Action.SEND_INFO  # avoid the deterministic self-loop
                infos += a is Action.SEND_INFO
                s = resolve_transition(s, a, rng.random() >= 0.4)
                guard += 1
                assert guard < 10_000
            assert infos == block


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(block_size=0, erasure_prob=0.3)
    with pytest.raises(ValueError):
        ProblemParams(block_size=2, erasure_prob=0.0)
    with pytest.raises(ValueError):
        ProblemParams(block_size=2, erasure_prob=1.0)
    with pytest.raises(ValueError):
        ProblemParams(block_size=2, erasure_prob=0.3, discount=0.9)
