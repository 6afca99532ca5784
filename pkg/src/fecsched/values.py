"""State and belief values: closed forms, bounds, and an independent solver.

Two closed forms anchor everything: the exact optimal value of the states
reached once every information packet has been sent (only coded packets
remain), and the optimal value of any state under full observability.  A
plain tabular value-iteration solver double-checks both.

For belief states the fully-observable values give an upper bound on the
optimal value, and the value of the greedy majority-vote continuation
(ignoring any future observations) gives a lower bound.  Lookahead search
propagates these bounds up the belief tree.
"""

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np

from .model import (
    Action,
    SystemState,
    enumerate_all_states,
    enumerate_states_for_n,
    legal_actions,
    require_valid_state,
    support_size,
    transition_distribution,
)
from .belief import BeliefVector, update_no_feedback

VALUE_ITERATION_MAX_BLOCK = 60


@dataclass(frozen=True)
class BoundPair:
    """Lower/upper estimates of an optimal belief value (both nonpositive)."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower <= self.upper + 1e-9):
            raise ValueError(f"bound sandwich violated: L={self.lower} > U={self.upper}")
        if self.upper > 1e-9:
            raise ValueError(f"values are nonpositive, got U={self.upper}")


def final_state_value(w: int, d: int, params) -> float:
    """Optimal value once all info packets are out: -w(w-d)/(1-p)."""
    if w == 0:
        if d != 0:
            raise ValueError("d must be 0 when w is 0")
        return 0.0
    if not 0 <= d < w <= params.block_size:
        raise ValueError(f"invalid (w, d) = ({w}, {d})")
    return -w * (w - d) / (1.0 - params.erasure_prob)


def full_mdp_value(s: SystemState, params) -> float:
    """Optimal value of ``s`` if the receiver status were fully observable."""
    require_valid_state(s, params.block_size)
    big_n = params.block_size
    n, w, d = s
    rem = big_n - n
    return -((rem + w) * (w - d) + rem * (rem + 1) / 2.0) / (1.0 - params.erasure_prob)


# Per-level value vectors, cached as p-independent integer numerators.


@lru_cache(maxsize=None)
def _w_vector(n: int) -> np.ndarray:
    return np.array([s.w for s in enumerate_states_for_n(n)], dtype=float)


@lru_cache(maxsize=None)
def _final_numerator(n: int) -> np.ndarray:
    return np.array(
        [s.w * (s.w - s.d) for s in enumerate_states_for_n(n)], dtype=float
    )


@lru_cache(maxsize=None)
def _mdp_numerator(block_size: int, n: int) -> np.ndarray:
    rem = block_size - n
    tail = rem * (rem + 1) / 2.0
    return np.array(
        [(rem + s.w) * (s.w - s.d) + tail for s in enumerate_states_for_n(n)],
        dtype=float,
    )


def terminal_slice_values(params) -> np.ndarray:
    return -_final_numerator(params.block_size) / (1.0 - params.erasure_prob)


def mdp_value_vector(n: int, params) -> np.ndarray:
    return -_mdp_numerator(params.block_size, n) / (1.0 - params.erasure_prob)


def expected_reward(b: BeliefVector, params) -> float:
    """Expected single-slot reward under ``b`` (action-independent)."""
    expected_w = float(_w_vector(b.n) @ b.probs)
    return -(params.block_size - b.n + expected_w)


def belief_value_upper(b: BeliefVector, params) -> float:
    """Expectation of the fully-observable optimal values under ``b``."""
    return float(mdp_value_vector(b.n, params) @ b.probs)


def majority_vote_action(b: BeliefVector, params) -> Action:
    """Send an information packet iff more than half the mass is on the
    fully-decoded state (strict: ties go to the coded packet)."""
    if b.n >= params.block_size:
        return Action.SEND_CODED
    return Action.SEND_INFO if float(b.probs[0]) > 0.5 else Action.SEND_CODED


def belief_value_lower(
    b: BeliefVector, params, feedback_mode: bool = False
) -> float:
    """Value of the majority-vote continuation from ``b``.

    The belief is rolled forward with no observations injected (also in
    feedback mode), accumulating the expected per-slot reward, until every
    information packet has been sent; the remaining coded-only phase is then
    priced exactly by the final-slice closed form.  The roll-out provably
    reaches that slice: under coded packets the decoded-state mass increases
    strictly toward 1, so the vote flips to SEND_INFO at every level.
    """
    from .belief import _push_coded, _push_info

    n_packets = params.block_size
    p = params.erasure_prob
    probs = b.probs
    n = b.n
    total = 0.0
    cap = params.slot_cap()
    steps = 0
    while n < n_packets:
        total -= (n_packets - n) + float(_w_vector(n) @ probs)
        if probs[0] > 0.5:
            probs = _push_info(probs, n, p)
            n += 1
        else:
            probs = _push_coded(probs, n, p)
        steps += 1
        if steps > cap:
            raise RuntimeError("majority-vote roll-out failed to terminate")
    return total + float(terminal_slice_values(params) @ probs)


def propagate_bounds(
    child_bounds: Sequence[BoundPair],
    weights: Optional[Sequence[float]],
    b: BeliefVector,
    a: Action,
    params,
) -> BoundPair:
    """Back one action edge up: expected immediate reward plus the
    (observation-weighted) child bounds."""
    if weights is None:
        weights = [1.0] * len(child_bounds)
    if len(weights) != len(child_bounds):
        raise ValueError("one weight per child bound required")
    r = expected_reward(b, params)
    lo = r + sum(wt * cb.lower for wt, cb in zip(weights, child_bounds))
    hi = r + sum(wt * cb.upper for wt, cb in zip(weights, child_bounds))
    return BoundPair(lo, hi)


@dataclass
class ValueTable:
    """Optimal values and greedy actions under full observability."""

    params: object
    values: Dict[SystemState, float]
    greedy: Dict[SystemState, Optional[Action]]
    iterations: int

    def value(self, s: SystemState) -> float:
        return self.values[SystemState(*s)]

    def greedy_action(self, s: SystemState) -> Optional[Action]:
        return self.greedy[SystemState(*s)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "w", "d", "value", "greedy_action"])
            for s in sorted(self.values):
                g = self.greedy[s]
                writer.writerow(
                    [s.n, s.w, s.d, f"{self.values[s]:.12g}", "" if g is None else g.symbol]
                )


def value_iteration_oracle(
    params, tol: float = 1e-12, max_iterations: int = 1_000_000
) -> ValueTable:
    """Tabular Bellman fixed-point solve over all states.

    Deliberately plain (synchronous sweeps, explicit successor lists) so it
    can serve as an independent check of the closed forms.
    """
    if params.block_size > VALUE_ITERATION_MAX_BLOCK:
        raise ValueError(
            f"value iteration supports block_size <= {VALUE_ITERATION_MAX_BLOCK}"
        )
    states = enumerate_all_states(params.block_size)
    index = {s: i for i, s in enumerate(states)}
    terminal = params.terminal_state

    action_edges = []  # per state: list of (action, reward, [(succ_idx, prob)])
    for s in states:
        edges = []
        if s != terminal:
            r = -(params.block_size - s.n + s.w)
            for a in legal_actions(s, params.block_size):
                succ = [
                    (index[s2], pr)
                    for s2, pr in transition_distribution(s, a, params)
                ]
                edges.append((a, float(r), succ))
        action_edges.append(edges)

    v = np.zeros(len(states))
    for iteration in range(1, max_iterations + 1):
        v_new = np.zeros(len(states))
        for i, edges in enumerate(action_edges):
            if not edges:
                continue
            v_new[i] = max(
                r + sum(pr * v[j] for j, pr in succ) for _, r, succ in edges
            )
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            break
    else:
        raise RuntimeError(
            "value iteration did not converge; the model guarantees finite values"
        )

    greedy: Dict[SystemState, Optional[Action]] = {}
    for s, edges in zip(states, action_edges):
        if not edges:
            greedy[s] = None
            continue
        best_a, best_q = None, -np.inf
        for a, r, succ in edges:
            q = r + sum(pr * v[j] for j, pr in succ)
            # ties resolve to the coded packet everywhere
            if best_a is None or q > best_q + 1e-12:
                best_a, best_q = a, q
            elif abs(q - best_q) <= 1e-12 and a is Action.SEND_CODED:
                best_a = a
        greedy[s] = best_a
    return ValueTable(
        params=params,
        values={s: float(v[i]) for i, s in enumerate(states)},
        greedy=greedy,
        iterations=iteration,
    )
