"""Transmitter-side belief tracking over ``(n, w, d)`` states.

Without feedback the belief is pushed forward through the transition kernel
after every transmission.  With delayed feedback the transmitter instead
tracks the last exactly-known state (the *anchor*) plus the actions whose
receipt flags are still in flight, and rebuilds the belief by pushing a
point mass on the anchor forward through those pending actions.

Beliefs are stored dense over the canonical state ordering of
:func:`fecsched.model.enumerate_states_for_n`; every update returns a fresh
vector, so belief values are safe to share across concurrent tree workers.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import (
    Action,
    SystemState,
    enumerate_states_for_n,
    resolve_transition,
    state_index,
    support_size,
    transition_distribution,
)

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class BeliefVector:
    """Probability distribution over the states reachable after ``n`` infos."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (support_size(self.n),):
            raise ValueError(
                f"belief over n={self.n} must have {support_size(self.n)} entries, "
                f"got {self.probs.shape}"
            )

    def prob(self, w: int, d: int) -> float:
        return float(self.probs[state_index(w, d)])

    def support_states(self):
        return enumerate_states_for_n(self.n)

    def as_dict(self) -> dict:
        return {
            s: float(p) for s, p in zip(self.support_states(), self.probs) if p > 0.0
        }

    def validate(self, tol: float = NORMALIZATION_TOL) -> None:
        if np.any(self.probs < -tol):
            raise ValueError(f"negative belief entry: min={self.probs.min()}")
        total = float(self.probs.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(f"belief mass {total} deviates from 1 by {total - 1.0}")

    def entropy(self) -> float:
        pos = self.probs[self.probs > 0.0]
        return float(-(pos * np.log(pos)).sum())

    def to_text(self) -> str:
        """One ``w d prob`` line per support state, canonical order."""
        lines = [
            f"{s.w} {s.d} {p:.17g}" for s, p in zip(self.support_states(), self.probs)
        ]
        return "\n".join(lines)


def initial_belief() -> BeliefVector:
    return BeliefVector(0, np.array([1.0]))


def point_mass(state: SystemState) -> BeliefVector:
    probs = np.zeros(support_size(state.n))
    probs[state_index(state.w, state.d)] = 1.0
    return BeliefVector(state.n, probs)


def observation_probability(z: int, params) -> float:
    """Receipt flags are i.i.d., so the observation law is state-free."""
    if z not in (0, 1):
        raise ValueError(f"receipt flag must be 0 or 1, got {z}")
    return 1.0 - params.erasure_prob if z == 1 else params.erasure_prob


# --- precomputed index maps for the two push-forward updates -----------------
#
# Both updates are sparse stochastic-matrix applications; gathering through
# padded index arrays keeps them to a handful of vectorized ops.  A sentinel
# index pointing at an appended zero marks "no source".


@lru_cache(maxsize=None)
def _coded_sources(n: int):
    m = support_size(n)
    src = np.full(m, m, dtype=np.intp)
    for w in range(1, n + 1):
        for d in range(w - 1, 0, -1):  # (w, d) receives from (w, d-1), one index up
            src[state_index(w, d)] = state_index(w, d - 1)
    tops = np.array([state_index(w, w - 1) for w in range(1, n + 1)], dtype=np.intp)
    return src, tops


@lru_cache(maxsize=None)
def _info_sources(n: int):
    m_new = support_size(n + 1)
    m_old = support_size(n)
    src_recv = np.full(m_new, m_old, dtype=np.intp)
    src_erase = np.full(m_new, m_old, dtype=np.intp)
    src_recv[0] = 0  # (0,0) stays decoded on a successful receipt
    for w in range(1, n + 2):
        for d in range(w - 1, -1, -1):
            j = state_index(w, d)
            if d >= 1:
                src_recv[j] = state_index(w - 1, d - 1)
            if w - 1 == 0 or d <= w - 2:
                src_erase[j] = state_index(w - 1, d)
    return src_recv, src_erase


def _push_coded(probs: np.ndarray, n: int, p: float) -> np.ndarray:
    if n == 0:
        return probs.copy()
    src, tops = _coded_sources(n)
    padded = np.append(probs, 0.0)
    new = p * probs + (1.0 - p) * padded[src]
    new[0] = probs[0] + (1.0 - p) * padded[tops].sum()
    return new


def _push_info(probs: np.ndarray, n: int, p: float) -> np.ndarray:
    src_recv, src_erase = _info_sources(n)
    padded = np.append(probs, 0.0)
    return (1.0 - p) * padded[src_recv] + p * padded[src_erase]


def update_no_feedback(b: BeliefVector, a: Action, params) -> BeliefVector:
    """Push the belief through one action with no observation.

    Both branches are probability-preserving by construction; the result is
    not renormalized.
    """
    a = Action(a)
    p = params.erasure_prob
    if a is Action.SEND_INFO:
        if b.n >= params.block_size:
            raise ValueError("SEND_INFO illegal: all information packets sent")
        return BeliefVector(b.n + 1, _push_info(b.probs, b.n, p))
    return BeliefVector(b.n, _push_coded(b.probs, b.n, p))


# --- delayed feedback ---------------------------------------------------------


@dataclass(frozen=True)
class FeedbackWindow:
    """Exactly-known past state plus the actions still awaiting receipt flags."""

    anchor_state: SystemState
    pending_actions: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "pending_actions", tuple(Action(a) for a in self.pending_actions)
        )


def reconstruct_belief(window: FeedbackWindow, params) -> BeliefVector:
    """Belief implied by the anchor state and the unresolved action tail."""
    b = point_mass(window.anchor_state)
    for a in window.pending_actions:
        b = update_no_feedback(b, a, params)
    return b


def advance_feedback_window(
    window: FeedbackWindow,
    new_action: Optional[Action] = None,
    observation: Optional[int] = None,
    params=None,
) -> FeedbackWindow:
    """Enqueue this slot's action and, if a receipt flag arrived, resolve the
    oldest pending action against it, advancing the anchor one exact step."""
    pending = window.pending_actions
    anchor = window.anchor_state
    if new_action is not None:
        pending = pending + (Action(new_action),)
    if observation is not None:
        if observation not in (0, 1):
            raise ValueError(f"receipt flag must be 0 or 1, got {observation}")
        if not pending:
            raise ValueError("observation arrived with no pending action")
        anchor = resolve_transition(anchor, pending[0], received=bool(observation))
        pending = pending[1:]
    return FeedbackWindow(anchor, pending)
