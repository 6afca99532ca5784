"""Core state/action/reward model of the coded-transmission decision process.

The transmitter moves a block of ``N`` information packets over an i.i.d.
erasure channel and must decide, slot by slot, whether to send the next
information packet or a coded (random linear combination) packet.  Progress
is summarized by the triple ``(n, w, d)``:

* ``n`` -- information packets already transmitted,
* ``w`` -- packets sitting at the receiver waiting for in-order delivery,
* ``d`` -- innovative packets the receiver holds toward decoding them.

All functions here are pure and operate on value types, so they are safe to
call from any number of concurrent workers.
"""

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import NamedTuple, Optional


class Action(IntEnum):
    """Per-slot coding decision."""

    SEND_INFO = 0
    SEND_CODED = 1

    @property
    def symbol(self) -> str:
        return "I" if self is Action.SEND_INFO else "C"


class SystemState(NamedTuple):
    n: int  # information packets transmitted so far
    w: int  # packets waiting at the receiver for in-order delivery
    d: int  # innovative packets held toward decoding the waiting set


@dataclass(frozen=True)
class ProblemParams:
    """Static problem description shared by every module.

    ``feedback_delay`` is the number of slots between a packet's
    transmission and the arrival of its receipt flag at the transmitter;
    ``None`` means no feedback at all.  ``coded_budget`` caps the number of
    coded packets considered by the exhaustive schedule search; when left
    unset a budget slightly above the expected number of erasures is used.
    """

    block_size: int
    erasure_prob: float
    feedback_delay: Optional[int] = None
    search_depth: int = 2
    coded_budget: Optional[int] = None
    discount: float = 1.0
    slot_cap_factor: float = 100.0

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")
        if not 0.0 < self.erasure_prob < 1.0:
            raise ValueError(
                f"erasure_prob must be in (0, 1), got {self.erasure_prob}"
            )
        if self.feedback_delay is not None and self.feedback_delay < 0:
            raise ValueError("feedback_delay must be >= 0 or None")
        if self.search_depth < 1:
            raise ValueError("search_depth must be >= 1")
        if self.coded_budget is not None and self.coded_budget < 0:
            raise ValueError("coded_budget must be >= 0")
        if self.discount != 1.0:
            # Episodic problem with an absorbing terminal state and
            # nonpositive rewards: values are finite without discounting.
            raise ValueError("discount is fixed at 1.0")

    @property
    def terminal_state(self) -> SystemState:
        return SystemState(self.block_size, 0, 0)

    @property
    def has_feedback(self) -> bool:
        return self.feedback_delay is not None

    def effective_coded_budget(self) -> int:
        if self.coded_budget is not None:
            return self.coded_budget
        n, p = self.block_size, self.erasure_prob
        return math.ceil(n * p / (1.0 - p)) + 1

    def slot_cap(self) -> int:
        """Episode length above which a policy is considered degenerate."""
        return max(
            16,
            int(self.slot_cap_factor * self.block_size / (1.0 - self.erasure_prob)),
        )


def is_valid_state(s: SystemState, block_size: int) -> bool:
    n, w, d = s
    if not 0 <= n <= block_size:
        return False
    if w == 0:
        return d == 0
    return 0 <= d < w <= n


def require_valid_state(s: SystemState, block_size: int) -> None:
    if not is_valid_state(s, block_size):
        raise ValueError(f"invalid state {tuple(s)} for block_size={block_size}")


def legal_actions(s: SystemState, block_size: int) -> tuple:
    """SEND_INFO is only legal while information packets remain."""
    if s.n < block_size:
        return (Action.SEND_INFO, Action.SEND_CODED)
    return (Action.SEND_CODED,)


def resolve_transition(s: SystemState, a: Action, received: bool) -> SystemState:
    """Deterministic successor of ``s`` once the receipt flag is known.

    A coded packet sent with an empty waiting set carries no information,
    so both channel outcomes leave the state unchanged.
    """
    n, w, d = s
    if a is Action.SEND_INFO:
        if w == 0:
            return SystemState(n + 1, 0, 0) if received else SystemState(n + 1, 1, 0)
        return (
            SystemState(n + 1, w + 1, d + 1)
            if received
            else SystemState(n + 1, w + 1, d)
        )
    if w == 0:
        return s
    if not received:
        return s
    if d == w - 1:
        return SystemState(n, 0, 0)
    return SystemState(n, w, d + 1)


def transition_distribution(s, a, params):
    """Successor distribution for taking ``a`` at ``s``.

    Returns a tuple of ``(state, probability)`` pairs (at most two); the
    probabilities sum to one.
    """
    require_valid_state(s, params.block_size)
    a = Action(a)
    if a is Action.SEND_INFO and s.n >= params.block_size:
        raise ValueError(f"SEND_INFO illegal at {tuple(s)}: all packets sent")
    p = params.erasure_prob
    good = resolve_transition(s, a, received=True)
    bad = resolve_transition(s, a, received=False)
    if good == bad:
        return ((good, 1.0),)
    return ((good, 1.0 - p), (bad, p))


def reward(s: SystemState, a, params) -> float:
    """Negated count of packets still undelivered during this slot.

    Independent of the action taken; zero exactly at the terminal state.
    """
    require_valid_state(s, params.block_size)
    return -float(params.block_size - s.n + s.w)


def state_space_size(block_size: int) -> int:
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    n = block_size
    return n + n * (n + 1) * (n + 2) // 6


@lru_cache(maxsize=None)
def enumerate_states_for_n(n: int) -> tuple:
    """Canonical ordering of the states reachable after ``n`` info packets.

    ``(n,0,0)`` first, then for each ``w`` = 1..n the states with ``d``
    descending from ``w-1`` to 0.  This ordering is the index contract for
    belief vectors.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    states = [SystemState(n, 0, 0)]
    for w in range(1, n + 1):
        for d in range(w - 1, -1, -1):
            states.append(SystemState(n, w, d))
    return tuple(states)


def support_size(n: int) -> int:
    return n * (n + 1) // 2 + 1


def state_index(w: int, d: int) -> int:
    """Index of ``(w, d)`` inside the canonical per-``n`` ordering."""
    if w == 0:
        return 0
    return 1 + w * (w - 1) // 2 + (w - 1 - d)


def enumerate_all_states(block_size: int) -> tuple:
    states = []
    for n in range(block_size + 1):
        states.extend(enumerate_states_for_n(n))
    return tuple(states)
