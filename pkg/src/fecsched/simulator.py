"""Seeded Monte Carlo episode runner with per-packet delay accounting.

Simulation is state-level: every received coded packet counts as innovative
while the receiver still misses packets, so the (n, w, d) transitions are
exact and no finite-field arithmetic is needed.
"""

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .model import Action, SystemState, resolve_transition
from .belief import (
    FeedbackWindow,
    advance_feedback_window,
    initial_belief,
    reconstruct_belief,
    update_no_feedback,
)
from .policies import (
    Policy,
    PolicyContext,
    StaticSchedulePolicy,
    compile_open_loop,
    make_policy,
)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """Scramble a 64-bit seed (splitmix64 finalizer)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trial_seed(base_seed: int, trial_index: int) -> int:
    return splitmix64(base_seed + trial_index)


@dataclass
class SlotRecord:
    slot: int
    action: Action
    erased: bool
    state: SystemState  # true state after the slot


@dataclass
class EpisodeTrace:
    """Per-slot log plus the per-packet ledger of an episode."""

    block_size: int
    slots: List[SlotRecord] = field(default_factory=list)
    first_transmit: List[int] = field(default_factory=list)
    decode_slot: List[int] = field(default_factory=list)
    deliver_slot: List[int] = field(default_factory=list)

    def num_slots(self) -> int:
        return len(self.slots)

    def final_state(self) -> SystemState:
        return self.slots[-1].state

    def average_e2e(self) -> float:
        return sum(self.deliver_slot) / self.block_size

    def to_text(self) -> str:
        lines = [
            f"{r.slot} {r.action.symbol} {int(r.erased)} "
            f"{r.state.n}/{r.state.w}/{r.state.d}"
            for r in self.slots
        ]
        return "\n".join(lines) + "\n"

    def delays_csv(self) -> str:
        lines = ["packet,Dq,Dc,Dd,De2e"]
        for i, (dq, dc, dd, de2e) in enumerate(compute_delays(self), start=1):
            lines.append(f"{i},{dq},{dc},{dd},{de2e}")
        return "\n".join(lines) + "\n"


def compute_delays(
    trace: EpisodeTrace, sequential_arrivals: bool = False
) -> List[Tuple[int, int, int, int]]:
    """Per-packet (queueing, decoding, in-order delivery, end-to-end) delays.

    Slot-inclusive convention: the slot in which an event happens counts
    toward the corresponding delay.  With ``sequential_arrivals`` the i-th
    packet is treated as generated in slot i rather than at time 0, which
    shifts the queueing delay in reporting only.
    """
    n_packets = trace.block_size
    if len(trace.first_transmit) != n_packets or any(
        s <= 0 for s in trace.first_transmit + trace.decode_slot + trace.deliver_slot
    ):
        raise ValueError("trace is incomplete")
    rows = []
    for i in range(n_packets):
        dq = trace.first_transmit[i] - 1
        if sequential_arrivals:
            dq -= i
        dc = trace.decode_slot[i] - trace.first_transmit[i] + 1
        dd = trace.deliver_slot[i] - trace.decode_slot[i]
        rows.append((dq, dc, dd, dq + dc + dd))
    return rows


@dataclass
class RunConfig:
    """A reproducible batch of episodes."""

    params: object
    policy: str = "mv"
    policy_kwargs: dict = field(default_factory=dict)
    trials: int = 1000
    base_seed: int = 0
    sequential_arrivals: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def _simulate(
    policy: Policy,
    params,
    rng: Optional[random.Random] = None,
    erasures: Optional[Set[int]] = None,
    check_support: bool = False,
) -> EpisodeTrace:
    """Run one episode to absorption and fill the delay ledger.

    Erasures come from ``rng`` (independent per slot with probability p)
    unless an explicit slot set is given for deterministic replay.
    """
    n_packets = params.block_size
    p = params.erasure_prob
    cap = params.slot_cap()
    has_fb = params.has_feedback
    track_belief = policy.uses_belief and not has_fb

    trace = EpisodeTrace(
        block_size=n_packets,
        first_transmit=[0] * n_packets,
        decode_slot=[0] * n_packets,
        deliver_slot=[0] * n_packets,
    )
    state = SystemState(0, 0, 0)
    belief = initial_belief() if track_belief else None
    window = FeedbackWindow(SystemState(0, 0, 0), ()) if has_fb else None
    outcomes: Dict[int, bool] = {}  # slot -> received, awaiting feedback
    waiting: List[int] = []  # packet indices at the receiver, undelivered
    terminal = params.terminal_state
    slot = 1
    while state != terminal:
        if slot > cap:
            raise RuntimeError(
                f"episode exceeded {cap} slots at state {state}; "
                "the policy appears degenerate"
            )
        if has_fb and slot >= params.feedback_delay + 2:
            z = int(outcomes.pop(slot - params.feedback_delay - 1))
            window = advance_feedback_window(window, None, z, params)

        ctx = PolicyContext(
            slot=slot,
            params=params,
            belief=(
                belief
                if track_belief
                else (
                    reconstruct_belief(window, params)
                    if has_fb and policy.uses_belief
                    else None
                )
            ),
            window=window,
            infos_sent=state.n,
        )
        action = Action(policy.select_action(ctx))
        if action is Action.SEND_INFO and state.n >= n_packets:
            raise RuntimeError(f"{policy.name} sent an info packet at n={n_packets}")
        if check_support and ctx.belief is not None:
            if ctx.belief.prob(state.w, state.d) <= 0.0:
                raise AssertionError(
                    f"true state {state} left the belief support in slot {slot}"
                )

        if erasures is not None:
            erased = slot in erasures
        else:
            erased = rng.random() < p
        received = not erased

        # per-packet ledger; `waiting` mirrors the w component of the state
        if action is Action.SEND_INFO:
            pkt = state.n  # zero-based index of the packet being sent
            trace.first_transmit[pkt] = slot
            if received and state.w == 0:
                trace.decode_slot[pkt] = slot
                trace.deliver_slot[pkt] = slot
            else:
                if received:
                    trace.decode_slot[pkt] = slot
                waiting.append(pkt)
        elif received and state.w > 0 and state.d == state.w - 1:
            # the block closes: everything waiting decodes/delivers now
            for pkt in waiting:
                if trace.decode_slot[pkt] == 0:
                    trace.decode_slot[pkt] = slot
                trace.deliver_slot[pkt] = slot
            waiting.clear()

        state = resolve_transition(state, action, received)
        assert len(waiting) == state.w
        trace.slots.append(SlotRecord(slot, action, erased, state))

        if track_belief:
            belief = update_no_feedback(belief, action, params)
        if has_fb:
            window = advance_feedback_window(window, action, None, params)
            outcomes[slot] = received
        slot += 1
    return trace


def run_episode(config: RunConfig, trial_index: int) -> EpisodeTrace:
    policy = make_policy(config.policy, config.params, **config.policy_kwargs)
    policy.reset()
    rng = random.Random(trial_seed(config.base_seed, trial_index))
    try:
        return _simulate(policy, config.params, rng=rng)
    except Exception as exc:
        raise RuntimeError(f"trial {trial_index} failed: {exc}") from exc


def replay_episode(
    policy: Policy, params, erasures: Set[int]
) -> EpisodeTrace:
    """Deterministic single episode with a fixed set of erased slots."""
    policy.reset()
    return _simulate(policy, params, erasures=erasures)


@dataclass
class Summary:
    mean: float
    std: float
    ci95: float
    trials: int
    per_trial: np.ndarray


def monte_carlo(config: RunConfig) -> Summary:
    """Mean per-episode average end-to-end latency over seeded trials."""
    params = config.params
    policy = make_policy(config.policy, params, **config.policy_kwargs)
    if policy.open_loop_for(params):
        # the whole schedule is fixed, so plan once and replay it cheaply
        if not isinstance(policy, StaticSchedulePolicy):
            policy = StaticSchedulePolicy(params, compile_open_loop(policy, params))
    values = np.empty(config.trials)
    for trial in range(config.trials):
        policy.reset()
        rng = random.Random(trial_seed(config.base_seed, trial))
        try:
            trace = _simulate(policy, params, rng=rng)
        except Exception as exc:
            raise RuntimeError(f"trial {trial} failed: {exc}") from exc
        values[trial] = trace.average_e2e()
    std = float(values.std(ddof=1)) if config.trials > 1 else 0.0
    return Summary(
        mean=float(values.mean()),
        std=std,
        ci95=1.96 * std / math.sqrt(config.trials),
        trials=config.trials,
        per_trial=values,
    )
