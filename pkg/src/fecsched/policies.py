"""Decision rules: majority vote, bounded lookahead search, and baselines.

Every rule is exposed both as a free function operating on a
:class:`PolicyContext` (mirroring how the simulator consults it each slot)
and as a small stateful policy object produced by :func:`make_policy`.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import Action, SystemState, require_valid_state
from .belief import (
    BeliefVector,
    FeedbackWindow,
    advance_feedback_window,
    initial_belief,
    observation_probability,
    reconstruct_belief,
    update_no_feedback,
)
from .values import (
    BoundPair,
    _w_vector,
    belief_value_lower,
    belief_value_upper,
    expected_reward,
    full_mdp_value,
    majority_vote_action,
    terminal_slice_values,
)

POLICY_NAMES = ("mv", "dstep", "mls", "qmdp", "arq", "lowdelay", "fbthresh", "brute")


@dataclass
class PolicyContext:
    """Everything a policy may look at when picking this slot's action."""

    slot: int
    params: object
    belief: Optional[BeliefVector] = None
    window: Optional[FeedbackWindow] = None
    infos_sent: int = 0
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.belief is not None:
            self.infos_sent = self.belief.n


# --- simple decision rules ----------------------------------------------------


def majority_vote(ctx: PolicyContext) -> Action:
    return majority_vote_action(ctx.belief, ctx.params)


def optimal_mdp_policy(s: SystemState, params) -> Action:
    """Fully-observable optimum: send info iff nothing is waiting."""
    require_valid_state(s, params.block_size)
    if s == params.terminal_state:
        raise ValueError("no action is defined at the terminal state")
    if s.w == 0 and s.n < params.block_size:
        return Action.SEND_INFO
    return Action.SEND_CODED


def mls_policy(ctx: PolicyContext) -> Action:
    """Fully-observable optimum applied to the single most likely state.

    Probability ties break toward the state with the larger waiting count
    (and then the smaller innovative count), i.e. pessimistically.
    """
    b = ctx.belief
    best = None
    best_p = -1.0
    for s, pr in zip(b.support_states(), b.probs):
        pr = float(pr)
        if pr > best_p + 1e-15 or (
            abs(pr - best_p) <= 1e-15
            and best is not None
            and (s.w, -s.d) > (best.w, -best.d)
        ):
            best, best_p = s, pr
    if best.w == 0 and b.n < ctx.params.block_size:
        return Action.SEND_INFO
    return Action.SEND_CODED


def qmdp_policy(ctx: PolicyContext) -> Action:
    """Maximize the expected fully-observable value after one action."""
    b, params = ctx.belief, ctx.params
    if b.n >= params.block_size:
        return Action.SEND_CODED
    from .model import transition_distribution

    scores = {}
    for a in (Action.SEND_CODED, Action.SEND_INFO):
        total = 0.0
        for s, pr in zip(b.support_states(), b.probs):
            pr = float(pr)
            if pr == 0.0:
                continue
            total += pr * sum(
                q * full_mdp_value(s2, params)
                for s2, q in transition_distribution(s, a, params)
            )
        scores[a] = total
    if scores[Action.SEND_INFO] > scores[Action.SEND_CODED]:
        return Action.SEND_INFO
    return Action.SEND_CODED


def low_delay_fec_policy(ctx: PolicyContext, period_l: int) -> Action:
    """Fixed-period baseline: one coded packet after every period_l - 1 infos."""
    if period_l < 2:
        raise ValueError("period_l must be >= 2")
    if ctx.infos_sent >= ctx.params.block_size:
        return Action.SEND_CODED
    return Action.SEND_CODED if ctx.slot % period_l == 0 else Action.SEND_INFO


def feedback_threshold_policy(ctx: PolicyContext, threshold: int = 1) -> Action:
    """Adaptive baseline: code whenever the estimated receiver queue length
    (expected waiting count under the feedback-reconstructed belief) reaches
    the threshold."""
    if ctx.window is None or not ctx.params.has_feedback:
        raise ValueError("feedback_threshold_policy requires finite feedback delay")
    b = ctx.belief if ctx.belief is not None else reconstruct_belief(ctx.window, ctx.params)
    if b.n >= ctx.params.block_size:
        return Action.SEND_CODED
    expected_w = float(_w_vector(b.n) @ b.probs)
    return Action.SEND_CODED if expected_w >= threshold else Action.SEND_INFO


# --- bounded lookahead with branch-and-bound pruning --------------------------


@dataclass
class _Node:
    slot: int
    belief: BeliefVector
    window: Optional[FeedbackWindow]


class _SearchCaches:
    """Memoizes per-window quantities across searches.

    A feedback window (anchor state plus pending actions) fully determines
    the belief, so tree nodes met while deciding one slot reappear as roots
    or leaves of later searches; caching their reconstructed beliefs and
    roll-out values makes repeated searches nearly free.
    """

    def __init__(self):
        self.belief: Dict[FeedbackWindow, BeliefVector] = {}
        self.rollout: Dict[FeedbackWindow, float] = {}


def _cached_belief(window: FeedbackWindow, params, caches) -> BeliefVector:
    if caches is None:
        return reconstruct_belief(window, params)
    b = caches.belief.get(window)
    if b is None:
        b = reconstruct_belief(window, params)
        caches.belief[window] = b
    return b


def _cached_rollout(node: "_Node", params, caches) -> float:
    if caches is None or node.window is None:
        return belief_value_lower(node.belief, params)
    v = caches.rollout.get(node.window)
    if v is None:
        v = belief_value_lower(node.belief, params)
        caches.rollout[node.window] = v
    return v


@dataclass
class SearchDiagnostics:
    chosen: Action
    action_bounds: Dict[Action, BoundPair]
    pruned: Tuple[Action, ...]
    fast_path: bool


def _fringe_bounds(b: BeliefVector, params) -> BoundPair:
    if b.n == params.block_size:
        # the coded-only endgame is priced exactly
        v = float(terminal_slice_values(params) @ b.probs)
        return BoundPair(v, v)
    return BoundPair(belief_value_lower(b, params), belief_value_upper(b, params))


def _children(node: _Node, a: Action, params, caches=None) -> List[Tuple[float, _Node]]:
    """Action edge expansion; with feedback, slots late enough to have a
    receipt flag in flight branch on both observations."""
    if node.window is None:
        nb = update_no_feedback(node.belief, a, params)
        return [(1.0, _Node(node.slot + 1, nb, None))]
    t_fb = params.feedback_delay
    if node.slot < t_fb + 1:
        win = advance_feedback_window(node.window, a, None, params)
        return [(1.0, _Node(node.slot + 1, _cached_belief(win, params, caches), win))]
    kids = []
    for z in (1, 0):
        win = advance_feedback_window(node.window, a, z, params)
        kids.append(
            (
                observation_probability(z, params),
                _Node(node.slot + 1, _cached_belief(win, params, caches), win),
            )
        )
    return kids


def _evaluate_node(node: _Node, depth: int, params, caches=None) -> BoundPair:
    b = node.belief
    if b.n == params.block_size:
        v = float(terminal_slice_values(params) @ b.probs)
        return BoundPair(v, v)
    if depth == 0:
        return BoundPair(
            _cached_rollout(node, params, caches), belief_value_upper(b, params)
        )
    r = expected_reward(b, params)
    best_lower = -math.inf
    best_upper = -math.inf
    for a in (Action.SEND_CODED, Action.SEND_INFO):  # coded first keeps ties coded
        if a is Action.SEND_INFO and b.n >= params.block_size:
            continue
        kids = _children(node, a, params, caches)
        quick_upper = r + sum(
            wt * belief_value_upper(k.belief, params) for wt, k in kids
        )
        if quick_upper <= best_lower:
            continue  # provably no better than an already-expanded sibling
        child_bounds = [_evaluate_node(k, depth - 1, params, caches) for _, k in kids]
        lower = r + sum(wt * cb.lower for (wt, _), cb in zip(kids, child_bounds))
        upper = r + sum(wt * cb.upper for (wt, _), cb in zip(kids, child_bounds))
        best_lower = max(best_lower, lower)
        best_upper = max(best_upper, upper)
    return BoundPair(best_lower, best_upper)


def lookahead_bounds(
    belief: BeliefVector,
    depth: int,
    params,
    slot: int = 1,
    window: Optional[FeedbackWindow] = None,
) -> BoundPair:
    """Bounds on the optimal value of a belief node after a depth-limited
    expansion (exposed for verification)."""
    return _evaluate_node(_Node(slot, belief, window), depth, params)


def d_step_search(ctx: PolicyContext, params=None, collect: bool = False, caches=None):
    """Pick the action maximizing the lower value bound over the lookahead
    tree, pruning any action whose upper bound cannot beat a sibling's lower
    bound.  Ties resolve to the coded packet."""
    params = params or ctx.params
    b = ctx.belief
    depth = params.search_depth
    if b.n >= params.block_size:
        diag = SearchDiagnostics(Action.SEND_CODED, {}, (), True)
        return (Action.SEND_CODED, diag) if collect else Action.SEND_CODED

    window = ctx.window if params.has_feedback else None
    node = _Node(ctx.slot, b, window)
    a_mv = majority_vote_action(b, params)
    other = Action.SEND_CODED if a_mv is Action.SEND_INFO else Action.SEND_INFO
    r = expected_reward(b, params)

    # Fast path: if the quick upper bound of the non-vote action already
    # falls below the vote action's roll-out value, the tree is decided.
    roll = _cached_rollout(node, params, caches)
    quick_other = r + sum(
        wt * belief_value_upper(k.belief, params)
        for wt, k in _children(node, other, params, caches)
    )
    if quick_other <= roll:
        diag = SearchDiagnostics(a_mv, {}, (other,), True)
        return (a_mv, diag) if collect else a_mv

    bounds: Dict[Action, BoundPair] = {}
    for a in (Action.SEND_CODED, Action.SEND_INFO):
        kids = _children(node, a, params, caches)
        child_bounds = [_evaluate_node(k, depth - 1, params, caches) for _, k in kids]
        bounds[a] = BoundPair(
            r + sum(wt * cb.lower for (wt, _), cb in zip(kids, child_bounds)),
            r + sum(wt * cb.upper for (wt, _), cb in zip(kids, child_bounds)),
        )

    # Prune a branch when a sibling's lower bound reaches its upper bound;
    # exact ties prune neither (the coded preference settles them below).
    pruned = tuple(
        a
        for a in bounds
        if any(
            a2 is not a
            and bounds[a].upper <= bounds[a2].lower
            and bounds[a2].upper > bounds[a].lower
            for a2 in bounds
        )
    )
    survivors = [a for a in bounds if a not in pruned] or [Action.SEND_CODED]
    chosen = max(
        survivors,
        key=lambda a: (bounds[a].lower, a is Action.SEND_CODED),
    )
    diag = SearchDiagnostics(chosen, bounds, pruned, False)
    return (chosen, diag) if collect else chosen


# --- static schedules and exhaustive search -----------------------------------


@dataclass(frozen=True)
class StaticPolicy:
    """Fixed action sequence (info exactly ``N`` times, coded forever after)."""

    schedule: Tuple[Action, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "schedule", tuple(Action(a) for a in self.schedule)
        )
        if self.schedule and self.schedule[0] is not Action.SEND_INFO:
            raise ValueError("the first slot must send an information packet")

    def action_at(self, slot: int) -> Action:
        if 1 <= slot <= len(self.schedule):
            return self.schedule[slot - 1]
        return Action.SEND_CODED

    def info_count(self) -> int:
        return sum(1 for a in self.schedule if a is Action.SEND_INFO)

    def to_string(self) -> str:
        return "".join(a.symbol for a in self.schedule)

    @classmethod
    def from_string(cls, text: str) -> "StaticPolicy":
        mapping = {"I": Action.SEND_INFO, "C": Action.SEND_CODED}
        try:
            return cls(tuple(mapping[ch] for ch in text.strip()))
        except KeyError as exc:
            raise ValueError(f"schedule strings use only I and C: {exc}") from exc


def exact_expected_latency(actions: Sequence[Action], params) -> float:
    """Exact mean per-packet latency of a fixed schedule.

    Pushes the belief through the schedule, summing the expected number of
    undelivered packets per slot; once the last information packet is out
    the coded-only remainder is priced by the final-slice closed form, so no
    simulation or truncation is involved.
    """
    n_packets = params.block_size
    b = initial_belief()
    total = 0.0
    infos = 0
    for a in actions:
        if infos == n_packets:
            break
        a = Action(a)
        total -= expected_reward(b, params)
        b = update_no_feedback(b, a, params)
        if a is Action.SEND_INFO:
            infos += 1
    if infos < n_packets:
        raise ValueError("schedule must send every information packet")
    total -= float(terminal_slice_values(params) @ b.probs)
    return total / n_packets


def policy_count(block_size: int, coded_budget: int) -> int:
    """Number of schedules the exhaustive search nominally ranges over."""
    return math.comb(block_size + coded_budget, coded_budget)


def brute_force_search(params, enumeration_cap: int = 10_000_000):
    """Exhaustively rank all placements of the coded-packet budget.

    Only meaningful without feedback (the schedule is then an offline
    object).  Returns the best schedule and its exact expected latency; ties
    go to the lexicographically first schedule (info before coded).
    """
    if params.has_feedback:
        raise ValueError("exhaustive schedule search applies without feedback only")
    n_packets = params.block_size
    budget = params.effective_coded_budget()
    if policy_count(n_packets, budget) > enumeration_cap:
        raise ValueError(
            f"{policy_count(n_packets, budget)} schedules exceed the cap "
            f"{enumeration_cap}"
        )
    horizon = n_packets + budget
    best_schedule = None
    best_latency = math.inf
    # The first slot always carries an information packet; coded packets are
    # placed among the remaining horizon-1 slots.
    for coded_slots in itertools.combinations(range(1, horizon), budget):
        coded = set(coded_slots)
        schedule = tuple(
            Action.SEND_CODED if i in coded else Action.SEND_INFO
            for i in range(horizon)
        )
        latency = exact_expected_latency(schedule, params)
        if latency < best_latency - 1e-12:
            best_latency, best_schedule = latency, schedule
        elif latency <= best_latency + 1e-12 and schedule < best_schedule:
            best_schedule = schedule
    return StaticPolicy(best_schedule), best_latency


# --- policy objects for the simulator -----------------------------------------


class Policy:
    """Per-episode decision rule; ``reset`` is called before every episode."""

    name = "policy"
    uses_belief = False
    needs_feedback = False

    def reset(self) -> None:
        pass

    def open_loop_for(self, params) -> bool:
        """True when the whole action sequence is fixed in advance."""
        return False

    def select_action(self, ctx: PolicyContext) -> Action:
        raise NotImplementedError


class _BeliefPolicy(Policy):
    uses_belief = True

    def __init__(self, params):
        self.params = params

    def open_loop_for(self, params) -> bool:
        return not params.has_feedback


class MajorityVotePolicy(_BeliefPolicy):
    name = "mv"

    def select_action(self, ctx):
        return majority_vote(ctx)


class MlsPolicy(_BeliefPolicy):
    name = "mls"

    def select_action(self, ctx):
        return mls_policy(ctx)


class QmdpPolicy(_BeliefPolicy):
    name = "qmdp"

    def select_action(self, ctx):
        return qmdp_policy(ctx)


class DStepSearchPolicy(_BeliefPolicy):
    """Lookahead policy; with feedback, decisions are memoized on the exact
    (anchor state, pending actions) pair, which fully determines the belief."""

    name = "dstep"

    def __init__(self, params):
        super().__init__(params)
        self._cache: dict = {}
        self._search_caches = _SearchCaches()

    def select_action(self, ctx):
        if self.params.has_feedback and ctx.window is not None:
            hit = self._cache.get(ctx.window)
            if hit is not None:
                return hit
            action = d_step_search(ctx, self.params, caches=self._search_caches)
            self._cache[ctx.window] = action
            return action
        return d_step_search(ctx, self.params)


class OptimalMdpPolicy(Policy):
    """Retransmission-on-demand; requires instantaneous feedback."""

    name = "arq"
    needs_feedback = True

    def __init__(self, params):
        if params.feedback_delay != 0:
            raise ValueError("the fully-observable policy requires feedback_delay=0")
        self.params = params

    def select_action(self, ctx):
        return optimal_mdp_policy(ctx.window.anchor_state, self.params)


class LowDelayFecPolicy(Policy):
    name = "lowdelay"

    def __init__(self, params, period_l: int):
        if period_l < 2:
            raise ValueError("period_l must be >= 2")
        self.params = params
        self.period_l = period_l

    def open_loop_for(self, params) -> bool:
        return True

    def select_action(self, ctx):
        return low_delay_fec_policy(ctx, self.period_l)


class FeedbackThresholdPolicy(Policy):
    name = "fbthresh"
    uses_belief = True
    needs_feedback = True

    def __init__(self, params, threshold: int = 1):
        self.params = params
        self.threshold = threshold

    def select_action(self, ctx):
        return feedback_threshold_policy(ctx, self.threshold)


class StaticSchedulePolicy(Policy):
    name = "static"

    def __init__(self, params, static: StaticPolicy):
        if static.info_count() != params.block_size:
            raise ValueError(
                f"schedule sends {static.info_count()} info packets, "
                f"expected {params.block_size}"
            )
        self.params = params
        self.static = static

    def open_loop_for(self, params) -> bool:
        return True

    def select_action(self, ctx):
        return self.static.action_at(ctx.slot)


class BruteForcePolicy(StaticSchedulePolicy):
    name = "brute"

    def __init__(self, params, enumeration_cap: int = 10_000_000):
        static, latency = brute_force_search(params, enumeration_cap)
        super().__init__(params, static)
        self.expected_latency = latency


def compile_open_loop(policy: Policy, params, max_slots: Optional[int] = None) -> StaticPolicy:
    """Unroll a feedback-free policy into its fixed schedule (up to the last
    information packet; coded packets follow implicitly)."""
    cap = max_slots or params.slot_cap()
    policy.reset()
    b = initial_belief()
    actions: List[Action] = []
    slot = 1
    while b.n < params.block_size:
        ctx = PolicyContext(slot=slot, params=params, belief=b, infos_sent=b.n)
        a = Action(policy.select_action(ctx))
        actions.append(a)
        b = update_no_feedback(b, a, params)
        slot += 1
        if slot > cap:
            raise RuntimeError(f"policy failed to send all packets within {cap} slots")
    return StaticPolicy(tuple(actions))


def make_policy(name: str, params, **kwargs) -> Policy:
    """Build a policy by its command-line name."""
    name = name.lower()
    if name == "mv":
        return MajorityVotePolicy(params)
    if name == "dstep":
        return DStepSearchPolicy(params)
    if name == "mls":
        return MlsPolicy(params)
    if name == "qmdp":
        return QmdpPolicy(params)
    if name == "arq":
        return OptimalMdpPolicy(params)
    if name == "lowdelay":
        return LowDelayFecPolicy(params, period_l=kwargs.get("period_l", 3))
    if name == "fbthresh":
        return FeedbackThresholdPolicy(params, threshold=kwargs.get("threshold", 1))
    if name == "brute":
        return BruteForcePolicy(
            params, enumeration_cap=kwargs.get("enumeration_cap", 10_000_000)
        )
    if name == "static":
        return StaticSchedulePolicy(params, kwargs["static"])
    raise ValueError(f"unknown policy {name!r}; choose from {POLICY_NAMES}")
