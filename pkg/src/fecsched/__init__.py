"""Minimum-latency packet-level FEC scheduling over erasure channels."""

from .model import (
    Action,
    ProblemParams,
    SystemState,
    legal_actions,
    reward,
    state_space_size,
    transition_distribution,
)
from .belief import (
    BeliefVector,
    FeedbackWindow,
    advance_feedback_window,
    initial_belief,
    point_mass,
    reconstruct_belief,
    update_no_feedback,
)
from .values import (
    BoundPair,
    belief_value_lower,
    belief_value_upper,
    expected_reward,
    final_state_value,
    full_mdp_value,
    value_iteration_oracle,
)
from .policies import (
    PolicyContext,
    StaticPolicy,
    brute_force_search,
    compile_open_loop,
    d_step_search,
    exact_expected_latency,
    lookahead_bounds,
    make_policy,
    optimal_mdp_policy,
    policy_count,
)
from .simulator import (
    EpisodeTrace,
    RunConfig,
    Summary,
    compute_delays,
    monte_carlo,
    replay_episode,
    run_episode,
)

__version__ = "0.1.0"
