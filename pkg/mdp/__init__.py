"""Exact MDP machinery: oracles, mixing diagnostics, generators and JSON I/O."""
from mdp.oracles import (
    advantage,
    discounted_visitation,
    exact_q,
    exact_value,
    greedy_policy,
    mixed_visitation,
    optimality_gap,
    pair_kernel,
    policy_iteration,
    policy_kernel,
    solve_optimal,
    truncated_rollout_q,
    visitation_matrix,
)
from mdp.mixing import (
    implicit_mixing_bounds,
    mixing_profile,
    stationary_distribution,
)
from mdp.generators import anchored_policy, gen_garnet, gen_hard_chain, random_policy
from mdp.serialization import dump_mdp, load_mdp, mdp_from_dict, mdp_to_dict

__all__ = [
    'advantage',
    'discounted_visitation',
    'exact_q',
    'exact_value',
    'greedy_policy',
    'mixed_visitation',
    'optimality_gap',
    'pair_kernel',
    'policy_iteration',
    'policy_kernel',
    'solve_optimal',
    'truncated_rollout_q',
    'visitation_matrix',
    'implicit_mixing_bounds',
    'mixing_profile',
    'stationary_distribution',
    'gen_garnet',
    'gen_hard_chain',
    'anchored_policy',
    'random_policy',
    'dump_mdp',
    'load_mdp',
    'mdp_from_dict',
    'mdp_to_dict',
]
