"""Linear function approximation: features, weighting, the projected Bellman operator and CTD."""
from linear_fa.ctd import (
    CtdResult,
    ExplorationPolicies,
    RobustEstimate,
    ctd_run,
    ctd_solve,
    robust_ctd,
    robust_min_norm,
    sample_F_hat,
)
from linear_fa.exploration import perturb_action_policy, perturb_state_policy, uniform_mixture_floor
from linear_fa.features import (
    build_features,
    dump_features,
    identity_features,
    load_features,
    one_hot_state_features,
    random_gaussian_features,
)
from linear_fa.operator import (
    build_weights,
    c2_constant,
    ctd_bias_bound,
    ctd_variance_bound,
    epoch_length,
    exact_F,
    f_hat_bias_bound,
    f_hat_second_moment_bound,
    prop_floor_m,
    robust_norm_bound,
    solve_projected_bellman,
    stepsize_cap,
    weighted_norm,
)

__all__ = [
    'CtdResult',
    'ExplorationPolicies',
    'RobustEstimate',
    'ctd_run',
    'ctd_solve',
    'robust_ctd',
    'robust_min_norm',
    'sample_F_hat',
    'perturb_action_policy',
    'perturb_state_policy',
    'uniform_mixture_floor',
    'build_features',
    'dump_features',
    'identity_features',
    'load_features',
    'one_hot_state_features',
    'random_gaussian_features',
    'build_weights',
    'c2_constant',
    'ctd_bias_bound',
    'ctd_variance_bound',
    'epoch_length',
    'exact_F',
    'f_hat_bias_bound',
    'f_hat_second_moment_bound',
    'prop_floor_m',
    'robust_norm_bound',
    'solve_projected_bellman',
    'stepsize_cap',
    'weighted_norm',
]
