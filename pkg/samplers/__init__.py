"""Online data sources and the Monte-Carlo Q estimators built on them."""
from samplers.base import Transition, TrajectorySampler
from samplers.stream import SampleStream, dump_trajectory, rollout
from samplers.tomc import (
    TwoPhaseCollection,
    Window,
    WindowCollection,
    collect_window,
    discounted_hitting,
    discounted_returns,
    dynamic_mixing_collect,
    hitting_record,
    hitting_tail_beta,
    mixing_extra,
    nonrare_set,
    tomc_estimate,
    two_phase_collect,
    two_phase_estimate,
)

__all__ = [
    'Transition',
    'TrajectorySampler',
    'SampleStream',
    'dump_trajectory',
    'rollout',
    'TwoPhaseCollection',
    'Window',
    'WindowCollection',
    'collect_window',
    'discounted_hitting',
    'discounted_returns',
    'dynamic_mixing_collect',
    'hitting_record',
    'hitting_tail_beta',
    'mixing_extra',
    'nonrare_set',
    'tomc_estimate',
    'two_phase_collect',
    'two_phase_estimate',
]
