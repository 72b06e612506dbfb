"""Stochastic policy mirror descent with KL and Tsallis distance-generating functions."""
from mirror_descent.bregman import bregman, check_simplex, initial_bregman_diameter, omega, omega_grad
from mirror_descent.prox import best_response, prox_objective, spmd_step
from mirror_descent.runner import GapTracker, spmd_run, update_policy

__all__ = [
    'bregman',
    'check_simplex',
    'initial_bregman_diameter',
    'omega',
    'omega_grad',
    'best_response',
    'prox_objective',
    'spmd_step',
    'GapTracker',
    'spmd_run',
    'update_policy',
]
