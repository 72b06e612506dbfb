"""SPMD+CTD epoch node of the doubling-trick workflow."""
import logging
from typing import TYPE_CHECKING

from drivers.spmd_ctd import spmd_ctd_run
from models import DoublingState

if TYPE_CHECKING:
    from drivers.paramfree import DoublingContext

logger = logging.getLogger(__name__)


def create_epoch_node(context: "DoublingContext"):
    """
    Factory function to create an epoch node bound to a doubling context.

    Args:
        context: Shared stream, feature map and accuracy targets

    Returns:
        Epoch node function
    """
    def run_epoch_node(state: DoublingState):
        """Run SPMD+CTD from the uniform policy with kappa_tilde = 2^-epoch."""
        ep = state["epoch"]
        kappa_tilde = 2.0 ** -ep
        config = context.epoch_config(kappa_tilde)

        logger.info(
            f"[EPOCH] {ep}/{state['max_epoch']}: kappa_tilde={kappa_tilde:.4g}, k={config.k}, "
            f"N={config.N}, m={config.m}"
        )
        start = context.stream.counter
        policy, _ = spmd_ctd_run(
            context.stream, context.fmap, config, context.s_or_selector, context.oracle
        )
        used = context.stream.counter - start
        logger.debug(f"Epoch {ep} consumed {used} samples")

        return {
            "kappa_tilde": kappa_tilde,
            "iterations": config.k,
            "policy": policy,
            "certified": False,
            "gap_estimate": None,
            "ctd_samples": used,
            "total_samples": state["total_samples"] + used,
        }

    return run_epoch_node
