"""Advantage-gap certificate node and the router that closes the doubling loop."""
import logging
from typing import TYPE_CHECKING

from langgraph.graph import END

from drivers.certificate import certificate_passes, certificate_threshold, estimate_gap
from models import DoublingState

if TYPE_CHECKING:
    from drivers.paramfree import DoublingContext

logger = logging.getLogger(__name__)


def create_certify_node(context: "DoublingContext"):
    """
    Factory function to create a certify node bound to a doubling context.

    Args:
        context: Shared stream, feature map and accuracy targets

    Returns:
        Certify node function
    """
    def certify_node(state: DoublingState):
        """Estimate the advantage gap of the epoch's policy and test it against the threshold."""
        ep = state["epoch"]
        k = state["iterations"]
        policy = state["policy"]
        n_pairs = context.n_states * context.n_actions
        half_delta = context.delta / 2.0

        start = context.stream.counter
        gap = estimate_gap(
            context.stream,
            policy,
            varsigma=context.epsilon / 2.0,
            M=context.gap_replicates,
            eps_state=context.certificate_exploration(k),
            max_window=context.max_window,
        )
        used = context.stream.counter - start
        threshold = certificate_threshold(context.epsilon, k, n_pairs, half_delta)
        passed = certificate_passes(gap, context.epsilon, k, n_pairs, half_delta)

        total = state["total_samples"] + used
        entry = {
            "iter": ep,
            "samples_cum": total,
            "kappa_tilde": state["kappa_tilde"],
            "k": k,
            "ctd_samples": state["ctd_samples"],
            "certificate_samples": used,
            "gap_max_est": gap.g_max,
            "certificate_threshold": threshold,
            "certificate_pass": int(passed),
            "gap_linf": context.oracle_gap(policy),
        }

        errors = []
        if passed:
            logger.info(f"[CERTIFIED] epoch {ep}: max gap {gap.g_max:.6f} <= {threshold:.6f}")
        else:
            logger.info(f"[NOT_CERTIFIED] epoch {ep}: max gap {gap.g_max:.6f} > {threshold:.6f}")
            if ep >= state["max_epoch"]:
                errors.append(f"No epoch certified; returning the epoch-{ep} policy")

        return {
            "certified": passed,
            "epoch": ep if passed else ep + 1,
            "gap_estimate": gap,
            "total_samples": total,
            "history": [entry],
            "errors": errors,
        }

    return certify_node


def certificate_router(state: DoublingState):
    """Route after the certificate: stop when certified or out of epochs, else run the next epoch."""
    if state["certified"] or state["epoch"] > state["max_epoch"]:
        return END
    return "epoch"
