"""LangGraph workflow nodes."""
from nodes.epoch import create_epoch_node
from nodes.certify import create_certify_node, certificate_router

__all__ = [
    'create_epoch_node',
    'create_certify_node',
    'certificate_router',
]
