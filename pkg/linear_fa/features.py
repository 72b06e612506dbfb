"""Built-in feature maps and their JSON form {"d": ..., "rows": [[...], ...]}."""
import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from errors import InvalidInputError
from models import FeatureMap

logger = logging.getLogger(__name__)


def identity_features(n_pairs: int) -> FeatureMap:
    """Tabular features: Phi = I on Z."""
    return FeatureMap(phi=np.eye(n_pairs))


def one_hot_state_features(n_states: int, n_actions: int) -> FeatureMap:
    """phi(s, a) = e_s, shared across actions."""
    return FeatureMap(phi=np.repeat(np.eye(n_states), n_actions, axis=0))


def random_gaussian_features(n_pairs: int, d: int, seed: int) -> FeatureMap:
    """i.i.d. standard Gaussian entries with a fixed seed."""
    if not 1 <= d <= n_pairs:
        raise InvalidInputError(f"feature dimension d={d} must lie in [1, {n_pairs}]")
    rng = np.random.default_rng(seed)
    return FeatureMap(phi=rng.standard_normal((n_pairs, d)))


def build_features(kind: str, n_states: int, n_actions: int, d: int | None = None, seed: int = 0) -> FeatureMap:
    """Feature map by name: identity, one_hot_state or gaussian."""
    n_pairs = n_states * n_actions
    if kind == "identity":
        return identity_features(n_pairs)
    if kind == "one_hot_state":
        return one_hot_state_features(n_states, n_actions)
    if kind == "gaussian":
        return random_gaussian_features(n_pairs, d or max(1, n_pairs // 2), seed)
    raise InvalidInputError(f"unknown feature map '{kind}'")


def dump_features(fmap: FeatureMap, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump({"d": fmap.dim, "rows": fmap.phi.tolist()}, fh)
    logger.info(f"[WRITE] Feature map ({fmap.n_pairs}x{fmap.dim}) -> {path}")


def load_features(path: str | Path) -> FeatureMap:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if "rows" not in doc:
        raise InvalidInputError(f"{path}: missing field 'rows'")
    try:
        fmap = FeatureMap(phi=doc["rows"])
    except ValidationError as e:
        raise InvalidInputError(f"{path}: {e.errors()[0]['msg']}") from e
    if "d" in doc and doc["d"] != fmap.dim:
        raise InvalidInputError(f"{path}: declared d={doc['d']} but rows have {fmap.dim} columns")
    return fmap
