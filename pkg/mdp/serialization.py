"""JSON documents for MDPs."""
import json
import logging
from pathlib import Path

from pydantic import ValidationError

from errors import InvalidInputError
from models import TabularMdp

logger = logging.getLogger(__name__)


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transition": mdp.transition.tolist(),
        "cost": mdp.cost.tolist(),
    }


def mdp_from_dict(doc: dict) -> TabularMdp:
    try:
        mdp = TabularMdp(transition=doc["transition"], cost=doc["cost"], gamma=doc["gamma"])
    except KeyError as e:
        raise InvalidInputError(f"MDP document is missing field {e}") from e
    except ValidationError as e:
        raise InvalidInputError(f"invalid MDP document: {e}") from e
    declared = (doc.get("n_states", mdp.n_states), doc.get("n_actions", mdp.n_actions))
    if declared != (mdp.n_states, mdp.n_actions):
        raise InvalidInputError(
            f"declared sizes {declared} disagree with arrays {(mdp.n_states, mdp.n_actions)}"
        )
    return mdp


def dump_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)))
    logger.info(f"[WRITE] MDP ({mdp.n_states} states, {mdp.n_actions} actions) -> {path}")


def load_mdp(path: str | Path) -> TabularMdp:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}: line {e.lineno}: {e.msg}") from e
    return mdp_from_dict(doc)
