"""JSON model and equilibrium files.

Model schema (one JSON object)::

    {
      "name":    "malware",                  # optional
      "states":  ["healthy", "infected"],    # |X| labels
      "metric":  [[0, 1], [1, 0]],           # |X| x |X| distance matrix
      "actions": ["none", "repair"],         # |A| labels
      "beta":    0.9,                        # discount in [0, 1)
      "kernel":  [x][a][z] -> [y] array,     # |X| x |A| x |X| x |X|
      "cost":    [x][a][z] array             # |X| x |A| x |X|
    }

Equilibrium files need ``mu`` (length |X|) and ``pi`` (|X| x |A|); the
output of ``linmfg solve`` qualifies.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import LinMfgError
from .model import FiniteMetricSpace, MfgModel, validate_model

MODEL_KEYS = ("states", "metric", "actions", "beta", "kernel", "cost")


class InputError(LinMfgError):
    """Unreadable or malformed input file."""


def _load_json(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"{p}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{p}: top level must be a JSON object")
    return data


def model_from_dict(data: dict, source: str = "<model>") -> MfgModel:
    missing = [k for k in MODEL_KEYS if k not in data]
    if missing:
        raise InputError(f"{source}: missing keys {missing}")
    try:
        model = MfgModel(
            states=FiniteMetricSpace(data["states"], np.asarray(data["metric"], dtype=float)),
            actions=data["actions"],
            kernel=np.asarray(data["kernel"], dtype=float),
            cost=np.asarray(data["cost"], dtype=float),
            beta=float(data["beta"]),
            name=str(data.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"{source}: {exc}") from exc
    return validate_model(model)


def model_to_dict(model: MfgModel) -> dict:
    return {
        "name": model.name,
        "states": list(model.states.labels),
        "metric": model.states.dist.tolist(),
        "actions": list(model.actions),
        "beta": model.beta,
        "kernel": model.kernel.tolist(),
        "cost": model.cost.tolist(),
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def load_model(path) -> MfgModel:
    if str(path) == "malware":
        return bundled_malware()
    return model_from_dict(_load_json(path), str(path))


def save_model(model: MfgModel, path) -> None:
    Path(path).write_text(dumps(model_to_dict(model)))


def bundled_malware() -> MfgModel:
    """The two-state malware instance shipped with the package."""
    text = resources.files("linmfg").joinpath("data/malware.json").read_text()
    return model_from_dict(json.loads(text), "malware.json")


def load_equilibrium(path, model: MfgModel):
    """Returns ``(mu, pi)`` as float arrays shaped for ``model``."""
    data = _load_json(path)
    for key in ("mu", "pi"):
        if key not in data:
            raise InputError(f"{path}: missing key {key!r}")
    try:
        mu = np.asarray(data["mu"], dtype=float)
        pi = np.asarray(data["pi"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if mu.shape != (model.n_states,) or pi.shape != (model.n_states, model.n_actions):
        raise InputError(f"{path}: mu{mu.shape} / pi{pi.shape} do not fit the model")
    return mu, pi
