"""File helpers: model/policy/setup documents and input coercion."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .builtin import builtin
from .core import PeriodicPomdpModel, PomdpModel, load_model, model_to_dict, policy_from_dict, policy_to_dict

BUILTIN_PREFIX = "builtin:"


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, doc) -> None:
    """Deterministic JSON (sorted keys, fixed indent, trailing newline)."""
    text = json.dumps(doc, indent=2, sort_keys=True, default=_default)
    Path(path).write_text(text + "\n")


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def check_model(model):
    """Coerce a model argument to a validated model.

    Accepts model objects, JSON-style mappings, ``"builtin:<name>"`` and
    paths to model documents.
    """
    if isinstance(model, (PomdpModel, PeriodicPomdpModel)):
        return model
    if isinstance(model, dict):
        return load_model(model)
    if isinstance(model, (str, Path)):
        name = str(model)
        if name.startswith(BUILTIN_PREFIX):
            return builtin(name[len(BUILTIN_PREFIX):])
        return load_model(read_json(name))
    raise TypeError(f"cannot interpret {type(model).__name__} as a POMDP model")


def save_model(path, model) -> None:
    write_json(path, model_to_dict(model))


def save_policy(path, model, policy) -> None:
    write_json(path, policy_to_dict(model, policy))


def load_policy(path):
    return policy_from_dict(read_json(path))
