"""Built-in example models."""

from __future__ import annotations

import numpy as np

from .core import _make_model

SUCCESS = 0.8
LOCATION_ACCURACY = 0.88
LOAD_ACCURACY = 0.7


def two_state(reward: float = 1.0):
    """Unobservable switcher: actions set the next state, switching pays."""
    states = ("L", "R")
    actions = ("left", "right")
    p = np.zeros((2, 2, 2))
    p[:, 0, 0] = 1.0
    p[:, 1, 1] = 1.0
    c = np.zeros((2, 2))
    c[0, 1] = -reward
    c[1, 0] = -reward
    return _make_model(states, ("none",), actions, p, np.ones((2, 1)), c)


def robot(success: float = SUCCESS, location_accuracy: float = LOCATION_ACCURACY,
          load_accuracy: float = LOAD_ACCURACY, reward: float = 1.0):
    """Corridor robot carrying items from the left end to the right end.

    State labels are location (L/R) then load (L=loaded, U=unloaded).
    Listed moves succeed with probability ``success`` and otherwise leave
    the state unchanged; every other state-action pair is a no-op.
    Observations are a noisy location reading and a noisy load reading.
    """
    states = ("LL", "RL", "LU", "RU")
    actions = ("left", "right", "load", "unload")
    idx = {s: i for i, s in enumerate(states)}
    act = {a: i for i, a in enumerate(actions)}
    moves = {
        ("LL", "right"): "RL",
        ("RL", "left"): "LL",
        ("LU", "load"): "LL",
        ("LL", "unload"): "LU",
        ("RL", "unload"): "RU",
        ("LU", "right"): "RU",
        ("RU", "left"): "LU",
    }
    p = np.zeros((4, 4, 4))
    for s in states:
        for a in actions:
            p[idx[s], act[a], idx[s]] = 1.0
    for (s, a), dest in moves.items():
        p[idx[s], act[a], idx[s]] = 1.0 - success
        p[idx[s], act[a], idx[dest]] = success
    sig = np.zeros((4, 4))
    for s in states:
        for o in states:
            loc = location_accuracy if s[0] == o[0] else 1.0 - location_accuracy
            load = load_accuracy if s[1] == o[1] else 1.0 - load_accuracy
            sig[idx[s], idx[o]] = loc * load
    c = np.zeros((4, 4))
    c[idx["RL"], act["unload"]] = -reward
    return _make_model(states, states, actions, p, sig, c)


BUILTINS = {"two-state": two_state, "robot": robot}


def builtin(name: str):
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin model {name!r}; available: {', '.join(sorted(BUILTINS))}") from None
