"""Model and policy containers for finite POMDPs.

Arrays are dense float64 and laid out as

* ``transition[s, a, s']`` = p(s'|s,a)
* ``observation[s, o]``    = sigma(o|s)
* ``cost[s, a]``           = c(s,a)
* ``kernels[t, o, a]``     = pi_t(a|o)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-9


class ModelValidationError(ValueError):
    """Raised when a model, policy or setup violates its invariants."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _check_stochastic(arr: np.ndarray, what: str, index_names: Sequence[str], labels=None):
    """Raise on negative entries or rows (last axis) not summing to one."""
    if not np.all(np.isfinite(arr)):
        raise ModelValidationError(f"{what}: non-finite probability")
    neg = np.argwhere(arr < 0)
    if len(neg):
        idx = tuple(int(i) for i in neg[0])
        raise ModelValidationError(f"{what}: negative probability at {_fmt(idx, index_names, labels)}")
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        raise ModelValidationError(
            f"{what}: row {_fmt(idx, index_names, labels)} sums to {sums[idx]:.12g}, expected 1"
        )


def _fmt(idx, names, labels):
    parts = []
    for k, (i, n) in enumerate(zip(idx, names)):
        lab = labels[k][i] if labels is not None and labels[k] is not None else i
        parts.append(f"{n}={lab!r}")
    return "(" + ", ".join(parts) + ")"


@dataclass(frozen=True)
class PomdpModel:
    """A stationary finite POMDP."""

    state_labels: tuple
    obs_labels: tuple
    action_labels: tuple
    transition: np.ndarray
    observation: np.ndarray
    cost: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    @property
    def n_obs(self) -> int:
        return len(self.obs_labels)

    @property
    def n_actions(self) -> int:
        return len(self.action_labels)

    @property
    def shape(self) -> tuple:
        return (self.n_states, self.n_obs, self.n_actions)


@dataclass(frozen=True)
class PeriodicPomdpModel:
    """A time-variant POMDP cycling through ``len(phases)`` models.

    ``allowed_actions[m, a]`` masks actions per phase. ``phases_per_step``
    is the number of phases that make up one original time step; external
    cost and information are reported per original step.
    """

    phases: tuple
    allowed_actions: np.ndarray
    phases_per_step: int = 1

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    @property
    def state_labels(self):
        return self.phases[0].state_labels

    @property
    def obs_labels(self):
        return self.phases[0].obs_labels

    @property
    def action_labels(self):
        return self.phases[0].action_labels

    @property
    def n_states(self) -> int:
        return self.phases[0].n_states

    @property
    def n_obs(self) -> int:
        return self.phases[0].n_obs

    @property
    def n_actions(self) -> int:
        return self.phases[0].n_actions

    @property
    def shape(self) -> tuple:
        return self.phases[0].shape

    @property
    def transition(self) -> np.ndarray:
        return np.stack([m.transition for m in self.phases])

    @property
    def observation(self) -> np.ndarray:
        return np.stack([m.observation for m in self.phases])

    @property
    def cost(self) -> np.ndarray:
        return np.stack([m.cost for m in self.phases])


@dataclass(frozen=True)
class ReactivePolicy:
    """Periodic reactive policy, ``kernels[t, o, a] = pi_t(a|o)``."""

    kernels: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=float)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] < 1:
            raise ModelValidationError("policy kernels must have shape (period, n_obs, n_actions)")
        _check_stochastic(k, "policy", ("phase", "observation"))
        object.__setattr__(self, "kernels", _frozen(k))

    @property
    def period(self) -> int:
        return self.kernels.shape[0]

    @classmethod
    def uniform(cls, n_obs: int, n_actions: int, period: int = 1, allowed=None) -> "ReactivePolicy":
        k = np.ones((period, n_obs, n_actions))
        if allowed is not None:
            allowed = np.asarray(allowed, dtype=bool)
            for t in range(period):
                k[t] *= allowed[t % allowed.shape[0]]
        return cls(k / k.sum(axis=-1, keepdims=True))

    def tile(self, period: int) -> "ReactivePolicy":
        if period % self.period:
            raise ValueError(f"period {period} is not a multiple of {self.period}")
        return ReactivePolicy(np.tile(self.kernels, (period // self.period, 1, 1)))


@dataclass(frozen=True)
class PhaseDistribution:
    """Per-phase stationary state marginals ``marginals[t, s]``."""

    marginals: np.ndarray

    @property
    def period(self) -> int:
        return self.marginals.shape[0]


@dataclass(frozen=True)
class BeliefTable:
    """Observation marginals and posteriors, ``beliefs[t, o, s] = b_t(s|o)``."""

    obs_marginals: np.ndarray
    beliefs: np.ndarray
    support_mask: np.ndarray = field(repr=False)

    @property
    def period(self) -> int:
        return self.obs_marginals.shape[0]


def validate_model(raw) -> PomdpModel:
    """Build a :class:`PomdpModel` from a mapping with the JSON field names.

    Accepts ``states``, ``observations``, ``actions``, ``transition``
    (``[s][a][s']``), ``observation`` (``[s][o]``) and ``cost`` (``[s][a]``).
    """
    if isinstance(raw, PomdpModel):
        raw = model_to_dict(raw)
    try:
        states = tuple(raw["states"])
        obs = tuple(raw["observations"])
        actions = tuple(raw["actions"])
        transition = np.asarray(raw["transition"], dtype=float)
        observation = np.asarray(raw["observation"], dtype=float)
        cost = np.asarray(raw["cost"], dtype=float)
    except KeyError as exc:
        raise ModelValidationError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed table: {exc}") from None
    return _make_model(states, obs, actions, transition, observation, cost)


def _make_model(states, obs, actions, transition, observation, cost) -> PomdpModel:
    S, O, A = len(states), len(obs), len(actions)
    if min(S, O, A) == 0:
        raise ModelValidationError("state, observation and action sets must be non-empty")
    for labels, name in ((states, "state"), (obs, "observation"), (actions, "action")):
        if len(set(labels)) != len(labels):
            raise ModelValidationError(f"duplicate {name} labels")
    for arr, shape, name in (
        (transition, (S, A, S), "transition"),
        (observation, (S, O), "observation"),
        (cost, (S, A), "cost"),
    ):
        if arr.shape != shape:
            raise ModelValidationError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(cost)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(cost))[0])
        raise ModelValidationError(f"cost: non-finite value at {_fmt(bad, ('s', 'a'), (states, actions))}")
    _check_stochastic(transition, "transition", ("s", "a"), (states, actions))
    _check_stochastic(observation, "observation", ("s",), (states,))
    return PomdpModel(states, obs, actions, _frozen(transition), _frozen(observation), _frozen(cost))


def validate_periodic_model(raw) -> PeriodicPomdpModel:
    """Build a :class:`PeriodicPomdpModel` from a mapping.

    A document without ``phases`` is read as a one-phase model.
    """
    if isinstance(raw, PeriodicPomdpModel):
        return raw
    if isinstance(raw, PomdpModel):
        return as_periodic(raw)
    if "phases" not in raw:
        return as_periodic(validate_model(raw))
    blocks = raw["phases"]
    if not blocks:
        raise ModelValidationError("periodic model needs at least one phase")
    phases = tuple(validate_model({**{k: raw[k] for k in ("states", "observations", "actions")}, **b})
                   for b in blocks)
    actions = phases[0].action_labels
    allowed_raw = raw.get("allowed_actions")
    if allowed_raw is None:
        allowed = np.ones((len(phases), len(actions)), dtype=bool)
    else:
        if len(allowed_raw) != len(phases):
            raise ModelValidationError("allowed_actions must list one label set per phase")
        allowed = np.zeros((len(phases), len(actions)), dtype=bool)
        for m, labels in enumerate(allowed_raw):
            for lab in labels:
                if lab not in actions:
                    raise ModelValidationError(f"allowed_actions: unknown action {lab!r}")
                allowed[m, actions.index(lab)] = True
    return make_periodic(phases, allowed, int(raw.get("phases_per_step", 1)))


def make_periodic(phases, allowed=None, phases_per_step: int = 1) -> PeriodicPomdpModel:
    phases = tuple(phases)
    if not phases:
        raise ModelValidationError("periodic model needs at least one phase")
    first = phases[0]
    for m in phases[1:]:
        if (m.state_labels, m.obs_labels, m.action_labels) != (
            first.state_labels, first.obs_labels, first.action_labels
        ):
            raise ModelValidationError("all phases must share state, observation and action labels")
    if allowed is None:
        allowed = np.ones((len(phases), first.n_actions), dtype=bool)
    allowed = np.array(allowed, dtype=bool)
    if allowed.shape != (len(phases), first.n_actions):
        raise ModelValidationError(f"allowed_actions has shape {allowed.shape}")
    empty = np.flatnonzero(~allowed.any(axis=1))
    if len(empty):
        raise ModelValidationError(f"phase {int(empty[0])} allows no action")
    if phases_per_step < 1:
        raise ModelValidationError("phases_per_step must be >= 1")
    allowed.setflags(write=False)
    return PeriodicPomdpModel(phases, allowed, phases_per_step)


def as_periodic(model) -> PeriodicPomdpModel:
    if isinstance(model, PeriodicPomdpModel):
        return model
    return make_periodic((model,))


def check_policy(model, policy: ReactivePolicy) -> ReactivePolicy:
    """Check a policy against a model's sizes, period and action masks."""
    pm = as_periodic(model)
    if not isinstance(policy, ReactivePolicy):
        policy = ReactivePolicy(policy)
    _, O, A = pm.shape
    if policy.kernels.shape[1:] != (O, A):
        raise ModelValidationError(
            f"policy has shape {policy.kernels.shape[1:]}, model expects ({O}, {A})"
        )
    if policy.period % pm.n_phases:
        raise ModelValidationError(
            f"policy period {policy.period} is not a multiple of the model's {pm.n_phases} phases"
        )
    for t in range(policy.period):
        masked = ~pm.allowed_actions[t % pm.n_phases]
        if np.any(policy.kernels[t][:, masked] > 0):
            raise ModelValidationError(f"policy puts mass on a disallowed action at phase {t}")
    return policy


def model_to_dict(model) -> dict:
    """Serialize a model to the JSON document layout."""
    doc = {
        "states": list(model.state_labels),
        "observations": list(model.obs_labels),
        "actions": list(model.action_labels),
    }
    if isinstance(model, PeriodicPomdpModel):
        doc["phases"] = [
            {
                "transition": m.transition.tolist(),
                "observation": m.observation.tolist(),
                "cost": m.cost.tolist(),
            }
            for m in model.phases
        ]
        doc["allowed_actions"] = [
            [lab for lab, ok in zip(model.action_labels, row) if ok] for row in model.allowed_actions
        ]
        if model.phases_per_step != 1:
            doc["phases_per_step"] = model.phases_per_step
    else:
        doc["transition"] = model.transition.tolist()
        doc["observation"] = model.observation.tolist()
        doc["cost"] = model.cost.tolist()
    return doc


def load_model(raw):
    """Validate a model document, returning the stationary or periodic type."""
    if "phases" in raw:
        return validate_periodic_model(raw)
    return validate_model(raw)


def policy_to_dict(model, policy: ReactivePolicy) -> dict:
    return {
        "period": policy.period,
        "observations": list(model.obs_labels),
        "actions": list(model.action_labels),
        "kernels": policy.kernels.tolist(),
    }


def policy_from_dict(raw) -> ReactivePolicy:
    try:
        pol = ReactivePolicy(np.asarray(raw["kernels"], dtype=float))
    except KeyError:
        raise ModelValidationError("policy document needs 'kernels'") from None
    if "period" in raw and int(raw["period"]) != pol.period:
        raise ModelValidationError("policy 'period' disagrees with kernel count")
    return pol
