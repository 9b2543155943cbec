"""Flattening a retentive agent (memory + inference + control) into a
two-phase reactive problem.

One original step becomes two phases. In phase 0 the state is
``(m_prev, s)``, the agent sees ``(m_prev, o)`` and its only admissible
actions commit the next memory. In phase 1 the committed memory is visible
as ``(m, NULL)`` and only the base actions are admissible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    ModelValidationError,
    PomdpModel,
    ReactivePolicy,
    _check_stochastic,
    _frozen,
    _make_model,
    make_periodic,
    validate_model,
)
from .dynamics import (
    diagnose_kernel,
    external_cost,
    full_cycle_kernel,
    solve_stationary,
    stationary_phase_distributions,
)

NULL_OBS = "⊥"


@dataclass(frozen=True)
class RetentiveSetup:
    """``inference[m, o, m'] = q(m'|m,o)``, ``control[m, a] = pi(a|m)``."""

    base: PomdpModel
    memory_labels: tuple
    inference: np.ndarray
    control: np.ndarray
    initial_memory: np.ndarray

    def __post_init__(self):
        K, O, A = len(self.memory_labels), self.base.n_obs, self.base.n_actions
        if K == 0 or len(set(self.memory_labels)) != K:
            raise ModelValidationError("memory labels must be non-empty and distinct")
        q = np.asarray(self.inference, dtype=float)
        pi = np.asarray(self.control, dtype=float)
        m0 = np.asarray(self.initial_memory, dtype=float)
        if q.shape != (K, O, K):
            raise ModelValidationError(f"inference has shape {q.shape}, expected {(K, O, K)}")
        if pi.shape != (K, A):
            raise ModelValidationError(f"control has shape {pi.shape}, expected {(K, A)}")
        if m0.shape != (K,):
            raise ModelValidationError(f"initial_memory has shape {m0.shape}, expected {(K,)}")
        _check_stochastic(q, "inference", ("m", "o"))
        _check_stochastic(pi, "control", ("m",))
        _check_stochastic(m0, "initial_memory", ())
        object.__setattr__(self, "memory_labels", tuple(self.memory_labels))
        object.__setattr__(self, "inference", _frozen(q))
        object.__setattr__(self, "control", _frozen(pi))
        object.__setattr__(self, "initial_memory", _frozen(m0))

    @property
    def n_memory(self) -> int:
        return len(self.memory_labels)


def setup_from_dict(raw) -> RetentiveSetup:
    try:
        return RetentiveSetup(
            base=validate_model(raw["base"]),
            memory_labels=tuple(raw["memory"]),
            inference=np.asarray(raw["inference"], dtype=float),
            control=np.asarray(raw["control"], dtype=float),
            initial_memory=np.asarray(raw["initial_memory"], dtype=float),
        )
    except KeyError as exc:
        raise ModelValidationError(f"missing field {exc.args[0]!r}") from None


def random_setup(rng, n_memory, n_states, n_obs, n_actions, alpha: float = 1.0) -> RetentiveSetup:
    """Dirichlet-random setup; every kernel row has full support almost surely."""
    d = lambda *shape: rng.dirichlet(np.full(shape[-1], alpha), size=shape[:-1])  # noqa: E731
    base = _make_model(
        tuple(f"s{i}" for i in range(n_states)),
        tuple(f"o{i}" for i in range(n_obs)),
        tuple(f"a{i}" for i in range(n_actions)),
        d(n_states, n_actions, n_states),
        d(n_states, n_obs),
        rng.normal(size=(n_states, n_actions)),
    )
    return RetentiveSetup(
        base,
        tuple(f"m{i}" for i in range(n_memory)),
        d(n_memory, n_obs, n_memory),
        d(n_memory, n_actions),
        d(1, n_memory)[0],
    )


@dataclass(frozen=True)
class ReducedModel:
    """Two-phase model plus index maps back to the base spaces.

    ``state_index[m, s]``, ``obs_index[m, o]`` (``o = n_obs`` is the null
    observation), ``memory_action[m]`` and ``base_action[a]``.
    """

    model: object
    n_memory: int
    n_states: int
    n_obs: int
    n_actions: int
    mode: str = "mask"
    penalty: float = 0.0

    def state_index(self, m, s):
        return m * self.n_states + s

    def obs_index(self, m, o):
        return m * (self.n_obs + 1) + o

    def memory_action(self, m):
        return m

    def base_action(self, a):
        return self.n_memory + a


def build_reduced_pomdp(setup: RetentiveSetup, mode: str = "mask", penalty: float = 10.0) -> ReducedModel:
    """Build the two-phase model.

    ``mode="mask"`` forbids the wrong action type per phase; ``"penalty"``
    allows it at cost ``penalty`` with no effect on the state.
    """
    if mode not in ("mask", "penalty"):
        raise ValueError(f"unknown mode {mode!r}")
    base = setup.base
    mem = setup.memory_labels
    clash = set(mem) & set(base.action_labels)
    if clash:
        raise ModelValidationError(f"memory labels collide with action labels: {sorted(clash)}")
    K, S, O, A = len(mem), base.n_states, base.n_obs, base.n_actions
    red = ReducedModel(None, K, S, O, A, mode, penalty if mode == "penalty" else 0.0)
    S2, O2, A2 = K * S, K * (O + 1), K + A

    states = tuple(f"{m}|{s}" for m in mem for s in base.state_labels)
    obs = tuple(f"{m}|{o}" for m in mem for o in (*base.obs_labels, NULL_OBS))
    actions = (*mem, *base.action_labels)

    sig0 = np.zeros((S2, O2))
    sig1 = np.zeros((S2, O2))
    p0 = np.zeros((S2, A2, S2))
    p1 = np.zeros((S2, A2, S2))
    c0 = np.zeros((S2, A2))
    c1 = np.zeros((S2, A2))
    for m in range(K):
        for s in range(S):
            i = red.state_index(m, s)
            sig0[i, red.obs_index(m, 0):red.obs_index(m, O)] = base.observation[s]
            sig1[i, red.obs_index(m, O)] = 1.0
            for m2 in range(K):
                a2 = red.memory_action(m2)
                p0[i, a2, red.state_index(m2, s)] = 1.0
                p1[i, a2, i] = 1.0
            for a in range(A):
                a2 = red.base_action(a)
                p0[i, a2, i] = 1.0
                p1[i, a2, red.state_index(m, 0):red.state_index(m, S)] = base.transition[s, a]
                c1[i, a2] = base.cost[s, a]
    allowed = np.zeros((2, A2), dtype=bool)
    allowed[0, :K] = True
    allowed[1, K:] = True
    if mode == "penalty":
        c0[:, K:] = penalty
        c1[:, :K] = penalty
        allowed[:] = True
    phases = (
        _make_model(states, obs, actions, p0, sig0, c0),
        _make_model(states, obs, actions, p1, sig1, c1),
    )
    model = make_periodic(phases, allowed, phases_per_step=2)
    return ReducedModel(model, K, S, O, A, mode, red.penalty)


def embed_retentive_policy(setup: RetentiveSetup, reduced: Optional[ReducedModel] = None) -> ReactivePolicy:
    """Period-2 reactive policy on the reduced model equal to ``(q, pi)``.

    Rows for observations that cannot occur in a phase copy the nearest
    meaningful row: ``(m, NULL)`` in phase 0 uses ``q(.|m, first obs)`` and
    ``(m, o)`` in phase 1 uses ``pi(.|m)``.
    """
    if reduced is None:
        reduced = build_reduced_pomdp(setup)
    K, O, A = reduced.n_memory, reduced.n_obs, reduced.n_actions
    k = np.zeros((2, K * (O + 1), K + A))
    for m in range(K):
        for o in range(O + 1):
            row = reduced.obs_index(m, o)
            k[0, row, :K] = setup.inference[m, o if o < O else 0]
            k[1, row, K:] = setup.control[m]
    return ReactivePolicy(k)


@dataclass(frozen=True)
class EquivalenceReport:
    deviation: Optional[float]
    retentive_cost: Optional[float]
    reduced_cost: Optional[float]
    diagnosis: str
    verdict: Optional[bool]


def retentive_kernel(setup: RetentiveSetup) -> np.ndarray:
    """Chain on ``(m_prev, s)``, flattened as ``m_prev * S + s``."""
    b = setup.base
    # act[m', s, s'] = sum_a pi(a|m') p(s'|s,a)
    act = np.einsum("ma,sat->mst", setup.control, b.transition)
    K = np.einsum("so,mon,nst->msnt", b.observation, setup.inference, act)
    n = setup.n_memory * b.n_states
    return K.reshape(n, n)


def retentive_joint(setup: RetentiveSetup) -> np.ndarray:
    """Stationary joint ``J[s, o, m, a]`` of the retentive process."""
    b = setup.base
    mu = solve_stationary(retentive_kernel(setup)).reshape(setup.n_memory, b.n_states)
    return np.einsum("ks,so,kon,na->sona", mu, b.observation, setup.inference, setup.control)


def reduced_joint(reduced: ReducedModel, policy: ReactivePolicy):
    """Same joint read off the reduced process over one phase-0/phase-1 pair.

    Returns ``(J, leak)`` where ``leak`` is probability mass that lands on
    composite labels with no base counterpart.
    """
    pm = reduced.model
    dist = stationary_phase_distributions(pm, policy, method="direct")
    ph0, ph1 = pm.phases
    x0 = dist.marginals[0][:, None, None] * ph0.observation[:, :, None] * policy.kernels[0][None]
    y = np.einsum("ioa,iaj->ioaj", x0, ph0.transition)
    z = np.einsum("ioaj,jp,pb->ioajpb", y, ph1.observation, policy.kernels[1])
    # marginalize what the map does not need: phase-1 state and observation
    z = z.sum(axis=(3, 4))  # (S', O', A'0, A'1)
    K, S, O, A = reduced.n_memory, reduced.n_states, reduced.n_obs, reduced.n_actions
    J = np.zeros((S, O, K, A))
    total = z.sum()
    s_of = np.arange(K * S) % S
    o_of = np.arange(K * (O + 1)) % (O + 1)
    i, o, a0, a1 = np.nonzero(z)
    ok = (o_of[o] < O) & (a0 < K) & (a1 >= K)
    np.add.at(J, (s_of[i[ok]], o_of[o[ok]], a0[ok], a1[ok] - K), z[i[ok], o[ok], a0[ok], a1[ok]])
    return J, float(total - J.sum())


def check_equivalence(setup: RetentiveSetup, tolerance: float = 1e-9, reduced: Optional[ReducedModel] = None,
                      policy: Optional[ReactivePolicy] = None) -> EquivalenceReport:
    """Exact sup-norm gap between the stationary laws of ``(s, o, m, a)``."""
    if reduced is None:
        reduced = build_reduced_pomdp(setup)
    if policy is None:
        policy = embed_retentive_policy(setup, reduced)
    diag = diagnose_kernel(retentive_kernel(setup))
    red_diag = diagnose_kernel(full_cycle_kernel(reduced.model, policy))
    if not (diag.unique_stationary and red_diag.unique_stationary):
        return EquivalenceReport(None, None, None, f"retentive {diag.status}, reduced {red_diag.status}", None)
    J = retentive_joint(setup)
    J2, leak = reduced_joint(reduced, policy)
    dev = float(np.max(np.abs(J - J2))) + abs(leak)
    r_cost = float(np.einsum("sona,sa->", J, setup.base.cost))
    dist = stationary_phase_distributions(reduced.model, policy, method="direct")
    red_cost = external_cost(reduced.model, policy, dist)
    return EquivalenceReport(dev, r_cost, red_cost, diag.status, dev < tolerance)

