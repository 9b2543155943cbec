"""Forward machinery: induced state kernels, periodic stationary marginals,
beliefs, ergodicity diagnosis and the average external cost."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import BeliefTable, PhaseDistribution, ReactivePolicy, as_periodic

logger = logging.getLogger(__name__)

STATIONARY_TOL = 1e-12
STATIONARY_MAX_ITER = 100_000


class StationaryError(RuntimeError):
    """Power iteration on the cycle kernel failed to settle."""


def policy_state_kernel(model, policy: ReactivePolicy, phase: int) -> np.ndarray:
    """``P[s, s'] = sum_{o,a} sigma(o|s) pi_t(a|o) p(s'|s,a)`` at ``phase``."""
    if not 0 <= phase < policy.period:
        raise IndexError(f"phase {phase} outside policy period {policy.period}")
    pm = as_periodic(model)
    m = pm.phases[phase % pm.n_phases]
    return _kernel(m.observation, policy.kernels[phase], m.transition)


def _kernel(sigma, pi, p):
    # (S,O)@(O,A) -> probability of each action per state
    act = sigma @ pi
    return np.einsum("sa,sat->st", act, p)


def cycle_kernels(model, policy: ReactivePolicy) -> np.ndarray:
    return np.stack([policy_state_kernel(model, policy, t) for t in range(policy.period)])


def _cycle_product(kernels: np.ndarray) -> np.ndarray:
    out = kernels[0]
    for k in kernels[1:]:
        out = out @ k
    return out


def stationary_phase_distributions(
    model,
    policy: ReactivePolicy,
    tolerance: float = STATIONARY_TOL,
    max_iter: int = STATIONARY_MAX_ITER,
    method: str = "power",
) -> PhaseDistribution:
    """Periodic stationary marginals of the chain induced by ``policy``.

    The phase-0 marginal is the fixed point of the full-cycle kernel,
    found by power iteration (``method="power"``) or by a linear solve
    (``method="direct"``); later phases follow by one-step propagation.
    """
    P = cycle_kernels(model, policy)
    K = _cycle_product(P)
    n = K.shape[0]
    if method == "power":
        x = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            y = x @ K
            if np.max(np.abs(y - x)) < tolerance:
                x = y
                break
            x = y
        else:
            raise StationaryError(
                f"cycle-kernel power iteration did not converge in {max_iter} steps; "
                "the induced chain is probably not ergodic"
            )
    elif method == "direct":
        x = solve_stationary(K)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PhaseDistribution(propagate(x, P))


def solve_stationary(K: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    A = np.vstack([K.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def propagate(x0: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Apply the one-step recursion through a cycle starting at ``x0``."""
    out = np.empty((len(kernels), len(x0)))
    out[0] = x0
    for t in range(1, len(kernels)):
        out[t] = out[t - 1] @ kernels[t - 1]
    return out


@dataclass(frozen=True)
class Ergodicity:
    """Reachability diagnosis of the full-cycle chain.

    ``status`` is ``"ergodic"``, ``"reducible"`` or ``"periodic-chain"``.
    ``unique_stationary`` holds when exactly one closed class exists, which
    is all the stationary computations need.
    """

    status: str
    unique_stationary: bool
    transient_states: tuple
    closed_classes: tuple
    chain_period: int

    @property
    def ok(self) -> bool:
        return self.status == "ergodic"


def full_cycle_kernel(model, policy: ReactivePolicy) -> np.ndarray:
    """State kernel over one whole policy cycle starting at phase 0."""
    return _cycle_product(cycle_kernels(model, policy))


def ergodicity_check(model, policy: ReactivePolicy) -> Ergodicity:
    return diagnose_kernel(full_cycle_kernel(model, policy))


def diagnose_kernel(K: np.ndarray) -> Ergodicity:
    """Class structure of a single stochastic matrix."""
    adj = K > 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if not adj[np.ix_(members, outside)].any():
            closed.append(tuple(int(i) for i in members))
    in_closed = {i for cls in closed for i in cls}
    transient = tuple(i for i in range(len(K)) if i not in in_closed)
    period = _class_period(adj, closed[0]) if len(closed) == 1 else 1
    if n_comp > 1:
        status = "reducible"
    elif period > 1:
        status = "periodic-chain"
    else:
        status = "ergodic"
    return Ergodicity(status, len(closed) == 1, transient, tuple(closed), period)


def _class_period(adj: np.ndarray, members) -> int:
    members = list(members)
    sub = adj[np.ix_(members, members)]
    level = {0: 0}
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(sub[u]):
                v = int(v)
                if v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
                else:
                    g = gcd(g, level[u] + 1 - level[v])
        frontier = nxt
    return abs(g) if g else 1


def compute_beliefs(model, dist: PhaseDistribution) -> BeliefTable:
    """Posterior ``b_t(s|o)``; observations with zero probability are masked."""
    pm = as_periodic(model)
    T = dist.period
    sig = np.stack([pm.phases[t % pm.n_phases].observation for t in range(T)])
    joint = dist.marginals[:, :, None] * sig  # (T,S,O)
    obs_marg = joint.sum(axis=1)
    support = obs_marg > 0
    safe = np.where(support, obs_marg, 1.0)
    beliefs = np.where(support[:, :, None], np.transpose(joint, (0, 2, 1)) / safe[:, :, None], 0.0)
    return BeliefTable(obs_marg, beliefs, support)


def external_cost(model, policy: ReactivePolicy, dist: PhaseDistribution) -> float:
    """Long-run average cost per original time step."""
    pm = as_periodic(model)
    return pm.phases_per_step * phase_average_cost(pm, policy, dist)


def phase_average_cost(pm, policy, dist) -> float:
    total = 0.0
    for t in range(policy.period):
        m = pm.phases[t % pm.n_phases]
        act = (dist.marginals[t][:, None] * m.observation) @ policy.kernels[t]  # (S,A)
        total += float(np.sum(act * m.cost))
    return total / policy.period
