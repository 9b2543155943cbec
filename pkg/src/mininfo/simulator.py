"""Seeded Monte Carlo rollouts used as an empirical cross-check."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from math import lcm
from typing import Optional

import numpy as np
from numba import njit

from .core import ReactivePolicy, as_periodic, check_policy
from .dynamics import diagnose_kernel, external_cost, full_cycle_kernel, stationary_phase_distributions

MIN_COLD_BURN_IN = 1000


@njit(cache=True)
def _draw(cum, u):
    n = cum.shape[0]
    for i in range(n - 1):
        if u < cum[i]:
            return i
    return n - 1


@njit(cache=True)
def _run(cum_sig, cum_pi, cum_p, s0, n_steps, u):
    # generative order per step: s -> o -> a -> s'
    M = cum_sig.shape[0]
    T = cum_pi.shape[0]
    states = np.empty(n_steps, np.int64)
    obs = np.empty(n_steps, np.int64)
    acts = np.empty(n_steps, np.int64)
    s = s0
    for t in range(n_steps):
        m = t % M
        o = _draw(cum_sig[m, s], u[t, 0])
        a = _draw(cum_pi[t % T, o], u[t, 1])
        states[t] = s
        obs[t] = o
        acts[t] = a
        s = _draw(cum_p[m, s, a], u[t, 2])
    return states, obs, acts


@dataclass(frozen=True)
class RolloutStats:
    steps: int
    burn_in: int
    seed: Optional[int]
    period: int
    cost_mean: float
    cost_se: float
    batch_length: int
    occupancy: np.ndarray  # (period, S)
    obs_info: float
    clock_info: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["occupancy"] = self.occupancy.tolist()
        return d


def _plugin_information(counts: np.ndarray):
    """Plug-in ``I[o;a|t]`` averaged over phases and ``I[t;a]`` from counts
    ``[t, o, a]``."""
    p = counts / counts.sum()
    pt = p.sum(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        p_oa_t = p / pt[:, None, None]
        po_t = p_oa_t.sum(axis=2, keepdims=True)
        pa_t = p_oa_t.sum(axis=1, keepdims=True)
        r = np.where(p_oa_t > 0, p_oa_t * np.log(p_oa_t / (po_t * pa_t)), 0.0)
        obs = float(np.sum(pt * np.nan_to_num(r).sum(axis=(1, 2))))
        pta = p.sum(axis=1)
        pa = pta.sum(axis=0)
        r2 = np.where(pta > 0, pta * np.log(pta / (pt[:, None] * pa[None])), 0.0)
    return max(obs, 0.0), max(float(np.nan_to_num(r2).sum()), 0.0)


def rollout(model, policy: ReactivePolicy, steps: int, burn_in: int = 0, seed: Optional[int] = 0,
            batch_cycles: int = 1) -> RolloutStats:
    """Simulate ``steps`` recorded steps after ``burn_in`` discarded ones.

    The first state is drawn from the stationary phase-0 marginal when the
    induced chain has one; otherwise uniformly, with at least
    ``MIN_COLD_BURN_IN`` burn-in steps. Burn-in is rounded up to whole
    cycles so recording starts at phase 0. The cost standard error uses
    batch means over ``batch_cycles`` whole cycles (one cycle per batch by
    default); raise it for strongly autocorrelated chains.
    """
    pm = as_periodic(model)
    policy = check_policy(pm, policy)
    T = policy.period
    if steps < T:
        raise ValueError(f"steps must be at least the period {T}")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    if batch_cycles < 1:
        raise ValueError("batch_cycles must be >= 1")
    rng = np.random.default_rng(seed)
    S = pm.n_states
    if diagnose_kernel(full_cycle_kernel(pm, policy)).unique_stationary:
        p0 = stationary_phase_distributions(pm, policy, method="direct").marginals[0]
    else:
        p0 = np.full(S, 1.0 / S)
        burn_in = max(burn_in, MIN_COLD_BURN_IN)
    burn = -(-burn_in // T) * T
    s0 = int(rng.choice(S, p=p0))
    total = burn + steps
    u = rng.random((total, 3))
    cum_sig = np.cumsum(np.stack([m.observation for m in pm.phases]), axis=-1)
    cum_p = np.cumsum(np.stack([m.transition for m in pm.phases]), axis=-1)
    cum_pi = np.cumsum(policy.kernels, axis=-1)
    states, obs, acts = _run(cum_sig, cum_pi, cum_p, s0, total, u)
    states, obs, acts = states[burn:], obs[burn:], acts[burn:]

    M = pm.n_phases
    phase = np.arange(steps) % T
    cost_table = np.stack([m.cost for m in pm.phases])
    costs = cost_table[np.arange(steps) % M, states, acts] * pm.phases_per_step

    n_cycles = steps // T
    per_cycle = costs[: n_cycles * T].reshape(n_cycles, T).mean(axis=1)
    n_batches = n_cycles // batch_cycles
    if n_batches >= 2:
        batches = per_cycle[: n_batches * batch_cycles].reshape(n_batches, batch_cycles).mean(axis=1)
        se = float(batches.std(ddof=1) / np.sqrt(n_batches))
    else:
        se = float("inf")

    occ = np.zeros((T, S))
    np.add.at(occ, (phase, states), 1.0)
    occ /= occ.sum(axis=1, keepdims=True)
    counts = np.zeros((T, pm.n_obs, pm.n_actions))
    np.add.at(counts, (phase, obs, acts), 1.0)
    obs_info, clock_info = _plugin_information(counts)
    return RolloutStats(steps, burn, seed, T, float(costs.mean()), se, batch_cycles * T, occ,
                        obs_info, clock_info)


@dataclass(frozen=True)
class CrosscheckReport:
    analytic_cost: float
    empirical_cost: float
    cost_se: float
    cost_z: float
    occupancy_deviation: float
    occupancy_flag: bool

    def to_dict(self) -> dict:
        return asdict(self)


def crosscheck(model, policy: ReactivePolicy, stats: RolloutStats, analytic, occupancy_tolerance: float = 0.05
               ) -> CrosscheckReport:
    """Compare a rollout with analytic values.

    ``analytic`` is a solver state (or anything with a ``distribution``) for
    ``policy``. Occupancies with different periods are compared over the
    least common multiple of the two cycles.
    """
    dist = getattr(analytic, "distribution", analytic)
    cost = external_cost(model, policy, dist)
    z = (stats.cost_mean - cost) / stats.cost_se if stats.cost_se > 0 else (
        0.0 if stats.cost_mean == cost else float("inf"))
    Ta, Ts = dist.period, stats.period
    dev = max(
        float(np.max(np.abs(stats.occupancy[t % Ts] - dist.marginals[t % Ta])))
        for t in range(lcm(Ta, Ts))
    )
    return CrosscheckReport(cost, stats.cost_mean, stats.cost_se, float(z), dev, dev > occupancy_tolerance)
