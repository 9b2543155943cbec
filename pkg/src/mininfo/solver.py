"""Free-energy minimization for periodic reactive policies.

The outer loop alternates three steps until the free energy settles:

1. action marginals from the current policy,
2. the periodic value function from a linear solve of the backward
   recursion,
3. a forward pass that propagates state marginals and applies the Gibbs
   policy update step by step until the trajectory closes a limit cycle.

The cycle found in step 3 fixes the policy period for the next round, so
period doubling shows up as a change in cycle length.
"""

from __future__ import annotations

import logging
from collections import deque
from math import lcm
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .core import BeliefTable, PhaseDistribution, ReactivePolicy, as_periodic, check_policy
from .dynamics import (
    compute_beliefs,
    ergodicity_check,
    phase_average_cost,
    policy_state_kernel,
    stationary_phase_distributions,
)
from .information import (
    InfoBreakdown,
    MarginalSet,
    information_costs,
    marginal_policy,
    pointwise_information,
)

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 512
MONOTONE_SLACK = 1e-7
CONVERGED_RESIDUAL = 1e-6
CLOSURE_FACTOR = 0.1


class DegenerateUpdateError(ArithmeticError):
    """The prior has no support on any allowed action for some observation."""


@dataclass(frozen=True)
class ValueFunction:
    """Periodic values ``nu[t, s]`` and offsets ``phi[t]``.

    Gauge: ``sum_s pbar_t(s) nu_t(s) = 0`` for every phase.
    """

    nu: np.ndarray
    phi: np.ndarray
    clock_aware: bool

    @property
    def period(self) -> int:
        return len(self.nu)


@dataclass(frozen=True)
class SolverOptions:
    beta: float
    clock_aware: Optional[bool] = None
    max_period: int = 16
    cycle_tolerance: float = 1e-8
    fe_tolerance: float = 1e-9
    max_outer_iterations: int = 10_000
    perturbation_scale: float = 1e-3
    rng_seed: Optional[int] = 0
    # cycles closer than this to a shorter period are folded onto it
    period_tolerance: float = 1e-6
    max_forward_steps: int = 20_000
    min_outer_iterations: int = 1
    initial_period: Optional[int] = None

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        for name in ("cycle_tolerance", "fe_tolerance", "period_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be non-negative")
        if self.max_period < 1:
            raise ValueError("max_period must be >= 1")
        if self.max_outer_iterations < 1 or self.max_forward_steps < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.clock_aware is None:
            object.__setattr__(self, "clock_aware", self.max_period > 1)


@dataclass(frozen=True)
class SolverState:
    distribution: PhaseDistribution
    beliefs: BeliefTable
    marginals: MarginalSet
    values: ValueFunction


@dataclass
class SolverReport:
    beta: float
    clock_aware: bool
    free_energy: float
    external_cost: float
    info: InfoBreakdown
    detected_period: int
    outer_iterations: int
    residuals: dict
    converged: bool
    cycle_mismatch: float = 0.0
    ergodicity: str = "ergodic"
    monotonicity_violations: int = 0
    free_energy_trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["info"] = {
            "obs_info_nats": self.info.obs_info,
            "clock_info_nats": self.info.clock_info,
            "total_nats": self.info.total,
            "obs_info_bits": self.info.obs_info_bits,
            "clock_info_bits": self.info.clock_info_bits,
            "total_bits": self.info.total_bits,
        }
        return d


# -- backward recursion ------------------------------------------------------


def _info_weight(i: np.ndarray, beta: float) -> np.ndarray:
    if beta > 0:
        return i / beta
    # beta = 0 only admits policies equal to their prior
    return np.where(i == 0, 0.0, np.inf)


def _phase_costs(pm, policy, beliefs, marginals, beta, clock_aware):
    """Expected instantaneous free-energy cost ``g[t, s]`` per state."""
    info = pointwise_information(policy, marginals, clock_aware)
    g = np.empty((policy.period, pm.n_states))
    for t in range(policy.period):
        m = pm.phases[t % pm.n_phases]
        pi = policy.kernels[t]
        it = np.where(beliefs.support_mask[t][:, None], info[t], 0.0)
        with np.errstate(invalid="ignore"):
            f_info = np.where(pi > 0, pi * _info_weight(it, beta), 0.0).sum(axis=1)  # (O,)
        g[t] = m.observation @ f_info + np.sum((m.observation @ pi) * m.cost, axis=1)
    return g


def evaluate_values(model, policy, dist, marginals, beta, clock_aware=True, beliefs=None) -> ValueFunction:
    """Solve the periodic backward recursion under the mean-zero gauge."""
    pm = as_periodic(model)
    if beliefs is None:
        beliefs = compute_beliefs(pm, dist)
    g = _phase_costs(pm, policy, beliefs, marginals, beta, clock_aware)
    P = np.stack([policy_state_kernel(pm, policy, t) for t in range(policy.period)])
    T, S = g.shape
    if T * S <= DIRECT_SOLVE_LIMIT:
        nu, phi = _solve_values_direct(P, g, dist.marginals)
    else:
        nu, phi = _solve_values_iterative(P, g, dist.marginals)
    return ValueFunction(nu, phi, clock_aware)


def _solve_values_direct(P, g, pbar):
    T, S = g.shape
    n = T * S
    A = np.zeros((n + T, n + T))
    b = np.zeros(n + T)
    for t in range(T):
        rows = slice(t * S, (t + 1) * S)
        nxt = (t + 1) % T
        A[rows, rows] += np.eye(S)
        A[rows, nxt * S:(nxt + 1) * S] -= P[t]
        A[rows, n + t] = 1.0
        b[rows] = g[t]
        A[n + t, rows] = pbar[t]
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        logger.warning("singular value system; falling back to least squares")
        x = np.linalg.lstsq(A, b, rcond=None)[0]
    return x[:n].reshape(T, S), x[n:]


def _solve_values_iterative(P, g, pbar, tol=1e-12, max_sweeps=100_000, damping=0.5):
    T, S = g.shape
    phi = np.einsum("ts,ts->t", pbar, g)
    nu = np.zeros((T, S))
    for _ in range(max_sweeps):
        old = nu.copy()
        for t in reversed(range(T)):
            new = g[t] - phi[t] + P[t] @ nu[(t + 1) % T]
            new -= pbar[t] @ new
            nu[t] = (1 - damping) * nu[t] + damping * new
        if np.max(np.abs(nu - old)) < tol:
            break
    else:
        logger.warning("iterative value evaluation hit its sweep cap")
    return nu, phi


# -- policy update -----------------------------------------------------------


def _gibbs(prior, d, beta, allowed=None, fallback=None, support=None):
    """Row-wise ``prior * exp(-beta d) / Z`` with min-shifted exponent."""
    O, A = d.shape
    w_prior = np.broadcast_to(prior, (O, A)).copy()
    if allowed is not None:
        w_prior = w_prior * allowed
    if support is None:
        support = np.ones(O, dtype=bool)
    ok = w_prior > 0
    dead = support & ~ok.any(axis=1)
    if dead.any():
        raise DegenerateUpdateError(f"no prior mass on allowed actions for observation {int(np.flatnonzero(dead)[0])}")
    dd = np.where(ok, np.where(support[:, None], d, 0.0), np.inf)
    shift = dd.min(axis=1, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        e = np.where(ok, np.exp(-beta * (np.where(ok, dd, 0.0) - shift)), 0.0)
    w = w_prior * e
    w /= np.where(ok.any(axis=1), w.sum(axis=1), 1.0)[:, None]
    if fallback is not None:
        w = np.where(support[:, None], w, fallback)
    return w


def policy_update(beliefs, marginals: MarginalSet, distortion, beta: float, phase: int = 0,
                  prior=None, allowed=None, current=None) -> np.ndarray:
    """Gibbs update of one phase's kernel ``pi_t(a|o)``.

    The prior is the phase marginal, or the phase-averaged marginal for a
    clock-aware distortion, unless ``prior`` is given explicitly. Masked
    observations keep ``current`` (or the prior when it is omitted).
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if prior is None:
        prior = marginals.prior(phase, distortion.clock_aware)
    prior = np.asarray(prior, dtype=float)
    support = distortion.support_mask
    if current is None:
        current = np.broadcast_to(prior, distortion.values.shape)
    return _gibbs(prior, distortion.values, beta, allowed, current, support)


# -- state evaluation and residuals ------------------------------------------


def evaluate_state(model, policy, beta, clock_aware=True):
    """Exact state for a fixed policy: marginals, beliefs, priors, values."""
    pm = as_periodic(model)
    dist = stationary_phase_distributions(pm, policy, method="direct")
    beliefs = compute_beliefs(pm, dist)
    marg = marginal_policy(policy, beliefs)
    values = evaluate_values(pm, policy, dist, marg, beta, clock_aware, beliefs)
    return SolverState(dist, beliefs, marg, values)


def residuals(model, policy, state: SolverState, beta, clock_aware=True) -> dict:
    """Sup-norm violation of each stationarity condition.

    ``forward``: one-step marginal recursion (cyclic); ``marginal``: action
    marginals; ``backward``: value recursion; ``policy``: Gibbs update.
    """
    pm = as_periodic(model)
    T = policy.period
    pbar = state.distribution.marginals
    P = np.stack([policy_state_kernel(pm, policy, t) for t in range(T)])
    fwd = max(float(np.max(np.abs(pbar[(t + 1) % T] - pbar[t] @ P[t]))) for t in range(T))

    bel = state.beliefs
    per_phase = np.einsum("to,toa->ta", bel.obs_marginals, policy.kernels)
    marg = max(
        float(np.max(np.abs(per_phase - state.marginals.per_phase))),
        float(np.max(np.abs(state.marginals.per_phase.mean(axis=0) - state.marginals.phase_averaged))),
    )

    nu, phi = state.values.nu, state.values.phi
    g = _phase_costs(pm, policy, bel, state.marginals, beta, clock_aware)
    with np.errstate(invalid="ignore"):
        bwd = max(float(np.max(np.abs(nu[t] - (g[t] + P[t] @ nu[(t + 1) % T] - phi[t])))) for t in range(T))

    pol = 0.0
    for t in range(T):
        m = pm.phases[t % pm.n_phases]
        q = m.cost + m.transition @ nu[(t + 1) % T]
        d = bel.beliefs[t] @ q
        prior = state.marginals.prior(t, clock_aware)
        upd = _gibbs(prior, d, beta, pm.allowed_actions[t % pm.n_phases], policy.kernels[t], bel.support_mask[t])
        pol = max(pol, float(np.max(np.abs(upd - policy.kernels[t]))))
    out = {"forward": fwd, "marginal": marg, "backward": bwd, "policy": pol}
    return {k: (v if np.isfinite(v) else float("inf")) for k, v in out.items()}


def _objective(pm, policy, state, beta, clock_aware):
    info = information_costs(policy, state.beliefs, state.marginals)
    cost = phase_average_cost(pm, policy, state.distribution)
    return info.objective(clock_aware) / beta + cost, info, cost


def conditional_action_entropy(policy, beliefs) -> float:
    """Mean over phases and observations of ``H(pi_t(.|o))`` in nats."""
    k = policy.kernels
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(k > 0, k * np.log(k), 0.0).sum(axis=2)
    return float(np.mean(np.sum(beliefs.obs_marginals * h, axis=1)))


# -- forward limit-cycle pass ------------------------------------------------


@dataclass(frozen=True)
class CycleResult:
    policy: ReactivePolicy
    period: int
    mismatch: float
    steps: int
    closed: bool


def forward_cycle(model, policy, state: SolverState, beta, clock_aware, max_period,
                  cycle_tolerance, max_steps) -> CycleResult:
    """Iterate the forward recursion and Gibbs update with the values held
    fixed until the (marginal, policy) trajectory repeats.

    A period ``T`` is accepted once every snapshot matches the one ``T``
    steps earlier within ``cycle_tolerance`` for ``T`` steps in a row; the
    smallest such ``T`` (a multiple of the model's phase count) wins.
    """
    pm = as_periodic(model)
    M = pm.n_phases
    Tv = policy.period
    nu = state.values.nu
    Q = [pm.phases[j % M].cost + pm.phases[j % M].transition @ nu[(j + 1) % Tv] for j in range(Tv)]
    sig = [m.observation for m in pm.phases]
    trans = [m.transition for m in pm.phases]
    allowed = pm.allowed_actions
    marg = state.marginals

    candidates = [T for T in range(M, max_period + 1, M)] or [M]
    # periods up to twice the cap are watched too, so that a cycle that is
    # too long to represent ends the pass early instead of running it out
    watched = list(range(M, 2 * max(candidates) + 1, M))
    hist = deque(maxlen=max(watched) + 1)
    runs = {T: 0 for T in watched}
    last_mis = {T: np.inf for T in watched}
    x = state.distribution.marginals[0].copy()
    found = None
    k = 0
    for k in range(max_steps):
        mph = k % M
        j = k % Tv
        joint = x[:, None] * sig[mph]
        om = joint.sum(axis=0)
        supp = om > 0
        b = joint.T / np.where(supp, om, 1.0)[:, None]
        d = b @ Q[j]
        prior = marg.prior(j, clock_aware)
        pi = _gibbs(prior, d, beta, allowed[mph], policy.kernels[j], supp)
        snap = np.concatenate([x, pi.ravel()])
        for T in watched:
            if len(hist) >= T:
                mis = float(np.max(np.abs(snap - hist[-T][1])))
                last_mis[T] = mis
                runs[T] = runs[T] + 1 if mis < cycle_tolerance else 0
        hist.append((k, snap, pi))
        for T in watched:
            if runs[T] >= T:
                found = T
                break
        if found:
            break
        x = x @ np.einsum("sa,sat->st", sig[mph] @ pi, trans[mph])
        x /= x.sum()
    closed = found is not None and found <= max(candidates)
    if closed:
        window = found
    else:
        # an unresolved oscillation is averaged over whole cycles, which
        # damps it towards its centre instead of freezing one side of it
        if found is not None:
            window = found
            found = max(T for T in candidates if window % T == 0)
        else:
            found = min(candidates, key=last_mis.get)
            window = min(len(hist), 2 * max(candidates)) // found * found
        logger.debug("forward pass did not close within period %d (mismatch %.3g)", max(candidates), last_mis[found])
    tail = list(hist)[-window:]
    kernels = np.zeros((found, pm.n_obs, pm.n_actions))
    for step, _, pi in tail:
        kernels[step % found] += pi
    kernels /= kernels.sum(axis=2, keepdims=True)
    mismatch = 0.0 if closed else float(last_mis[found])
    return CycleResult(ReactivePolicy(kernels), found, mismatch, k + 1, closed)


# -- initialization and period folding ---------------------------------------


def initial_policy(model, options: SolverOptions, start: Optional[ReactivePolicy] = None) -> ReactivePolicy:
    """Start policy: ``start`` (or uniform) tiled to the trial period, plus
    seeded non-negative noise of size ``perturbation_scale``, renormalized.

    The trial period doubles the start period when ``max_period`` allows,
    so that period-doubling directions are present in the perturbation.
    """
    pm = as_periodic(model)
    M = pm.n_phases
    if start is None:
        start = ReactivePolicy.uniform(pm.n_obs, pm.n_actions, M, pm.allowed_actions)
    start = check_policy(pm, start)
    if options.initial_period is not None:
        period = options.initial_period
    else:
        period = 2 * start.period if 2 * start.period <= options.max_period else start.period
    if period % start.period or period % M:
        raise ValueError(f"initial period {period} incompatible with start period {start.period} and {M} phases")
    k = np.tile(start.kernels, (period // start.period, 1, 1))
    if options.perturbation_scale > 0:
        rng = np.random.default_rng(options.rng_seed)
        noise = rng.uniform(0.0, options.perturbation_scale, size=k.shape)
        mask = np.stack([pm.allowed_actions[t % M] for t in range(period)])[:, None, :]
        k = k + noise * mask
        k /= k.sum(axis=2, keepdims=True)
    return ReactivePolicy(k)


def minimal_period(policy, state, tolerance, n_phases=1) -> int:
    """Smallest divisor period (multiple of ``n_phases``) the cycle repeats
    at within ``tolerance``."""
    T = policy.period
    pbar = state.distribution.marginals
    for d in range(n_phases, T, n_phases):
        if T % d:
            continue
        if all(
            np.max(np.abs(policy.kernels[t] - policy.kernels[t % d])) < tolerance
            and np.max(np.abs(pbar[t] - pbar[t % d])) < tolerance
            for t in range(T)
        ):
            return d
    return T


def fold_policy(policy, period) -> ReactivePolicy:
    """Average phases congruent modulo ``period``."""
    k = policy.kernels.reshape(policy.period // period, period, *policy.kernels.shape[1:]).mean(axis=0)
    return ReactivePolicy(k / k.sum(axis=2, keepdims=True))


def _simplest_period(pm, policy, state, F, options):
    """Fold onto the shortest period that repeats within ``period_tolerance``
    or whose folded policy is a fixed point no worse in free energy.

    The second test catches slowly decaying period-doubling modes near a
    bifurcation, where the outer loop stalls before the mode falls below
    ``period_tolerance``.
    """
    beta, clock, M = options.beta, options.clock_aware, pm.n_phases
    d = minimal_period(policy, state, options.period_tolerance, M)
    if d < policy.period:
        policy = fold_policy(policy, d)
        return policy, evaluate_state(pm, policy, beta, clock)
    for d in range(M, policy.period, M):
        if policy.period % d:
            continue
        folded = fold_policy(policy, d)
        fstate = evaluate_state(pm, folded, beta, clock)
        if (_objective(pm, folded, fstate, beta, clock)[0] <= F + options.fe_tolerance
                and max(residuals(pm, folded, fstate, beta, clock).values()) < CONVERGED_RESIDUAL):
            return folded, fstate
    return policy, state


# -- driver ------------------------------------------------------------------


def solve(model, options: SolverOptions, start: Optional[ReactivePolicy] = None):
    """Minimize the free energy; returns ``(policy, state, report)``.

    ``start`` warm-starts from an existing policy (it is still tiled and
    perturbed per ``options``).
    """
    pm = as_periodic(model)
    beta, clock = options.beta, options.clock_aware
    policy = initial_policy(pm, options, start)
    state = evaluate_state(pm, policy, beta, clock)
    F, info, cost = _objective(pm, policy, state, beta, clock)
    trace = [F]
    best = (F, policy, state)
    violations = 0
    loop_converged = False
    mismatch = 0.0
    it = 0
    for it in range(1, options.max_outer_iterations + 1):
        # closing cycles an order tighter than the outer change test keeps
        # the closure residue from masquerading as policy movement
        cyc = forward_cycle(pm, policy, state, beta, clock, options.max_period,
                            CLOSURE_FACTOR * options.cycle_tolerance, options.max_forward_steps)
        new_policy = cyc.policy
        new_state = evaluate_state(pm, new_policy, beta, clock)
        newF, info, cost = _objective(pm, new_policy, new_state, beta, clock)
        if newF > F + MONOTONE_SLACK:
            violations += 1
            logger.debug("free energy rose by %.3g at outer iteration %d", newF - F, it)
        # compare over a common cycle: a mode hovering at the cycle
        # tolerance can flip the detected period between iterations
        L = lcm(new_policy.period, policy.period)
        change = float(np.max(np.abs(new_policy.tile(L).kernels - policy.tile(L).kernels)))
        dF = abs(newF - F)
        policy, state, F, mismatch = new_policy, new_state, newF, cyc.mismatch
        trace.append(F)
        if F < best[0]:
            best = (F, policy, state)
        if (it >= options.min_outer_iterations and cyc.closed
                and dF < options.fe_tolerance and change < options.cycle_tolerance):
            loop_converged = True
            break

    if not loop_converged:
        logger.info("solver stopped after %d outer iterations without converging", it)
        F, policy, state = best

    policy, state = _simplest_period(pm, policy, state, F, options)
    F, info, cost = _objective(pm, policy, state, beta, clock)

    res = residuals(pm, policy, state, beta, clock)
    converged = loop_converged and max(res.values()) < CONVERGED_RESIDUAL
    erg = ergodicity_check(pm, policy)
    if not erg.ok:
        logger.info("induced chain is %s", erg.status)
    scale = pm.phases_per_step
    report = SolverReport(
        beta=beta,
        clock_aware=clock,
        free_energy=scale * F,
        external_cost=scale * cost,
        info=info.scaled(scale),
        detected_period=policy.period,
        outer_iterations=it,
        residuals=res,
        converged=converged,
        cycle_mismatch=mismatch,
        ergodicity=erg.status,
        monotonicity_violations=violations,
        free_energy_trace=[scale * f for f in trace],
    )
    return policy, state, report


def with_beta(options: SolverOptions, beta: float, **changes) -> SolverOptions:
    return replace(options, beta=beta, **changes)
