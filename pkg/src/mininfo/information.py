"""Information terms of the free-energy objective (all in nats)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BeliefTable, ReactivePolicy, as_periodic

LN2 = float(np.log(2.0))


class DivergenceError(ArithmeticError):
    """A KL term with mass where the reference has none."""


@dataclass(frozen=True)
class MarginalSet:
    per_phase: np.ndarray  # (T, A)
    phase_averaged: np.ndarray  # (A,)

    def prior(self, phase: int, clock_aware: bool) -> np.ndarray:
        return self.phase_averaged if clock_aware else self.per_phase[phase % len(self.per_phase)]


@dataclass(frozen=True)
class InfoBreakdown:
    obs_info: float
    clock_info: float

    @property
    def total(self) -> float:
        return self.obs_info + self.clock_info

    @property
    def obs_info_bits(self) -> float:
        return self.obs_info / LN2

    @property
    def clock_info_bits(self) -> float:
        return self.clock_info / LN2

    @property
    def total_bits(self) -> float:
        return self.total / LN2

    def scaled(self, factor: float) -> "InfoBreakdown":
        return InfoBreakdown(self.obs_info * factor, self.clock_info * factor)

    def objective(self, clock_aware: bool) -> float:
        return self.total if clock_aware else self.obs_info


@dataclass(frozen=True)
class DistortionTable:
    values: np.ndarray  # (O, A), NaN on masked observations
    clock_aware: bool
    support_mask: np.ndarray


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """``D(p||q)`` in nats with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mass = p > 0
    if np.any(q[mass] <= 0):
        raise DivergenceError("p puts mass where q has none")
    return float(np.sum(p[mass] * np.log(p[mass] / q[mass])))


def marginal_policy(policy: ReactivePolicy, beliefs: BeliefTable) -> MarginalSet:
    if policy.period != beliefs.period:
        raise ValueError("policy and beliefs have different phase counts")
    per_phase = np.einsum("to,toa->ta", beliefs.obs_marginals, policy.kernels)
    return MarginalSet(per_phase, per_phase.mean(axis=0))


def information_costs(policy: ReactivePolicy, beliefs: BeliefTable, marginals: MarginalSet) -> InfoBreakdown:
    T = policy.period
    if not (beliefs.period == T == len(marginals.per_phase)):
        raise ValueError("inconsistent phase counts")
    obs = 0.0
    clock = 0.0
    for t in range(T):
        for o in np.flatnonzero(beliefs.support_mask[t]):
            obs += beliefs.obs_marginals[t, o] * kl_divergence(policy.kernels[t, o], marginals.per_phase[t])
        clock += kl_divergence(marginals.per_phase[t], marginals.phase_averaged)
    # KL sums are non-negative; clip rounding noise
    return InfoBreakdown(max(obs / T, 0.0), max(clock / T, 0.0))


def pointwise_information(policy: ReactivePolicy, marginals: MarginalSet, clock_aware: bool) -> np.ndarray:
    """``log pi_t(a|o) / prior(a)`` per phase; 0 where the policy has no mass."""
    out = np.zeros(policy.kernels.shape)
    for t in range(policy.period):
        prior = marginals.prior(t, clock_aware)
        pi = policy.kernels[t]
        mass = pi > 0
        with np.errstate(divide="ignore"):
            ratio = np.log(np.where(mass, pi, 1.0)) - np.log(np.broadcast_to(prior, pi.shape))
        out[t] = np.where(mass, ratio, 0.0)
    return out


def free_energy(info: InfoBreakdown, external: float, beta: float, clock_aware: bool = True) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return info.objective(clock_aware) / beta + external


def distortion(model, beliefs: BeliefTable, values, phase: int, clock_aware: bool = True) -> DistortionTable:
    """Expected immediate cost plus next-phase value under the belief.

    ``values`` is anything with a ``nu`` array of shape ``(period, S)``.
    """
    pm = as_periodic(model)
    m = pm.phases[phase % pm.n_phases]
    nu_next = values.nu[(phase + 1) % len(values.nu)]
    q = m.cost + m.transition @ nu_next  # (S,A)
    d = beliefs.beliefs[phase] @ q
    mask = beliefs.support_mask[phase]
    d = np.where(mask[:, None], d, np.nan)
    return DistortionTable(d, clock_aware, mask)
