"""scikit-learn style front ends for the solver and the beta sweep."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .core import as_periodic
from .io import check_model
from .solver import SolverOptions, solve
from .sweep import detect_bifurcations, log_grid, sweep


def _options(est, beta):
    return SolverOptions(
        beta=beta,
        clock_aware=est.clock_aware,
        max_period=est.max_period,
        cycle_tolerance=est.cycle_tolerance,
        fe_tolerance=est.fe_tolerance,
        max_outer_iterations=est.max_outer_iterations,
        perturbation_scale=est.perturbation_scale,
        rng_seed=est.random_state,
    )


class MinInfoPolicy(BaseEstimator):
    """Free-energy optimal reactive policy for a POMDP.

    ``fit`` takes the model (object, mapping, path or ``"builtin:<name>"``)
    in place of ``X``. With ``warm_start=True`` a refit starts from the
    previous policy.

    Attributes set by ``fit``: ``policy_``, ``state_``, ``report_``,
    ``period_``, ``free_energy_``, ``n_iter_``, ``model_``.
    """

    def __init__(self, beta=1.0, clock_aware=None, max_period=16, cycle_tolerance=1e-8,
                 fe_tolerance=1e-9, max_outer_iterations=10_000, perturbation_scale=1e-3,
                 random_state=0, warm_start=False):
        self.beta = beta
        self.clock_aware = clock_aware
        self.max_period = max_period
        self.cycle_tolerance = cycle_tolerance
        self.fe_tolerance = fe_tolerance
        self.max_outer_iterations = max_outer_iterations
        self.perturbation_scale = perturbation_scale
        self.random_state = random_state
        self.warm_start = warm_start

    def fit(self, X, y=None):
        model = check_model(X)
        start = self.policy_ if self.warm_start and hasattr(self, "policy_") else None
        policy, state, report = solve(model, _options(self, self.beta), start)
        self.model_ = model
        self.policy_ = policy
        self.state_ = state
        self.report_ = report
        self.period_ = report.detected_period
        self.free_energy_ = report.free_energy
        self.n_iter_ = report.outer_iterations
        return self

    def _check_obs(self, observations, phase):
        check_is_fitted(self, "policy_")
        obs = np.atleast_1d(np.asarray(observations))
        labels = as_periodic(self.model_).obs_labels
        if obs.dtype.kind in "UO":
            try:
                obs = np.array([labels.index(o) for o in obs])
            except ValueError as exc:
                raise ValueError(f"unknown observation label: {exc}") from None
        obs = obs.astype(int)
        if np.any((obs < 0) | (obs >= len(labels))):
            raise ValueError("observation index out of range")
        return obs, int(phase) % self.period_

    def predict_proba(self, observations, phase=0):
        """Rows ``pi_phase(.|o)`` for each observation."""
        obs, t = self._check_obs(observations, phase)
        return self.policy_.kernels[t][obs]

    def predict(self, observations, phase=0):
        """Most probable action index per observation."""
        return self.predict_proba(observations, phase).argmax(axis=1)

    def sample(self, observations, phase=0, random_state=None):
        rng = check_random_state(random_state)
        proba = self.predict_proba(observations, phase)
        u = rng.random_sample(len(proba))[:, None]
        return (proba.cumsum(axis=1) < u).sum(axis=1).clip(max=proba.shape[1] - 1)

    def score(self, X=None, y=None):
        """Negative free energy of the fitted policy."""
        check_is_fitted(self, "report_")
        return -self.free_energy_


class BetaSweep(BaseEstimator):
    """Continuation over a log-spaced beta grid.

    Attributes set by ``fit``: ``points_``, ``bifurcations_``, ``betas_``.
    """

    def __init__(self, beta_min=0.1, beta_max=10.0, n_betas=64, mode="warm", clock_aware=None,
                 max_period=16, cycle_tolerance=1e-8, fe_tolerance=1e-9, max_outer_iterations=10_000,
                 perturbation_scale=1e-3, random_state=0, n_jobs=1):
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.n_betas = n_betas
        self.mode = mode
        self.clock_aware = clock_aware
        self.max_period = max_period
        self.cycle_tolerance = cycle_tolerance
        self.fe_tolerance = fe_tolerance
        self.max_outer_iterations = max_outer_iterations
        self.perturbation_scale = perturbation_scale
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        model = check_model(X)
        self.betas_ = log_grid(self.beta_min, self.beta_max, self.n_betas)
        self.points_ = sweep(model, self.betas_, _options(self, float(self.betas_[0])), self.mode, self.n_jobs)
        self.bifurcations_ = detect_bifurcations(self.points_)
        self.model_ = model
        return self

    def periods(self):
        check_is_fitted(self, "points_")
        return np.array([p.period for p in self.points_])
