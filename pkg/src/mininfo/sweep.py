"""Continuation in beta: information-cost curves and bifurcation points."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .core import ReactivePolicy, as_periodic
from .solver import SolverOptions, solve

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "beta", "free_energy", "external_cost", "obs_info_nats", "clock_info_nats",
    "obs_info_bits", "clock_info_bits", "period", "converged",
)
EVENT_COLUMNS = ("beta_low", "beta_high", "period_before", "period_after")


@dataclass(frozen=True)
class SweepPoint:
    beta: float
    free_energy: float
    external_cost: float
    obs_info_nats: float
    clock_info_nats: float
    period: int
    policy_snapshot: np.ndarray
    converged: bool

    @property
    def total_info_nats(self) -> float:
        return self.obs_info_nats + self.clock_info_nats

    @property
    def policy(self) -> ReactivePolicy:
        return ReactivePolicy(self.policy_snapshot)


@dataclass(frozen=True)
class BifurcationEvent:
    beta_low: float
    beta_high: float
    period_before: int
    period_after: int

    @property
    def width(self) -> float:
        return self.beta_high - self.beta_low


def log_grid(beta_min: float, beta_max: float, steps: int = 64) -> np.ndarray:
    if steps < 1:
        raise ValueError("need at least one grid point")
    if steps == 1 and beta_min > 0:
        return np.array([float(beta_min)])
    if not 0 < beta_min < beta_max:
        raise ValueError("need 0 < beta_min < beta_max")
    return np.geomspace(beta_min, beta_max, steps)


def _point(beta, policy, report) -> SweepPoint:
    return SweepPoint(
        beta=float(beta),
        free_energy=report.free_energy,
        external_cost=report.external_cost,
        obs_info_nats=report.info.obs_info,
        clock_info_nats=report.info.clock_info,
        period=report.detected_period,
        policy_snapshot=policy.kernels.copy(),
        converged=report.converged,
    )


def _solve_point(model, beta, options, start=None):
    policy, _, report = solve(model, replace(options, beta=float(beta)), start)
    if not report.converged:
        logger.warning("beta=%.6g did not converge (period %d)", beta, report.detected_period)
    return _point(beta, policy, report)


def sweep(model, beta_grid, options: SolverOptions, mode: str = "warm", n_jobs: int = 1,
          start: Optional[ReactivePolicy] = None) -> list:
    """Solve at every beta in an increasing grid.

    ``warm`` starts each solve from the previous point's policy (freshly
    perturbed); ``cold`` solves each point from scratch and may run in
    parallel with ``n_jobs``.
    """
    grid = np.asarray(beta_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("beta grid must be a non-empty 1-D sequence")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("beta grid must be positive and strictly increasing")
    if mode == "cold":
        return list(Parallel(n_jobs=n_jobs)(delayed(_solve_point)(model, b, options) for b in grid))
    if mode != "warm":
        raise ValueError(f"unknown sweep mode {mode!r}")
    points = []
    prev = start
    for b in grid:
        pt = _solve_point(model, b, options, prev)
        points.append(pt)
        prev = pt.policy
    return points


def detect_bifurcations(points) -> list:
    """One event per adjacent pair of points with different periods."""
    return [
        BifurcationEvent(a.beta, b.beta, a.period, b.period)
        for a, b in zip(points, points[1:])
        if a.period != b.period
    ]


def refine_bifurcation(model, event: BifurcationEvent, options: SolverOptions, target_width: float,
                       start: Optional[ReactivePolicy] = None, max_bisections: int = 60) -> BifurcationEvent:
    """Bisect the bracket, warm-starting each probe from ``start`` (the
    low-side solution, when known)."""
    lo, hi = event.beta_low, event.beta_high
    if target_width >= hi - lo:
        return event
    for _ in range(max_bisections):
        if hi - lo <= target_width:
            break
        mid = 0.5 * (lo + hi)
        pt = _solve_point(model, mid, options, start)
        if pt.period == event.period_before:
            lo = mid
            start = pt.policy
        elif pt.period == event.period_after:
            hi = mid
        else:
            logger.warning("bracket lost at beta=%.6g (period %d)", mid, pt.period)
            return event
    return BifurcationEvent(lo, hi, event.period_before, event.period_after)


def policy_columns(model, period: int) -> list:
    pm = as_periodic(model)
    return [f"pi[{t}][{o}][{a}]" for t in range(period) for o in pm.obs_labels for a in pm.action_labels]


def write_sweep_csv(path, model, points) -> None:
    """One row per point; policy columns cover the longest period seen and
    shorter cycles are tiled to fill them."""
    pmax = max(p.period for p in points)
    cols = list(SWEEP_COLUMNS) + policy_columns(model, pmax)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for p in points:
            snap = np.tile(p.policy_snapshot, (pmax // p.period + 1, 1, 1))[:pmax]
            nums = [p.beta, p.free_energy, p.external_cost, p.obs_info_nats, p.clock_info_nats,
                    p.obs_info_nats / np.log(2), p.clock_info_nats / np.log(2)]
            w.writerow([repr(float(v)) for v in nums] + [p.period, int(p.converged)]
                       + [repr(float(v)) for v in snap.ravel()])


def write_events_csv(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([repr(float(e.beta_low)), repr(float(e.beta_high)), e.period_before, e.period_after])
