"""Inter-interval smoothing constraints on toll profiles.

A joint toll profile stacks the per-interval distance rates and delay
rates as ``tau = [eta_1..eta_m, omega_1..omega_m]``.  Successive tolls
may not jump by more than ``alpha_smooth`` (distance) or ``beta_smooth``
(delay), which keeps schedules drivers can anticipate.  Solvers without
native constraint handling use the quadratic exterior penalty; the
kriging solver instead restricts its infill search to feasible points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionMismatch, as_vector


@dataclass(frozen=True)
class SmoothingSpec:
    """Maximum allowed change between consecutive tolling intervals."""

    alpha_smooth: float
    beta_smooth: float
    m_intervals: int

    def __post_init__(self):
        if self.alpha_smooth <= 0 or self.beta_smooth <= 0:
            raise ValueError("smoothing limits must be positive")
        if self.m_intervals < 1:
            raise ValueError("m_intervals must be >= 1")


@dataclass(frozen=True)
class PenaltyConfig:
    """Exterior penalty settings: weight > 0, integer exponent >= 1."""

    weight: float
    exponent: int = 2

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("penalty weight must be positive")
        if self.exponent < 1:
            raise ValueError("penalty exponent must be >= 1")


def violations(tau, spec: SmoothingSpec) -> np.ndarray:
    """Constraint violation magnitudes, zero where satisfied.

    Returns a vector of length ``2 * (m_intervals - 1)``: the distance-rate
    entries first, then the delay-rate entries.  Entry values are
    ``max(0, |jump| - limit)``.
    """
    m = spec.m_intervals
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 1 or tau.size != 2 * m:
        raise DimensionMismatch(
            f"joint toll profile needs {2 * m} entries ([eta..., omega...]), "
            f"got shape {tau.shape}")
    if m == 1:
        return np.zeros(0)
    v = np.abs(tau[1:] - tau[:-1])  # adjacent diffs, entry m-1 crosses eta/omega
    out = np.empty(2 * (m - 1))
    np.maximum(v[: m - 1] - spec.alpha_smooth, 0.0, out=out[: m - 1])
    np.maximum(v[m:] - spec.beta_smooth, 0.0, out=out[m - 1:])
    return out


def is_feasible(tau, spec: SmoothingSpec, tol: float = 0.0) -> bool:
    """True when every violation is within tol."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    v = violations(tau, spec)
    return bool(v.size == 0 or np.max(v) <= tol)


def penalize(value: float, tau, spec: SmoothingSpec, config: PenaltyConfig,
             sense: str = "minimize") -> float:
    """Objective value pushed away from infeasible profiles.

    Adds ``weight * sum(v ** exponent)`` when minimizing and subtracts it
    when maximizing, so the penalized problem keeps the original sense.
    Feasible profiles are returned unchanged.
    """
    if sense not in ("minimize", "maximize"):
        raise ValueError(f"sense must be 'minimize' or 'maximize', got {sense!r}")
    v = violations(tau, spec)
    if v.size == 0:
        return float(value)
    pen = config.weight * float(np.sum(v ** config.exponent))
    return float(value) + pen if sense == "minimize" else float(value) - pen


def penalty_weight_from_probe(values, factor: float = 100.0) -> float:
    """Penalty weight scaled to the objective: factor x typical magnitude.

    ``values`` is a probe of objective values at feasible points (twenty
    is plenty).  Falls back to 1.0 when the probe is identically zero.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("probe values must be non-empty")
    mag = float(np.median(np.abs(values)))
    if mag == 0.0:
        mag = float(np.max(np.abs(values)))
    if mag == 0.0:
        mag = 1.0
    return factor * mag


@dataclass(frozen=True)
class PenaltyTransform:
    """Bundled spec + config handed to solvers that need penalty wrapping."""

    spec: SmoothingSpec
    config: PenaltyConfig

    def apply(self, value: float, tau, sense: str) -> float:
        return penalize(value, tau, self.spec, self.config, sense)

    def feasible(self, tau, tol: float = 0.0) -> bool:
        return is_feasible(tau, self.spec, tol)
