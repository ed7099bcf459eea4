"""Empirical spectral measures, their deterministic limits, and
sup-over-intervals distances.

Empirical measures are emitted with mass 1/M per eigenvalue so that they
are comparable, interval by interval, with the probability-normalized
limiting spectrum of S; the sigma-weighted comb carries u_i^* Sigma u_i / M
instead.  The companion normalization (atom (1-phi) at zero, densities
scaled by phi) is exposed separately and bridged by w = phi * w_S.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import (
    AtomicMeasure,
    DomainError,
    PopulationCovariance,
    SampleEigensystem,
)
from .mp import BoundaryProfile

__all__ = [
    "Interval",
    "DeterministicMeasure",
    "empirical_measures",
    "vector_measure",
    "deterministic_mass",
    "interval_sup_distance",
]

EDGE_PADDING = 0.1
DENSITY_FLOOR = 1e-6


@dataclass(frozen=True)
class Interval:
    """Closed-open interval [a, b)."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise DomainError("interval endpoints must be finite")
        if self.a > self.b:
            raise DomainError("interval needs a <= b")

    def contains(self, x: float) -> bool:
        return self.a <= x < self.b


@dataclass(frozen=True)
class DeterministicMeasure:
    """Density on a grid plus an optional atom at zero.

    `normalization` records which law the density belongs to: 'esd_of_S'
    (mass one on the positive axis, no atom) or 'companion' (atom (1-phi)
    at zero, density phi * w_S).
    """

    grid: np.ndarray
    density: np.ndarray
    atom_zero_mass: float
    normalization: str
    edges: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float).ravel()
        density = np.asarray(self.density, dtype=float).ravel()
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing with >= 2 points")
        if grid.shape != density.shape:
            raise DomainError("grid and density must have equal length")
        if np.any(density < 0):
            raise DomainError("density must be nonnegative")
        if self.atom_zero_mass < 0:
            raise DomainError("atom mass must be nonnegative")
        if self.normalization not in ("companion", "esd_of_S"):
            raise DomainError("normalization must be 'companion' or 'esd_of_S'")
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    @classmethod
    def from_profile(
        cls, profile: BoundaryProfile, normalization: str = "esd_of_S"
    ) -> "DeterministicMeasure":
        if normalization == "esd_of_S":
            return cls(profile.E, profile.w_S, 0.0, normalization, profile.edges)
        return cls(
            profile.E, profile.w, profile.atom_at_zero, "companion", profile.edges
        )

    @property
    def support_low(self) -> float:
        return self.edges[0][0] if self.edges else float(self.grid[0])

    @property
    def support_high(self) -> float:
        return self.edges[-1][1] if self.edges else float(self.grid[-1])

    def total_mass(self) -> float:
        return self.atom_zero_mass + float(
            np.trapezoid(self.density, self.grid)
        )

    def cumulative(
        self, weight_fn: "Callable | None" = None
    ) -> Callable[[np.ndarray], np.ndarray]:
        """Antiderivative of (weight * density) from the left grid end,
        exact for the monotone-cubic interpolant of the grid values; atom
        contributions are added by the interval routines, not here."""
        values = self.density
        if weight_fn is not None:
            values = values * np.asarray(weight_fn(self.grid), dtype=float)
        anti = PchipInterpolator(self.grid, values, extrapolate=False).antiderivative()
        lo, hi = self.grid[0], self.grid[-1]

        def cum(x):
            xc = np.clip(np.asarray(x, dtype=float), lo, hi)
            return np.asarray(anti(xc), dtype=float)

        return cum


def empirical_measures(
    eigensystem: SampleEigensystem, sigma: PopulationCovariance
) -> tuple[AtomicMeasure, AtomicMeasure]:
    """The eigenvalue comb (weights 1/M) and the sigma-weighted comb
    (weights u_i^* Sigma u_i / M)."""
    M = eigensystem.dim
    lam = eigensystem.eigenvalues
    overlaps = sigma.quad_forms(eigensystem.vectors)
    mu_hat = AtomicMeasure(lam, np.full(M, 1.0 / M))
    nu_hat = AtomicMeasure(lam, overlaps / M)
    return mu_hat, nu_hat


def vector_measure(eigensystem: SampleEigensystem, x: np.ndarray) -> AtomicMeasure:
    """Spectral weights of a fixed unit vector: sum_i |u_i^* x|^2 at
    lambda_i; weights sum to one by completeness."""
    x = np.asarray(x).ravel()
    if x.size != eigensystem.dim:
        raise DomainError("vector dimension must match the eigensystem")
    if abs(np.linalg.norm(x) - 1.0) > 1e-10:
        raise DomainError("vector must have unit norm")
    coeffs = eigensystem.vectors.conj().T @ x
    return AtomicMeasure(eigensystem.eigenvalues, np.abs(coeffs) ** 2)


def deterministic_mass(
    measure: DeterministicMeasure,
    interval: Interval,
    weight_fn: "Callable | None" = None,
) -> float:
    """Mass of (weight * measure) over [a, b): quadrature of the density
    plus the atom at zero when covered."""
    lo, hi = float(measure.grid[0]), float(measure.grid[-1])
    for end in (interval.a, interval.b):
        if end < lo or end > hi:
            edge_density = measure.density[0] if end < lo else measure.density[-1]
            if edge_density > DENSITY_FLOOR:
                raise DomainError(
                    f"interval endpoint {end} leaves the grid where the "
                    "density is still nonzero"
                )
    cum = measure.cumulative(weight_fn)
    total = float(cum(interval.b) - cum(interval.a))
    if measure.atom_zero_mass > 0 and interval.contains(0.0):
        wt = float(weight_fn(np.asarray([0.0]))[0]) if weight_fn is not None else 1.0
        total += measure.atom_zero_mass * wt
    return total


def interval_sup_distance(
    empirical: AtomicMeasure,
    deterministic: DeterministicMeasure,
    weight_fn: "Callable | None" = None,
    grid_size: int = 200,
    span: "tuple[float, float] | None" = None,
) -> float:
    """sup over grid-endpoint intervals of |empirical(I) - deterministic(I)|.

    Endpoints run over a uniform grid spanning the deterministic support
    padded by 0.1 on both sides; the weight applies to the deterministic
    side.  Computed from cumulative sums, so the sup over all ~grid_size^2/2
    intervals costs O(grid_size)."""
    if grid_size < 2:
        raise DomainError("grid_size must be >= 2")
    if span is None:
        span = (
            deterministic.support_low - EDGE_PADDING,
            deterministic.support_high + EDGE_PADDING,
        )
    grid = np.linspace(span[0], span[1], grid_size)
    cum_e = empirical.cumulative_on(grid)
    cum_fn = deterministic.cumulative(weight_fn)
    cum_d = cum_fn(grid) - cum_fn(grid[0])
    if deterministic.atom_zero_mass > 0:
        wt = float(weight_fn(np.asarray([0.0]))[0]) if weight_fn is not None else 1.0
        cum_d = cum_d + deterministic.atom_zero_mass * wt * (
            (grid > 0.0) & (grid[0] <= 0.0)
        )
    diff = cum_e - cum_d
    return float(diff.max() - diff.min())
