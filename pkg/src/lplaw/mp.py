"""Self-consistent spectral law of the sample covariance model.

Solves, for z in the upper half-plane, the fixed-point equation

    1/m = -z + phi * integral  x / (1 + m x)  dpi(x)

whose solution m(z) is the Stieltjes transform of the companion law (the
limiting eigenvalue distribution of the N x N Gram matrix).  Boundary
values on the real axis give the density w, its Hilbert transform, and the
density of the limiting sample-covariance spectrum w_S = w/phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ComplexSpectralPoint,
    DomainError,
    NumericError,
    PopulationSpectralMeasure,
    as_complex,
)

__all__ = [
    "SolverError",
    "StieltjesSolution",
    "BoundaryProfile",
    "LocalLawBound",
    "solve_m",
    "boundary_value",
    "boundary_profile",
    "default_profile",
    "psi",
    "DEFAULT_ETA_SCHEDULE",
]

DEFAULT_ETA_SCHEDULE: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
EDGE_DENSITY_THRESHOLD = 1e-4
EDGE_REFINE_TOL = 1e-8


class SolverError(NumericError):
    """Fixed-point solve did not reach tolerance; carries the last iterate."""

    def __init__(self, message: str, last_iterate: complex, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


@dataclass(frozen=True)
class StieltjesSolution:
    """One converged solve: value, self-consistency defect, and iteration
    count.  Im m > 0 whenever eta > 0."""

    z: complex
    m: complex
    residual: float
    iterations: int


@dataclass(frozen=True)
class LocalLawBound:
    """Deterministic control parameter for entrywise resolvent errors:
    psi = sqrt(Im m / (N eta)) + 1 / (N eta)."""

    z: complex
    m: complex
    N: int
    psi: float


@dataclass(frozen=True)
class BoundaryProfile:
    """Boundary data m_check(E) on a grid, with derived densities.

    w and hilbert_w describe the companion law (Im/Re of m_check over pi);
    w_S = w/phi is the density of the limiting sample-covariance spectrum
    on E > 0.  `edges` lists [a, b] support intervals of the continuous
    part, `atom_at_zero` the companion point mass (1-phi)+ at the origin.
    Points whose eta-extrapolation disagreed beyond tolerance are flagged,
    with the disagreement recorded in `uncertainty`.
    """

    E: np.ndarray
    m_check: np.ndarray
    w: np.ndarray
    hilbert_w: np.ndarray
    w_S: np.ndarray
    edges: tuple[tuple[float, float], ...]
    atom_at_zero: float
    flags: np.ndarray
    uncertainty: np.ndarray
    phi: float

    @property
    def support_low(self) -> float:
        if not self.edges:
            raise NumericError("profile detected no support on its grid")
        return self.edges[0][0]

    @property
    def support_high(self) -> float:
        if not self.edges:
            raise NumericError("profile detected no support on its grid")
        return self.edges[-1][1]

    def in_support(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hit = np.zeros(x.shape, dtype=bool)
        for a, b in self.edges:
            hit |= (x >= a) & (x <= b)
        return hit

    def mass_S(self) -> float:
        """Trapezoid mass of w_S over the grid; ~1 when the grid covers the
        support."""
        return float(np.trapezoid(self.w_S, self.E))


def _prepare(psm: PopulationSpectralMeasure, phi: float):
    if not isinstance(psm, PopulationSpectralMeasure):
        raise DomainError("psm must be a PopulationSpectralMeasure")
    if not (phi > 0):
        raise DomainError("phi must be positive")
    inv_tau = 1.0 / psm.taus.astype(complex)
    weights = psm.weights.astype(complex)
    return inv_tau, weights


def _residual(m: complex, z: complex, inv_tau, weights, phi: float) -> complex:
    if m == 0 or np.any(m == -inv_tau):
        return complex(np.inf)
    val = -1.0 / m + phi * np.sum(weights / (m + inv_tau)) - z
    if not np.isfinite(val.real) or not np.isfinite(val.imag):
        return complex(np.inf)
    return complex(val)


def solve_m(
    z: "complex | ComplexSpectralPoint",
    psm: PopulationSpectralMeasure,
    phi: float,
    tol: float = 1e-12,
    max_iter: int = 500,
    m0: "complex | None" = None,
) -> StieltjesSolution:
    """Solve the self-consistent equation for m(z).

    Fixed-point iteration on m -> 1/(-z + phi*int x/(1+mx) dpi) starting
    from m0 = -1/z (the pi = 0 solution), with iterates projected back into
    the upper half-plane by conjugation and a Newton side-channel that
    finishes the endgame quadratically; cold starts at small eta walk down
    an internal eta continuation first.  Convergence means |f(m) - z| at or
    below tol, after which the root is polished to step-size convergence.

    Real z is accepted only on the negative axis, where the equation and
    its solution stay real (strictly below the support of the companion
    law); anywhere else eta must be positive.
    """
    zz = as_complex(z)
    if zz.imag < 0:
        raise DomainError("z must lie in the closed upper half-plane")
    if zz.imag == 0 and zz.real >= 0:
        raise DomainError("eta = 0 is only allowed for E < 0 (off support)")
    if not (tol > 0):
        raise DomainError("tol must be positive")
    inv_tau, weights = _prepare(psm, phi)
    upper = zz.imag > 0

    m_init = complex(m0) if m0 is not None else -1.0 / zz
    if upper and m_init.imag <= 0:
        m_init = m_init.conjugate() if m_init.imag < 0 else m_init + 1e-3j

    def attempt(m_start: complex, budget: int) -> tuple[complex, float, int]:
        return _accelerated_fixed_point(
            m_start, zz, inv_tau, weights, phi, upper, tol, budget
        )

    def continuation() -> tuple[complex, float, int]:
        # at tiny eta the fixed-point multiplier approaches one, so walk
        # eta down geometrically with warm starts; Newton finishes each
        # level in a handful of steps
        eta_start = 0.05 * max(1.0, abs(zz))
        levels = []
        eta = eta_start
        while eta > zz.imag:
            levels.append(eta)
            eta /= 4.0
        m = -1.0 / complex(zz.real, eta_start)
        used_total = 0
        budget = max(40, max_iter // (len(levels) + 1))
        for eta in levels:
            m, _, used = _accelerated_fixed_point(
                m,
                complex(zz.real, eta),
                inv_tau,
                weights,
                phi,
                True,
                tol * 100.0,
                budget,
            )
            used_total += used
        m, res, used = _accelerated_fixed_point(
            m, zz, inv_tau, weights, phi, True, tol, max(max_iter - used_total, 50)
        )
        return m, res, used_total + used

    eta_comfort = 0.05 * max(1.0, abs(zz))
    if upper and zz.imag < eta_comfort and m0 is None:
        m, res, total_iters = continuation()
    else:
        m, res, total_iters = attempt(m_init, max_iter)
        if res > tol and upper and zz.imag < eta_comfort:
            # stalled warm start; redo from scratch with continuation
            m, res, extra = continuation()
            total_iters += extra
    if res <= tol:
        # a small residual can still leave a loose root where f' is tiny
        # (near the companion atom at the origin); polish to step-size
        # convergence so the returned m is the root to machine precision
        m, res = _final_polish(m, zz, inv_tau, weights, phi, upper, res)
        return StieltjesSolution(zz, m, res, total_iters)
    raise SolverError(
        f"no convergence after {total_iters} iterations (residual {res:.3e})",
        m,
        res,
    )


def _final_polish(
    m: complex,
    z: complex,
    inv_tau,
    weights,
    phi: float,
    upper: bool,
    res: float,
) -> tuple[complex, float]:
    """A few extra Newton steps accepted on any residual improvement,
    stopping once the step is at the rounding floor of m."""
    for _ in range(8):
        g = _residual(m, z, inv_tau, weights, phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            gp = 1.0 / m**2 - phi * np.sum(weights / (m + inv_tau) ** 2)
        if not (np.isfinite(gp.real) and np.isfinite(gp.imag)) or gp == 0:
            break
        step = g / gp
        if abs(step) <= 4e-16 * max(1.0, abs(m)):
            break
        cand = m - step
        if cand == 0 or (upper and cand.imag <= 0):
            break
        rc = abs(_residual(cand, z, inv_tau, weights, phi))
        if rc > res:
            break
        m, res = cand, rc
    return m, res


def _newton_polish(
    m: complex,
    z: complex,
    inv_tau,
    weights,
    phi: float,
    upper: bool,
    tol: float,
) -> tuple[complex, float]:
    """Full Newton steps from m while each at least halves the residual and
    stays in the half-plane; returns the best point reached."""
    res = abs(_residual(m, z, inv_tau, weights, phi))
    for _ in range(50):
        if res <= tol:
            break
        g = _residual(m, z, inv_tau, weights, phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            gp = 1.0 / m**2 - phi * np.sum(weights / (m + inv_tau) ** 2)
        if not (np.isfinite(gp.real) and np.isfinite(gp.imag)) or gp == 0:
            break
        cand = m - g / gp
        if cand == 0 or (upper and cand.imag <= 0):
            break
        rc = abs(_residual(cand, z, inv_tau, weights, phi))
        if rc >= 0.5 * res:
            break
        m, res = cand, rc
    return m, res


def _accelerated_fixed_point(
    m: complex,
    z: complex,
    inv_tau,
    weights,
    phi: float,
    upper: bool,
    tol: float,
    budget: int,
) -> tuple[complex, float, int]:
    """Plain fixed-point iteration with a Newton side-channel.

    The bare map m -> 1/(-z + phi*int x/(1+mx) dpi) is a holomorphic
    self-map of the half-plane, so its unmodified iterates converge to the
    unique solution from any interior start; they are never perturbed.
    Each sweep additionally tries a Newton polish from the current iterate,
    which finishes the endgame quadratically but is discarded whenever it
    fails to keep halving the residual, so it cannot derail the chain.
    """
    res = abs(_residual(m, z, inv_tau, weights, phi))
    best_m, best_res = m, res
    for it in range(1, budget + 1):
        if best_res <= tol:
            return best_m, best_res, it - 1

        if np.isfinite(res):
            polished, rp = _newton_polish(m, z, inv_tau, weights, phi, upper, tol)
            if rp < best_res:
                best_m, best_res = polished, rp
            if rp <= tol:
                return best_m, best_res, it

        denom = -z + phi * np.sum(weights / (m + inv_tau))
        if denom == 0:
            break
        m = 1.0 / denom
        if upper and m.imag <= 0:
            m = m.conjugate()
        res = abs(_residual(m, z, inv_tau, weights, phi))
        if res < best_res:
            best_m, best_res = m, res
    return best_m, best_res, budget


def boundary_value(
    E: float,
    psm: PopulationSpectralMeasure,
    phi: float,
    eta_schedule: Sequence[float] = DEFAULT_ETA_SCHEDULE,
    tol: float = 1e-12,
    m0: "complex | None" = None,
) -> tuple[complex, float]:
    """m_check(E): limit of m(E + i eta) down the eta schedule.

    Linear (Richardson) extrapolation in eta from the last two levels,
    separately on real and imaginary parts; the returned uncertainty is the
    disagreement with extrapolation from the previous pair, which blows up
    near support edges where the limit has a square-root singularity.
    """
    etas = _check_schedule(eta_schedule)
    if E == 0.0:
        raise DomainError("E = 0 carries the companion point mass; not a density point")
    values = []
    m_prev = m0
    for eta in etas:
        sol = solve_m(complex(E, eta), psm, phi, tol=tol, m0=m_prev)
        m_prev = sol.m
        values.append(sol.m)
    extr = _linear_extrapolation(etas[-1], values[-1], etas[-2], values[-2])
    if len(etas) >= 3:
        prev = _linear_extrapolation(etas[-2], values[-2], etas[-3], values[-3])
        unc = abs(extr - prev)
    else:
        unc = abs(extr - values[-1])
    return extr, unc


def _linear_extrapolation(e2: float, m2: complex, e1: float, m1: complex) -> complex:
    # value at eta = 0 of the affine map through (e1, m1), (e2, m2)
    return (e1 * m2 - e2 * m1) / (e1 - e2)


def _check_schedule(eta_schedule: Sequence[float]) -> tuple[float, ...]:
    etas = tuple(float(e) for e in eta_schedule)
    if len(etas) < 2:
        raise DomainError("eta schedule needs at least two levels")
    if any(e <= 0 for e in etas) or any(b >= a for a, b in zip(etas, etas[1:])):
        raise DomainError("eta schedule must be positive and strictly decreasing")
    if etas[-1] > 1e-6:
        raise DomainError("eta schedule must reach 1e-6 or below")
    return etas


def boundary_profile(
    E_grid: Sequence[float],
    psm: PopulationSpectralMeasure,
    phi: float,
    eta_schedule: Sequence[float] = DEFAULT_ETA_SCHEDULE,
    tol: float = 1e-12,
    flag_tol: float = 1e-6,
) -> BoundaryProfile:
    """Boundary data over a grid of real spectral locations.

    The grid must be strictly increasing and avoid 0 exactly.  Support
    edges are located by thresholding w > 1e-4 on the grid and refining
    each crossing by bisection to 1e-8.
    """
    grid = np.asarray(E_grid, dtype=float).ravel()
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError("E grid must be strictly increasing with >= 2 points")
    if np.any(grid == 0.0):
        raise DomainError("E grid must not contain 0 exactly")
    etas = _check_schedule(eta_schedule)

    m_check = np.empty(grid.size, dtype=complex)
    uncertainty = np.empty(grid.size, dtype=float)
    warm: "complex | None" = None
    for k, E in enumerate(grid):
        m_check[k], uncertainty[k] = boundary_value(
            E, psm, phi, etas, tol=tol, m0=warm
        )
        warm = m_check[k]
    flags = uncertainty > flag_tol

    w = np.maximum(m_check.imag / math.pi, 0.0)
    hilbert_w = m_check.real / math.pi
    w_S = np.where(grid > 0, w / phi, 0.0)

    def w_at(E: float) -> float:
        val, _ = boundary_value(E, psm, phi, etas, tol=tol)
        return max(val.imag / math.pi, 0.0)

    edges = _detect_edges(grid, w, w_at)
    atom = max(1.0 - phi, 0.0)
    return BoundaryProfile(
        E=grid,
        m_check=m_check,
        w=w,
        hilbert_w=hilbert_w,
        w_S=w_S,
        edges=edges,
        atom_at_zero=atom,
        flags=flags,
        uncertainty=uncertainty,
        phi=phi,
    )


def _detect_edges(grid, w, w_at) -> tuple[tuple[float, float], ...]:
    inside = w > EDGE_DENSITY_THRESHOLD
    edges = []
    k = 0
    n = grid.size
    while k < n:
        if inside[k]:
            start = grid[k] if k == 0 else _bisect_edge(grid[k - 1], grid[k], w_at)
            while k + 1 < n and inside[k + 1]:
                k += 1
            stop = grid[k] if k == n - 1 else _bisect_edge(grid[k + 1], grid[k], w_at)
            edges.append((float(start), float(stop)))
        k += 1
    return tuple(edges)


def _bisect_edge(e_out: float, e_in: float, w_at) -> float:
    # invariant: w(e_in) > threshold >= w(e_out)
    lo, hi = e_out, e_in
    while abs(hi - lo) > EDGE_REFINE_TOL:
        mid = 0.5 * (lo + hi)
        if w_at(mid) > EDGE_DENSITY_THRESHOLD:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def default_profile(
    psm: PopulationSpectralMeasure,
    phi: float,
    points: int = 1200,
    eta_schedule: Sequence[float] = DEFAULT_ETA_SCHEDULE,
) -> BoundaryProfile:
    """Boundary profile on a grid bracketing the support: the spectrum of S
    is contained in [tau_min (1-sqrt(phi))^2, tau_max (1+sqrt(phi))^2], so a
    padded version of that range always covers it."""
    lo = 0.25 * float(psm.taus.min()) * (1.0 - math.sqrt(phi)) ** 2
    hi = 1.5 * float(psm.taus.max()) * (1.0 + math.sqrt(phi)) ** 2
    lo = max(lo, 1e-4)
    grid = np.linspace(lo, hi, points)
    return boundary_profile(grid, psm, phi, eta_schedule=eta_schedule)


def psi(
    z: "complex | ComplexSpectralPoint", m: complex, N: int
) -> LocalLawBound:
    """Entrywise local-law control parameter at (z, m, N)."""
    zz = as_complex(z)
    if zz.imag <= 0:
        raise DomainError("psi needs eta > 0")
    if N < 1:
        raise DomainError("psi needs N >= 1")
    m = complex(m)
    if m.imag < 0:
        raise DomainError("psi needs Im m >= 0")
    n_eta = N * zz.imag
    value = math.sqrt(m.imag / n_eta) + 1.0 / n_eta
    return LocalLawBound(zz, m, N, value)
