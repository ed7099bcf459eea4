"""Rotation-equivariant shrinkage: the asymptotic shrinkage function, the
infeasible oracle, feasible estimators, and the minimum-variance loss.

The shrinkage function is evaluated in the sample-spectrum convention:
with w and Hw the density / Hilbert transform of the limiting spectrum of
S (mass one on the positive axis) and c the concentration ratio,

    delta(x) = x / ( [pi c x w(x)]^2 + [1 - c - pi c x Hw(x)]^2 )

which reduces algebraically to 1 / (x |m_check(x)|^2) in terms of the
companion-law boundary value; both forms are implemented and cross-checked
in the tests.  With c -> 0 the denominator tends to one and no shrinkage
happens.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import DomainError, NumericError, PopulationCovariance, SampleEigensystem
from .mp import BoundaryProfile

__all__ = [
    "ShrinkageEstimate",
    "LossReport",
    "delta",
    "delta_from_companion",
    "companion_to_sample_law",
    "sample_law_to_companion",
    "delta_curve",
    "shrink_spectrum",
    "delta_shrink",
    "oracle_shrink",
    "mv_loss",
    "baseline_estimates",
]

DENOM_FLOOR = 1e-14


@dataclass(frozen=True)
class ShrinkageEstimate:
    """Diagonal shrinkage target in the sample eigenvector frame:
    Sigma_hat = U diag(dhat) U^H."""

    frame: np.ndarray
    dhat: np.ndarray
    kind: str
    beta: float = 1.0

    def __post_init__(self) -> None:
        dhat = np.asarray(self.dhat, dtype=float).ravel()
        U = np.asarray(self.frame)
        if U.ndim != 2 or U.shape[1] != dhat.size:
            raise DomainError("frame columns must match dhat length")
        if self.kind not in ("oracle", "delta", "sample", "baseline"):
            raise DomainError(f"unknown estimate kind {self.kind!r}")
        dhat.setflags(write=False)
        object.__setattr__(self, "dhat", dhat)
        object.__setattr__(self, "frame", U)

    def matrix(self) -> np.ndarray:
        return (self.frame * (self.beta * self.dhat)) @ self.frame.conj().T


@dataclass(frozen=True)
class LossReport:
    mv_loss: float
    frobenius_loss: "float | None" = None


def delta(x: float, m_check: complex, c: float) -> float:
    """Shrinkage function at x, given the sample-spectrum boundary value
    m_check (so w = Im m_check / pi, Hw = Re m_check / pi)."""
    if not (x > 0):
        raise DomainError("delta needs x > 0")
    if not (0 <= c < 1):
        raise DomainError("delta needs concentration 0 <= c < 1")
    m_check = complex(m_check)
    w = m_check.imag / math.pi
    hw = m_check.real / math.pi
    den = (math.pi * c * x * w) ** 2 + (1.0 - c - math.pi * c * x * hw) ** 2
    if den < DENOM_FLOOR:
        raise NumericError(f"shrinkage denominator ~ 0 at x = {x}")
    return x / den


def delta_from_companion(x: float, m_check_companion: complex) -> float:
    """Equivalent companion-law form delta(x) = 1 / (x |m_check|^2)."""
    if not (x > 0):
        raise DomainError("delta needs x > 0")
    sq = abs(complex(m_check_companion)) ** 2
    if x * sq < DENOM_FLOOR:
        raise NumericError(f"shrinkage denominator ~ 0 at x = {x}")
    return 1.0 / (x * sq)


def companion_to_sample_law(m_companion: complex, x: float, c: float) -> complex:
    """Boundary value of the sample-spectrum law from the companion law:
    the companion measure is c * (law of S) + (1-c) * delta_0."""
    return (complex(m_companion) + (1.0 - c) / x) / c


def sample_law_to_companion(m_sample: complex, x: float, c: float) -> complex:
    return c * complex(m_sample) - (1.0 - c) / x


def delta_curve(
    profile: BoundaryProfile, c: "float | None" = None
) -> tuple[np.ndarray, np.ndarray]:
    """delta evaluated on the in-support grid points of a boundary profile."""
    c = profile.phi if c is None else float(c)
    mask = profile.in_support(profile.E) & (profile.E > 0)
    if not np.any(mask):
        raise NumericError("profile has no in-support grid points")
    xs = profile.E[mask]
    vals = np.empty(xs.size, dtype=float)
    for k, (x, mc) in enumerate(zip(xs, profile.m_check[mask])):
        vals[k] = delta(x, companion_to_sample_law(mc, x, c), c)
    return xs, vals


def shrink_spectrum(
    lams: np.ndarray,
    profile: BoundaryProfile,
    c: "float | None" = None,
    n_samples: "int | None" = None,
) -> tuple[np.ndarray, int]:
    """delta at each sample eigenvalue by monotone-cubic interpolation of
    the profile's delta curve.

    Eigenvalues outside the support are clamped to the nearest in-support
    point (delta is undefined off support; clamping is conservative).  The
    clamped count is returned; eigenvalues beyond an N^(-1/3) margin of the
    support hull trigger a warning.
    """
    c = profile.phi if c is None else float(c)
    lams = np.asarray(lams, dtype=float).ravel()
    xs, vals = delta_curve(profile, c)
    interp = PchipInterpolator(xs, vals, extrapolate=False)
    lo, hi = xs[0], xs[-1]
    clamped = np.clip(lams, lo, hi)
    n_clamped = int(np.sum((lams < profile.support_low) | (lams > profile.support_high)))
    if n_samples is None:
        n_samples = max(1, round(lams.size / c))
    margin = float(n_samples) ** (-1.0 / 3.0)
    far = np.sum(
        (lams < profile.support_low - margin) | (lams > profile.support_high + margin)
    )
    if far:
        warnings.warn(
            f"{int(far)} eigenvalue(s) more than {margin:.3g} outside the "
            "support were clamped",
            stacklevel=2,
        )
    out = interp(clamped)
    # clamped points can still straddle an internal gap; pchip covers the
    # hull, so only NaNs from roundoff at the ends need patching
    bad = ~np.isfinite(out)
    if np.any(bad):
        out[bad] = np.interp(clamped[bad], xs, vals)
    return out, n_clamped


def delta_shrink(
    eigensystem: SampleEigensystem,
    profile: BoundaryProfile,
    c: "float | None" = None,
) -> ShrinkageEstimate:
    """Feasible nonlinear shrinkage: replace each sample eigenvalue with
    delta(lambda_i), keeping the sample eigenvectors."""
    dhat, _ = shrink_spectrum(eigensystem.eigenvalues, profile, c)
    return ShrinkageEstimate(eigensystem.vectors, dhat, "delta")


def oracle_shrink(U: np.ndarray, sigma: PopulationCovariance) -> ShrinkageEstimate:
    """Infeasible oracle: dhat_i = u_i^* Sigma u_i."""
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != sigma.dim:
        raise DomainError("frame dimension must match the covariance")
    return ShrinkageEstimate(U, sigma.quad_forms(U), "oracle")


def mv_loss(
    estimate: ShrinkageEstimate,
    sigma: PopulationCovariance,
    N: int,
    with_frobenius: bool = False,
) -> LossReport:
    """Minimum-variance loss of a rotation-equivariant estimate.

    All traces are divided by the sample count N (even for M x M matrices),
    which shifts absolute values but no comparison.  Zero when the estimate
    reproduces Sigma; invariant under positive rescaling of dhat.
    """
    d = estimate.beta * estimate.dhat
    if np.any(d <= 0):
        raise DomainError("mv_loss needs strictly positive shrinkage targets")
    if N < 1:
        raise DomainError("N must be >= 1")
    a = sigma.quad_forms(estimate.frame)
    num = float(np.sum(a / d**2)) / N
    tr_inv = float(np.sum(1.0 / d)) / N
    loss = num / tr_inv**2 - 1.0 / (sigma.inverse_trace() / N)
    frob = None
    if with_frobenius:
        diff = estimate.matrix() - sigma.matrix()
        frob = float(np.linalg.norm(diff) ** 2) / N
    return LossReport(loss, frob)


def baseline_estimates(
    eigensystem: SampleEigensystem,
    sigma_trace_estimate: "float | None" = None,
) -> list[ShrinkageEstimate]:
    """Comparison baselines: the raw sample spectrum and the scalar
    (trace-matching) multiple of the identity."""
    lam = eigensystem.eigenvalues
    scalar = (
        float(sigma_trace_estimate)
        if sigma_trace_estimate is not None
        else float(lam.mean())
    )
    return [
        ShrinkageEstimate(eigensystem.vectors, lam, "sample"),
        ShrinkageEstimate(
            eigensystem.vectors, np.full(lam.size, scalar), "baseline"
        ),
    ]
