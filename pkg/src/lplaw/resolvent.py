"""Linearized Green function of the sample-covariance model, its
deterministic approximation, weighted spectral traces, and executable
resolvent identities.

The (M+N) x (M+N) linearization

    H(z) = [[ -Sigma^{-1},  X   ],
            [  X^*,        -z I ]]

has inverse G(z) whose top-left block is z Sigma^{1/2} R_M Sigma^{1/2}
(R_M the resolvent of S) and whose bottom-right block is R_N (the
resolvent of X^* Sigma X); both cross-checks are recomputed independently
for every bundle.  G is element-by-element close to the block-diagonal
Pi(z) = diag(-Sigma(I + m Sigma)^{-1}, m I).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import (
    ComplexSpectralPoint,
    DomainError,
    IndexedMatrix,
    NumericError,
    PopulationCovariance,
    as_complex,
    indexed_matmul,
    matrix_function,
)
from .sampling import DataMatrix

__all__ = [
    "ResolventBundle",
    "DeterministicApprox",
    "build_bundle",
    "build_pi",
    "theta",
    "top_trace_limit",
    "trace_residual_bottom",
    "trace_residual_top",
    "companion_trace",
    "sigma_weighted_trace",
    "entrywise_residual",
    "entrywise_residuals_solve",
    "standard_vector_pairs",
    "resolvent_identity_check",
    "green_identity_check",
]

BLOCK_TOL = 1e-8


@dataclass(frozen=True)
class ResolventBundle:
    """H, G = H^{-1}, the two classical resolvents, and index bookkeeping.

    Population labels are 0..M-1, sample labels M..M+N-1.  The defect
    fields hold the realized maxima of |G H - I| and of the two block
    cross-checks, each required to sit below 1e-8.
    """

    z: complex
    H: np.ndarray
    G: np.ndarray
    R_M: np.ndarray
    R_N: np.ndarray
    index_m: tuple
    index_n: tuple
    defect_inverse: float
    defect_top_block: float
    defect_bottom_block: float

    @property
    def M(self) -> int:
        return len(self.index_m)

    @property
    def N(self) -> int:
        return len(self.index_n)

    def G_indexed(self) -> IndexedMatrix:
        labels = self.index_m + self.index_n
        return IndexedMatrix(labels, labels, self.G)

    def H_indexed(self) -> IndexedMatrix:
        labels = self.index_m + self.index_n
        return IndexedMatrix(labels, labels, self.H)

    def X_indexed(self) -> IndexedMatrix:
        return IndexedMatrix(self.index_m, self.index_n, self.H[: self.M, self.M :])


@dataclass(frozen=True)
class DeterministicApprox:
    """Block-diagonal deterministic approximation diag(-Sigma(I+mSigma)^{-1}, mI),
    built from (z, m, Sigma) only."""

    z: complex
    m: complex
    top_diag: np.ndarray
    top_frame: "np.ndarray | None"
    n_samples: int

    def matrix(self) -> np.ndarray:
        M = self.top_diag.size
        dim = M + self.n_samples
        out = np.zeros((dim, dim), dtype=complex)
        if self.top_frame is None:
            out[:M, :M] = np.diag(self.top_diag)
        else:
            out[:M, :M] = (self.top_frame * self.top_diag) @ self.top_frame.conj().T
        out[M:, M:] = self.m * np.eye(self.n_samples)
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        M = self.top_diag.size
        out = np.empty(v.size, dtype=complex)
        if self.top_frame is None:
            out[:M] = self.top_diag * v[:M]
        else:
            out[:M] = (self.top_frame * self.top_diag) @ (self.top_frame.conj().T @ v[:M])
        out[M:] = self.m * v[M:]
        return out

    def top_trace_mean(self) -> complex:
        return complex(self.top_diag.sum() / self.top_diag.size)


def _assemble_H(z: complex, X: np.ndarray, sigma: PopulationCovariance) -> np.ndarray:
    M, N = X.shape
    H = np.zeros((M + N, M + N), dtype=complex)
    H[:M, :M] = -sigma.inverse()
    H[:M, M:] = X
    H[M:, :M] = X.conj().T
    H[M:, M:] = -z * np.eye(N)
    return H


def build_bundle(
    z: "complex | ComplexSpectralPoint",
    X: "DataMatrix | np.ndarray",
    sigma: PopulationCovariance,
) -> ResolventBundle:
    """Invert the linearization at z and cross-check its blocks against
    independently computed resolvents of S and X^* Sigma X."""
    zz = as_complex(z)
    if zz.imag <= 0:
        raise DomainError("build_bundle needs eta > 0")
    Xe = X.entries if isinstance(X, DataMatrix) else np.asarray(X)
    M, N = Xe.shape
    if sigma.dim != M:
        raise DomainError("covariance dimension must match data rows")
    H = _assemble_H(zz, Xe, sigma)
    try:
        G = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"H is numerically singular (cond ~ {np.linalg.cond(H):.3e})"
        ) from exc

    Y = sigma.apply_sqrt(Xe)
    S = Y @ Y.conj().T
    R_M = np.linalg.inv(S - zz * np.eye(M))
    R_N = np.linalg.inv(Xe.conj().T @ (sigma.matrix() @ Xe) - zz * np.eye(N))

    d_inv = float(np.max(np.abs(G @ H - np.eye(M + N))))
    sqrt_sigma = sigma.apply_sqrt(np.eye(M))
    top_ref = zz * (sqrt_sigma @ R_M @ sqrt_sigma)
    d_top = float(np.max(np.abs(G[:M, :M] - top_ref)))
    d_bot = float(np.max(np.abs(G[M:, M:] - R_N)))
    if max(d_inv, d_top, d_bot) > BLOCK_TOL:
        raise NumericError(
            "bundle failed its block cross-checks: "
            f"inverse {d_inv:.2e}, top {d_top:.2e}, bottom {d_bot:.2e}"
        )
    return ResolventBundle(
        z=zz,
        H=H,
        G=G,
        R_M=R_M,
        R_N=R_N,
        index_m=tuple(range(M)),
        index_n=tuple(range(M, M + N)),
        defect_inverse=d_inv,
        defect_top_block=d_top,
        defect_bottom_block=d_bot,
    )


def build_pi(
    z: "complex | ComplexSpectralPoint",
    m: complex,
    sigma: PopulationCovariance,
    n_samples: int,
) -> DeterministicApprox:
    """Deterministic approximation of G at (z, m)."""
    zz = as_complex(z)
    m = complex(m)
    denom = 1.0 + m * sigma.eigenvalues.astype(complex)
    if np.min(np.abs(denom)) < 1e-12:
        raise NumericError("1 + m*tau vanishes; deterministic block is singular")
    return DeterministicApprox(
        z=zz,
        m=m,
        top_diag=-sigma.eigenvalues / denom,
        top_frame=sigma.frame,
        n_samples=int(n_samples),
    )


def theta(
    z: "complex | ComplexSpectralPoint",
    S: np.ndarray,
    sigma: PopulationCovariance,
    g: Callable,
) -> complex:
    """Weighted spectral trace Theta(z) = Tr((S - zI)^{-1} g(Sigma))."""
    zz = as_complex(z)
    if zz.imag <= 0:
        raise DomainError("theta needs eta > 0")
    S = np.asarray(S)
    M = S.shape[0]
    g_sigma = matrix_function(sigma.matrix(), g)
    solved = np.linalg.solve(S - zz * np.eye(M), g_sigma.astype(complex))
    return complex(np.trace(solved))


def top_trace_limit(z: complex, m: complex, phi: float) -> complex:
    """Deterministic limit of M^{-1} Tr(R_M Sigma): -(1/(zm) + 1)/phi.

    Multiplied by z this equals M^{-1} Tr(-Sigma(I + m Sigma)^{-1}) exactly
    whenever m solves the self-consistent equation for the matching
    empirical measure and ratio.
    """
    z = complex(z)
    m = complex(m)
    return -(1.0 / (z * m) + 1.0) / phi


def companion_trace(lams_S: np.ndarray, M: int, N: int, z: complex) -> complex:
    """N^{-1} Tr (X^* Sigma X - z)^{-1} from the spectrum of S alone: the
    Gram matrix shares the nonzero eigenvalues of S and pads with zeros."""
    lams_S = np.asarray(lams_S, dtype=float)
    z = complex(z)
    if M <= N:
        tr = np.sum(1.0 / (lams_S - z)) - (N - M) / z
    else:
        nonzero = np.sort(lams_S)[::-1][:N]
        tr = np.sum(1.0 / (nonzero - z))
    return complex(tr / N)


def sigma_weighted_trace(
    lams: np.ndarray, overlaps: np.ndarray, z: complex
) -> complex:
    """Tr(R_M Sigma) = sum_i (u_i^* Sigma u_i) / (lambda_i - z) from an
    eigensystem of S."""
    return complex(np.sum(np.asarray(overlaps) / (np.asarray(lams) - complex(z))))


def trace_residual_bottom(bundle: ResolventBundle, m: complex) -> complex:
    """N^{-1} Tr R_N - m, the raw bottom-corner trace-law residual."""
    return complex(np.trace(bundle.R_N) / bundle.N - complex(m))


def trace_residual_top(
    bundle: ResolventBundle, m: complex, sigma: PopulationCovariance
) -> complex:
    """M^{-1} Tr(z R_M Sigma + Sigma (I + m Sigma)^{-1}), the raw
    top-corner trace-law residual."""
    m = complex(m)
    tr_rm_sigma = np.trace(bundle.R_M @ sigma.matrix().astype(complex))
    denom = 1.0 + m * sigma.eigenvalues.astype(complex)
    det_part = np.sum(sigma.eigenvalues / denom)
    return complex((bundle.z * tr_rm_sigma + det_part) / bundle.M)


def standard_vector_pairs(
    M: int, N: int, n_random: int = 4, seed: int = 0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic unit test vectors: population/sample coordinate
    vectors, the uniform vector, and fixed pseudo-random pairs drawn ahead
    of any data sampling."""
    dim = M + N
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for idx in (0, M - 1, M, dim - 1):
        e = np.zeros(dim)
        e[idx] = 1.0
        pairs.append((e, e))
    e_pop = np.zeros(dim)
    e_pop[0] = 1.0
    e_smp = np.zeros(dim)
    e_smp[M] = 1.0
    pairs.append((e_pop, e_smp))
    u = np.full(dim, 1.0 / math.sqrt(dim))
    pairs.append((u, u))
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], np.uint64)))
    for _ in range(n_random):
        v = rng.standard_normal(dim)
        w = rng.standard_normal(dim)
        pairs.append((v / np.linalg.norm(v), w / np.linalg.norm(w)))
    return pairs


def _check_unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise DomainError("test vectors must have unit norm")
    return v


def entrywise_residual(
    bundle: ResolventBundle,
    approx: DeterministicApprox,
    vectors: Sequence[tuple[np.ndarray, np.ndarray]],
) -> float:
    """max over pairs of |<v, (G - Pi) w>|."""
    diff = bundle.G - approx.matrix()
    worst = 0.0
    for v, w in vectors:
        v = _check_unit(v)
        w = _check_unit(w)
        worst = max(worst, abs(complex(np.vdot(v, diff @ w))))
    return worst


def entrywise_residuals_solve(
    z: "complex | ComplexSpectralPoint",
    X: "DataMatrix | np.ndarray",
    sigma: PopulationCovariance,
    approx: DeterministicApprox,
    vectors: Sequence[tuple[np.ndarray, np.ndarray]],
) -> list[float]:
    """Per-pair |<v, (G - Pi) w>| via one LU factorization of H, without
    forming G; the fast path for Monte Carlo sweeps."""
    zz = as_complex(z)
    Xe = X.entries if isinstance(X, DataMatrix) else np.asarray(X)
    H = _assemble_H(zz, Xe, sigma)
    lu = lu_factor(H)
    out = []
    for v, w in vectors:
        v = _check_unit(v)
        w = _check_unit(w)
        Gw = lu_solve(lu, w.astype(complex))
        out.append(abs(complex(np.vdot(v, Gw - approx.apply(w)))))
    return out


def _minor_indexed(A: IndexedMatrix, label) -> IndexedMatrix:
    """S^(label): inverse of A with row and column `label` removed."""
    sub = A.without(label)
    try:
        inv = np.linalg.inv(sub.values)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"minor at {label!r} is singular") from exc
    return IndexedMatrix(sub.rows, sub.cols, inv)


def _lemma_violations(A: IndexedMatrix, S: IndexedMatrix, i) -> float:
    """Max defect of the three minor identities at index i."""
    minor = _minor_indexed(A, i)
    labels = [lab for lab in A.rows if lab != i]
    pos = {lab: k for k, lab in enumerate(A.rows)}
    ii = pos[i]
    keep = [pos[lab] for lab in labels]

    # (1) S^(i)_jk = S_jk - S_ji S_ik / S_ii, all j,k != i at once
    Sv = S.values
    worst = 0.0
    if keep:
        rhs = Sv[np.ix_(keep, keep)] - np.outer(Sv[keep, ii], Sv[ii, keep]) / Sv[ii, ii]
        worst = float(np.max(np.abs(minor.values - rhs)))

    # (2) S_ij = -S_ii (A S^(i))_ij for all j != i
    AS = indexed_matmul(A, minor)
    if keep:
        row_i = AS.values[AS.rows.index(i), :]
        lhs = Sv[ii, keep]
        worst = max(worst, float(np.max(np.abs(lhs + Sv[ii, ii] * row_i))))

    # (3) 1/S_ii = A_ii - (A S^(i) A)_ii, Schur complement through the
    # label-indexed product
    ASA = indexed_matmul(AS, A)
    schur = A.values[ii, ii] - ASA.values[ASA.rows.index(i), ASA.cols.index(i)]
    worst = max(worst, float(abs(1.0 / Sv[ii, ii] - schur)))
    return worst


def resolvent_identity_check(
    A: IndexedMatrix, trials: int, seed: int = 0
) -> float:
    """Evaluate the minor/inverse identities on random index picks and
    return the largest absolute defect.  Singular minors are skipped."""
    if A.rows != A.cols:
        raise DomainError("identity checks need a square labeled matrix")
    try:
        S = IndexedMatrix(A.rows, A.cols, np.linalg.inv(A.values))
    except np.linalg.LinAlgError as exc:
        raise NumericError("matrix is singular") from exc
    rng = np.random.default_rng(seed)
    worst = 0.0
    skipped = 0
    for _ in range(trials):
        i = A.rows[rng.integers(len(A.rows))]
        try:
            worst = max(worst, _lemma_violations(A, S, i))
        except NumericError:
            skipped += 1
    if skipped:
        import warnings

        warnings.warn(f"skipped {skipped} singular minor(s)", stacklevel=2)
    return worst


def green_identity_check(bundle: ResolventBundle, trials: int, seed: int = 0) -> float:
    """Specializations of the minor identities to the Green function:
    all five displayed forms over population/sample index mixes, plus the
    quadratic (Schur) form of 1/G_mumu.  Requires diagonal Sigma."""
    G = bundle.G_indexed()
    H = bundle.H_indexed()
    X = bundle.X_indexed()
    Xs = IndexedMatrix(X.cols, X.rows, X.values.conj().T)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        i, j = rng.choice(len(bundle.index_m), size=2, replace=False)
        i, j = bundle.index_m[i], bundle.index_m[j]
        mu, nu = rng.choice(len(bundle.index_n), size=2, replace=False)
        mu, nu = bundle.index_n[mu], bundle.index_n[nu]

        # generic minor identity for mixed labels
        r = mu if rng.integers(2) else i
        minor_r = _minor_indexed(H, r)
        s, t = (i, nu) if r == mu else (j, mu)
        lhs = minor_r.entry(s, t)
        rhs = G.entry(s, t) - G.entry(s, r) * G.entry(r, t) / G.entry(r, r)
        worst = max(worst, abs(lhs - rhs))

        minor_mu = _minor_indexed(H, mu)
        minor_nu = _minor_indexed(H, nu)
        minor_i = _minor_indexed(H, i)
        minor_j = _minor_indexed(H, j)

        # sample-sample entries
        a = indexed_matmul(Xs, minor_mu)
        worst = max(
            worst, abs(G.entry(mu, nu) + G.entry(mu, mu) * a.entry(mu, nu))
        )
        b = indexed_matmul(minor_nu, X)
        worst = max(
            worst, abs(G.entry(mu, nu) + G.entry(nu, nu) * b.entry(mu, nu))
        )
        # population-population entries (off-diagonal of -Sigma^{-1} must
        # vanish for these two, hence the diagonal-Sigma requirement)
        c = indexed_matmul(X, minor_i)
        worst = max(worst, abs(G.entry(i, j) + G.entry(i, i) * c.entry(i, j)))
        d = indexed_matmul(minor_j, Xs)
        worst = max(worst, abs(G.entry(i, j) + G.entry(j, j) * d.entry(i, j)))
        # mixed entries
        e = indexed_matmul(minor_mu, X)
        worst = max(worst, abs(G.entry(i, mu) + G.entry(mu, mu) * e.entry(i, mu)))
        f = indexed_matmul(Xs, minor_mu)
        worst = max(worst, abs(G.entry(mu, i) + G.entry(mu, mu) * f.entry(mu, i)))
        # Schur form of the sample diagonal
        q = indexed_matmul(indexed_matmul(Xs, minor_mu), X)
        worst = max(
            worst, abs(1.0 / G.entry(mu, mu) - (-bundle.z - q.entry(mu, mu)))
        )
    return worst
