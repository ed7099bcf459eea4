"""Gaussian data matrices and sample covariances with reproducible seeding.

Entries of X are i.i.d. mean zero with variance 1/N (complex variance split
evenly between parts), and S = Sigma^{1/2} X X^* Sigma^{1/2}, so that
E S = Sigma and the spectrum stays bounded as M, N grow.

Each column of X is drawn from its own counter-based stream keyed by
(seed, column), so generation can be parallelized by column while staying
bit-identical to the sequential result.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import (
    DomainError,
    ModelConfig,
    PopulationCovariance,
    PopulationSpectralMeasure,
    SampleEigensystem,
)

__all__ = [
    "DataMatrix",
    "SampleCovariance",
    "sample_data",
    "sample_cov",
    "simulate",
    "derive_seed",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DataMatrix:
    """M x N data matrix with its generating seed; entry variance 1/N."""

    entries: np.ndarray
    seed: int
    field: str = "real"

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise DomainError("entries must be a matrix")
        entries = np.ascontiguousarray(entries)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class SampleCovariance:
    """S = Sigma^{1/2} X X^* Sigma^{1/2} together with its eigensystem."""

    S: np.ndarray
    eigensystem: SampleEigensystem

    def __post_init__(self) -> None:
        S = np.ascontiguousarray(self.S)
        if float(np.trace(S).real) <= 0:
            raise DomainError("sample covariance must have positive trace")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)


def _column_rng(seed: int, column: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, column & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_data(config: ModelConfig, seed: int) -> DataMatrix:
    """Draw X with i.i.d. N(0, 1/N) entries (complex: split across parts).

    Deterministic per (config, seed); column j depends only on (seed, j).
    """
    M, N = config.M, config.N
    scale = 1.0 / np.sqrt(N)
    if config.field == "real":
        X = np.empty((M, N), dtype=float)
        for j in range(N):
            X[:, j] = _column_rng(seed, j).standard_normal(M)
    else:
        X = np.empty((M, N), dtype=complex)
        for j in range(N):
            v = _column_rng(seed, j).standard_normal(2 * M)
            X[:, j] = (v[:M] + 1j * v[M:]) / np.sqrt(2.0)
    X *= scale
    return DataMatrix(X, int(seed), config.field)


def sample_cov(sigma: PopulationCovariance, X: DataMatrix) -> SampleCovariance:
    """Form S = Sigma^{1/2} X X^* Sigma^{1/2} and its spectral decomposition."""
    M = X.shape[0]
    if sigma.dim != M:
        raise DomainError(f"covariance dim {sigma.dim} != data rows {M}")
    Y = sigma.apply_sqrt(X.entries)
    S = Y @ Y.conj().T
    S = (S + S.conj().T) / 2.0
    if np.isrealobj(X.entries) and sigma.frame is None:
        S = S.real
    return SampleCovariance(S, SampleEigensystem.from_matrix(S))


def simulate(
    psm: PopulationSpectralMeasure,
    phi: float,
    n_samples: int,
    seed: int,
    field: str = "real",
) -> tuple[PopulationCovariance, DataMatrix, SampleCovariance]:
    """One full draw at aspect ratio phi: build Sigma from the measure with
    M = round(phi * N) eigenvalues, sample X, and form S."""
    if not (phi > 0):
        raise DomainError("phi must be positive")
    M = max(1, round(phi * n_samples))
    sigma = PopulationCovariance.from_psm(psm, M)
    config = ModelConfig(M, n_samples, field)
    X = sample_data(config, seed)
    return sigma, X, sample_cov(sigma, X)


def derive_seed(master_seed: int, n: int, replicate: int) -> int:
    """Stable 64-bit replicate seed, a pure function of its arguments."""
    digest = hashlib.blake2b(
        f"{master_seed}:{n}:{replicate}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")
