"""Shared spectral domain types: measures, covariances, eigensystems, and
the small matrix algebra (matrix functions, label-indexed products,
Stieltjes transforms) everything else is built on.

Conventions used throughout the package:

* eigenvalues are stored in descending order, ties broken by input order;
* dense storage only (desk scale, M and N up to a few thousand);
* the real symmetric field is the default, complex Hermitian is supported
  where z forces complex arithmetic anyway.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "NumericError",
    "PoleError",
    "ComplexSpectralPoint",
    "PopulationSpectralMeasure",
    "ModelConfig",
    "PopulationCovariance",
    "SampleEigensystem",
    "IndexedMatrix",
    "AtomicMeasure",
    "as_complex",
    "matrix_function",
    "indexed_matmul",
    "stieltjes_transform",
]

WEIGHT_SUM_TOL = 1e-12
CSV_RENORM_TOL = 1e-6


class DomainError(ValueError):
    """An input violates a documented precondition."""


class NumericError(RuntimeError):
    """A numerical computation failed or left its validity envelope."""


class PoleError(DomainError):
    """Evaluation was requested exactly at a pole."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ComplexSpectralPoint:
    """Spectral argument z = E + i*eta.

    For upper-half-plane use eta must be positive; boundary values on the
    real axis are always obtained through a decreasing eta schedule, never
    by evaluating at eta = 0 inside the support.
    """

    E: float
    eta: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.E) and np.isfinite(self.eta)):
            raise DomainError("spectral point must be finite")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexSpectralPoint":
        z = complex(z)
        return cls(z.real, z.imag)


def as_complex(z: "complex | ComplexSpectralPoint") -> complex:
    """Accept either a plain complex number or a ComplexSpectralPoint."""
    if isinstance(z, ComplexSpectralPoint):
        return z.z
    return complex(z)


@dataclass(frozen=True, eq=False)
class PopulationSpectralMeasure:
    """Atomic probability measure on the population eigenvalues.

    Atoms are (tau, weight) pairs with tau > 0, weights > 0 summing to one;
    they are kept sorted by descending tau (stable, so ties preserve input
    order).
    """

    taus: np.ndarray
    weights: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, PopulationSpectralMeasure):
            return NotImplemented
        return np.array_equal(self.taus, other.taus) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self) -> int:
        return hash((self.taus.tobytes(), self.weights.tobytes()))

    def __post_init__(self) -> None:
        taus = np.asarray(self.taus, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if taus.size == 0 or taus.shape != weights.shape:
            raise DomainError("need matching, non-empty tau/weight arrays")
        if not np.all(np.isfinite(taus)) or np.any(taus <= 0):
            raise DomainError("all atom locations must be finite and > 0")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise DomainError("all atom weights must be finite and > 0")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError(
                f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {weights.sum()!r}"
            )
        order = np.argsort(-taus, kind="stable")
        object.__setattr__(self, "taus", _readonly(taus[order]))
        object.__setattr__(self, "weights", _readonly(weights[order]))

    @property
    def n_atoms(self) -> int:
        return self.taus.size

    def mean(self) -> float:
        """First moment: integral of x over the measure."""
        return float(np.dot(self.taus, self.weights))

    @classmethod
    def point_mass(cls, tau: float = 1.0) -> "PopulationSpectralMeasure":
        return cls(np.array([tau]), np.array([1.0]))

    @classmethod
    def from_atoms(
        cls, atoms: Iterable[tuple[float, float]]
    ) -> "PopulationSpectralMeasure":
        pairs = list(atoms)
        taus = np.array([t for t, _ in pairs], dtype=float)
        weights = np.array([w for _, w in pairs], dtype=float)
        return cls(taus, weights)

    @classmethod
    def from_eigenvalues(cls, taus: Sequence[float]) -> "PopulationSpectralMeasure":
        """Empirical measure of an eigenvalue list, equal weights, exact
        duplicates aggregated."""
        taus = np.asarray(taus, dtype=float).ravel()
        uniq, counts = np.unique(taus, return_counts=True)
        return cls(uniq, counts / taus.size)

    @classmethod
    def load_csv(cls, path: "str | Path") -> "PopulationSpectralMeasure":
        """Read a `tau,weight` CSV.  Weights are renormalized when their sum
        is within 1e-6 of one; anything further off is a hard error."""
        path = Path(path)
        taus, weights = [], []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
                "tau",
                "weight",
            ]:
                raise DomainError(f"{path}: expected header 'tau,weight'")
            for row in reader:
                taus.append(float(row["tau"]))
                weights.append(float(row["weight"]))
        w = np.asarray(weights, dtype=float)
        if abs(w.sum() - 1.0) > CSV_RENORM_TOL:
            raise DomainError(
                f"{path}: weights sum to {w.sum()!r}, more than {CSV_RENORM_TOL} from 1"
            )
        return cls(np.asarray(taus), w / w.sum())

    def save_csv(self, path: "str | Path") -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "weight"])
            for t, w in zip(self.taus, self.weights):
                writer.writerow([f"{t:.17g}", f"{w:.17g}"])


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions of one sampling instance; phi = M/N is the concentration
    ratio that also plays the role of c in the shrinkage function."""

    M: int
    N: int
    field: str = "real"

    def __post_init__(self) -> None:
        if self.M < 1 or self.N < 1:
            raise DomainError("M and N must be >= 1")
        if self.field not in ("real", "complex"):
            raise DomainError("field must be 'real' or 'complex'")

    @property
    def phi(self) -> float:
        return self.M / self.N


def _largest_remainder_counts(weights: np.ndarray, total: int) -> np.ndarray:
    """Apportion `total` slots to weights, exactly preserving the total."""
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


@dataclass(frozen=True)
class PopulationCovariance:
    """Positive definite population covariance through its eigensystem.

    `frame` is the eigenvector matrix V (columns); None means the identity,
    i.e. a diagonal covariance, which is the default model everywhere.
    """

    eigenvalues: np.ndarray
    frame: "np.ndarray | None" = None

    def __post_init__(self) -> None:
        ev = np.asarray(self.eigenvalues, dtype=float).ravel()
        if ev.size == 0 or not np.all(np.isfinite(ev)) or np.any(ev <= 0):
            raise DomainError("eigenvalues must be finite and > 0")
        if np.any(np.diff(ev) > 0):
            order = np.argsort(-ev, kind="stable")
            ev = ev[order]
            if self.frame is not None:
                object.__setattr__(self, "frame", self.frame[:, order])
        object.__setattr__(self, "eigenvalues", _readonly(ev))
        if self.frame is not None:
            V = np.asarray(self.frame)
            if V.shape != (ev.size, ev.size):
                raise DomainError("frame shape must match eigenvalue count")
            if np.max(np.abs(V.conj().T @ V - np.eye(ev.size))) > 1e-10:
                raise DomainError("frame must be unitary within 1e-10")
            object.__setattr__(self, "frame", _readonly(V))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def matrix(self) -> np.ndarray:
        if self.frame is None:
            return np.diag(self.eigenvalues)
        return (self.frame * self.eigenvalues) @ self.frame.conj().T

    def inverse(self) -> np.ndarray:
        if self.frame is None:
            return np.diag(1.0 / self.eigenvalues)
        return (self.frame / self.eigenvalues) @ self.frame.conj().T

    def apply_sqrt(self, B: np.ndarray) -> np.ndarray:
        """Left-multiply by the principal square root."""
        root = np.sqrt(self.eigenvalues)
        if self.frame is None:
            return root[:, None] * B
        return (self.frame * root) @ (self.frame.conj().T @ B)

    def quad_forms(self, U: np.ndarray) -> np.ndarray:
        """diag(U^H Sigma U): the oracle overlaps u_i^* Sigma u_i."""
        Y = self.apply_sqrt(U)
        return np.einsum("ij,ij->j", Y.conj(), Y).real

    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def inverse_trace(self) -> float:
        return float((1.0 / self.eigenvalues).sum())

    def psm(self) -> PopulationSpectralMeasure:
        return PopulationSpectralMeasure.from_eigenvalues(self.eigenvalues)

    @classmethod
    def from_psm(
        cls, psm: PopulationSpectralMeasure, dim: int
    ) -> "PopulationCovariance":
        """Diagonal covariance whose empirical spectral measure follows the
        atoms of `psm` by largest-remainder apportionment of `dim` slots."""
        if dim < 1:
            raise DomainError("dimension must be >= 1")
        counts = _largest_remainder_counts(psm.weights, dim)
        ev = np.repeat(psm.taus, counts)
        return cls(ev)


@dataclass(frozen=True)
class SampleEigensystem:
    """Spectral decomposition S = U L U^H with descending eigenvalues."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    source: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        U = np.asarray(self.vectors)
        S = np.asarray(self.source)
        M = lam.size
        if U.shape != (M, M) or S.shape != (M, M):
            raise DomainError("inconsistent eigensystem shapes")
        if np.any(np.diff(lam) > 0):
            raise DomainError("eigenvalues must be descending")
        if np.max(np.abs(U.conj().T @ U - np.eye(M))) > 1e-10:
            raise DomainError("eigenvectors must be orthonormal within 1e-10")
        recon = (U * lam) @ U.conj().T
        rel = np.linalg.norm(recon - S) / max(np.linalg.norm(S), 1e-300)
        if rel > 1e-8:
            raise DomainError(f"U L U^H fails to reconstruct S: rel error {rel:.2e}")
        object.__setattr__(self, "eigenvalues", _readonly(lam))
        object.__setattr__(self, "vectors", _readonly(U))
        object.__setattr__(self, "source", _readonly(S))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @classmethod
    def from_matrix(cls, S: np.ndarray) -> "SampleEigensystem":
        S = np.asarray(S)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DomainError("S must be square")
        lam, U = np.linalg.eigh(S)
        return cls(lam[::-1], U[:, ::-1], S)


@dataclass(frozen=True)
class IndexedMatrix:
    """Dense matrix over explicit, ordered row/column label sets.

    The label sets let products contract over the *intersection* of inner
    labels, which is exactly the bookkeeping resolvent minor identities
    need.
    """

    rows: tuple
    cols: tuple
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        cols = tuple(self.cols)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (len(rows), len(cols)):
            raise DomainError("values shape must match label counts")
        if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
            raise DomainError("labels must be unique within each axis")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def from_dense(
        cls, values: np.ndarray, rows: "Sequence | None" = None, cols: "Sequence | None" = None
    ) -> "IndexedMatrix":
        values = np.asarray(values)
        if rows is None:
            rows = range(values.shape[0])
        if cols is None:
            cols = range(values.shape[1])
        return cls(tuple(rows), tuple(cols), values)

    def entry(self, r, c) -> complex:
        return complex(self.values[self.rows.index(r), self.cols.index(c)])

    def without(self, label) -> "IndexedMatrix":
        """Drop row and column `label` wherever present (minor support)."""
        ri = [k for k, lab in enumerate(self.rows) if lab != label]
        ci = [k for k, lab in enumerate(self.cols) if lab != label]
        return IndexedMatrix(
            tuple(self.rows[k] for k in ri),
            tuple(self.cols[k] for k in ci),
            self.values[np.ix_(ri, ci)],
        )


def indexed_matmul(a: IndexedMatrix, b: IndexedMatrix) -> IndexedMatrix:
    """Product contracting over the intersection of a's columns and b's rows.

    Disjoint inner label sets yield the zero matrix; fully aligned labels
    reduce to the ordinary matrix product.
    """
    bpos = {lab: k for k, lab in enumerate(b.rows)}
    common = [lab for lab in a.cols if lab in bpos]
    if not common:
        out = np.zeros((len(a.rows), len(b.cols)), dtype=complex)
        return IndexedMatrix(a.rows, b.cols, out)
    ai = [a.cols.index(lab) for lab in common]
    bi = [bpos[lab] for lab in common]
    out = a.values[:, ai] @ b.values[bi, :]
    return IndexedMatrix(a.rows, b.cols, out)


@dataclass(frozen=True)
class AtomicMeasure:
    """Weighted Dirac comb; locations kept sorted ascending."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        loc = np.asarray(self.locations, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if loc.shape != w.shape:
            raise DomainError("locations and weights must have equal length")
        if not np.all(np.isfinite(loc)):
            raise DomainError("locations must be finite")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        order = np.argsort(loc, kind="stable")
        object.__setattr__(self, "locations", _readonly(loc[order]))
        object.__setattr__(self, "weights", _readonly(w[order]))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def mass_below(self, x: float) -> float:
        """Total weight of atoms strictly below x (half-open convention)."""
        k = np.searchsorted(self.locations, x, side="left")
        return float(self.weights[:k].sum())

    def cumulative_on(self, grid: np.ndarray) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.locations, np.asarray(grid, dtype=float), side="left")
        return cum[idx]


def matrix_function(A: np.ndarray, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function through the spectral decomposition of a
    symmetric/Hermitian matrix.  Exact for diagonal input."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("matrix_function needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.conj().T)) > 1e-10 * scale:
        raise DomainError("matrix_function needs a symmetric/Hermitian matrix")
    diag = np.diagonal(A)
    if np.count_nonzero(A - np.diag(diag)) == 0:
        gv = _apply_scalar(g, diag.real.astype(float))
        return np.diag(gv)
    w, V = np.linalg.eigh(A)
    gv = _apply_scalar(g, w)
    out = (V * gv) @ V.conj().T
    if np.isrealobj(A) and np.isrealobj(gv):
        out = out.real
    return out


def _apply_scalar(g: Callable, x: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(g(x))
        if out.shape == x.shape:
            return out
    except Exception:
        pass
    return np.asarray([g(v) for v in x])


def stieltjes_transform(
    measure: AtomicMeasure, z: "complex | ComplexSpectralPoint"
) -> complex:
    """S(sigma)(z) = sum_i w_i / (lambda_i - z); maps the upper half-plane
    to itself for measures with positive mass."""
    zz = as_complex(z)
    if zz.imag == 0.0 and np.any(measure.locations == zz.real):
        raise PoleError(f"z = {zz} sits exactly on an atom")
    return complex(np.sum(measure.weights / (measure.locations - zz)))
