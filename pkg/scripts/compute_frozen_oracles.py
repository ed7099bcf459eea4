#!/usr/bin/env python3
"""Recompute the Monte Carlo constants frozen into the test suite.

Slow by design (large matrices, many seeds); run only when the frozen
values need re-deriving.  Current outputs:

* mean of u_i^* Sigma u_i over sample eigenvalues in [1.95, 2.05] for the
  half/half {1, 3} population at phi = 0.5, N = 4000, 50 seeds
  -> tests/test_shrinkage.py::test_two_atom_value_matches_monte_carlo_oracle
"""

from __future__ import annotations

import numpy as np


def two_atom_overlap_oracle(n_seeds: int = 50, N: int = 4000) -> None:
    M = N // 2
    tau = np.array([3.0] * (M // 2) + [1.0] * (M // 2))
    per_seed = []
    pooled = []
    for seed in range(n_seeds):
        rng = np.random.default_rng(900 + seed)
        X = rng.standard_normal((M, N)) / np.sqrt(N)
        Y = np.sqrt(tau)[:, None] * X
        lam, U = np.linalg.eigh(Y @ Y.T)
        overlaps = (tau[:, None] * U**2).sum(axis=0)
        sel = (lam >= 1.95) & (lam <= 2.05)
        pooled.extend(overlaps[sel])
        per_seed.append(float(np.mean(overlaps[sel])))
        print(f"seed {seed:2d}: {per_seed[-1]:.6f} ({sel.sum()} eigenvalues)")
    print(f"pooled mean over {len(pooled)} eigenvalues: {np.mean(pooled)!r}")
    print(f"between-seed sd: {np.std(per_seed)!r}")


if __name__ == "__main__":
    two_atom_overlap_oracle()
