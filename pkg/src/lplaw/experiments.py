"""Monte Carlo orchestration: residual sweeps over N grids, log-log rate
fits, empirical stochastic-domination checks, loss comparisons, and run
persistence.

Replicate seeds are pure functions of (master_seed, N, replicate), so any
execution order (serial or worker pool) produces identical tables, and
results.csv reruns bit-identically for a fixed config.
"""

from __future__ import annotations

import csv
import json
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__ as _version
from .core import (
    AtomicMeasure,
    DomainError,
    IndexedMatrix,
    ModelConfig,
    NumericError,
    PopulationCovariance,
    PopulationSpectralMeasure,
)
from .measures import DeterministicMeasure, empirical_measures, interval_sup_distance
from .mp import default_profile, psi, solve_m
from .resolvent import (
    build_bundle,
    build_pi,
    companion_trace,
    entrywise_residuals_solve,
    green_identity_check,
    resolvent_identity_check,
    sigma_weighted_trace,
    standard_vector_pairs,
)
from .sampling import derive_seed, sample_cov, sample_data
from .shrinkage import (
    ShrinkageEstimate,
    baseline_estimates,
    delta_curve,
    mv_loss,
    oracle_shrink,
    shrink_spectrum,
)

__all__ = [
    "LAWS",
    "ExperimentConfig",
    "ResultTable",
    "RateFit",
    "DominanceReport",
    "run_experiment",
    "identity_sweep",
    "fit_rate",
    "dominance_check",
    "loss_comparison",
    "persist_run",
    "load_config",
]

LAWS = (
    "bottom_trace",
    "top_trace",
    "entrywise",
    "mu_interval",
    "nu_interval",
    "excess_loss",
)
RESOLVENT_LAWS = ("bottom_trace", "top_trace", "entrywise")
REGULARITY_TAU = (0.5, 5.0)
REGULARITY_PHI = (0.1, 0.9)
MAX_FAILURE_FRACTION = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs; hashable inputs only so runs rerun
    bit-identically."""

    law: str
    psm: PopulationSpectralMeasure
    phi: float
    n_list: tuple[int, ...]
    replicates: int
    master_seed: int
    z: "complex | None" = None
    grid_size: int = 200
    out_dir: "str | None" = None
    field: str = "real"

    def __post_init__(self) -> None:
        if self.law not in LAWS:
            raise DomainError(f"unknown law {self.law!r}; choose from {LAWS}")
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise DomainError("n_list must be non-empty and strictly increasing")
        object.__setattr__(self, "n_list", n_list)
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")
        if not (REGULARITY_PHI[0] <= self.phi <= REGULARITY_PHI[1]):
            raise DomainError(
                f"phi must lie in {REGULARITY_PHI} for the verification harness"
            )
        taus = self.psm.taus
        if taus.min() < REGULARITY_TAU[0] or taus.max() > REGULARITY_TAU[1]:
            raise DomainError(
                f"population atoms must lie in {REGULARITY_TAU} for the harness"
            )
        if self.law in RESOLVENT_LAWS:
            z = complex(self.z) if self.z is not None else complex(1.0, 1.0)
            if z.imag <= 0:
                raise DomainError("resolvent laws need Im z > 0")
            object.__setattr__(self, "z", z)
        if self.grid_size < 2:
            raise DomainError("grid_size must be >= 2")

    def to_jsonable(self) -> dict:
        return {
            "law": self.law,
            "psm": [[float(t), float(w)] for t, w in zip(self.psm.taus, self.psm.weights)],
            "phi": self.phi,
            "n_list": list(self.n_list),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "z": None if self.z is None else [self.z.real, self.z.imag],
            "grid_size": self.grid_size,
            "out_dir": self.out_dir,
            "field": self.field,
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "ExperimentConfig":
        return cls(
            law=data["law"],
            psm=PopulationSpectralMeasure.from_atoms(
                [(t, w) for t, w in data["psm"]]
            ),
            phi=float(data["phi"]),
            n_list=tuple(data["n_list"]),
            replicates=int(data["replicates"]),
            master_seed=int(data["master_seed"]),
            z=None if data.get("z") is None else complex(*data["z"]),
            grid_size=int(data.get("grid_size", 200)),
            out_dir=data.get("out_dir"),
            field=data.get("field", "real"),
        )


@dataclass
class ResultTable:
    """Minimal column-typed table backing the CSV schemas."""

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    failures: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.asarray([row[k] for row in self.rows])

    def group_by_n(self, value_column: str) -> dict[int, np.ndarray]:
        nk = self.columns.index("n")
        vk = self.columns.index(value_column)
        out: dict[int, list[float]] = {}
        for row in self.rows:
            out.setdefault(int(row[nk]), []).append(float(row[vk]))
        return {n: np.asarray(v) for n, v in sorted(out.items())}

    def write_csv(self, path: "str | Path") -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_format_cell(v) for v in row])

    @classmethod
    def read_csv(cls, path: "str | Path") -> "ResultTable":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = [tuple(_parse_cell(v) for v in row) for row in reader]
        return cls(header, rows)


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _parse_cell(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log N, log median value)."""

    slope: float
    intercept: float
    stderr: float
    n_used: tuple[int, ...]
    medians: dict[int, float]
    quantiles: dict[int, dict[str, float]]


@dataclass(frozen=True)
class DominanceReport:
    passed: bool
    epsilon: float
    q99_ratio: dict[int, float]
    ratio_slope: float
    per_n_ok: dict[int, bool]


# ---------------------------------------------------------------------------
# per-law replicate work


class _ClampedCurve:
    """Picklable clamped interpolant for deterministic weight functions."""

    def __init__(self, xs: np.ndarray, values: np.ndarray):
        self.xs = np.asarray(xs, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.values)


@dataclass(frozen=True)
class _NContext:
    """Deterministic quantities shared by every replicate at one N."""

    law: str
    n: int
    M: int
    phi_eff: float
    field: str
    z: "complex | None" = None
    m: "complex | None" = None
    bound: float = 0.0
    measure: "DeterministicMeasure | None" = None
    weight: "_ClampedCurve | None" = None
    grid_size: int = 200
    profile: object = None
    sigma_eigenvalues: "tuple[float, ...] | None" = None


def _context_for_n(config: ExperimentConfig, n: int, shared: dict) -> _NContext:
    M = max(1, round(config.phi * n))
    sigma = PopulationCovariance.from_psm(config.psm, M)
    phi_eff = M / n
    base = dict(
        law=config.law,
        n=n,
        M=M,
        phi_eff=phi_eff,
        field=config.field,
        sigma_eigenvalues=tuple(sigma.eigenvalues),
        grid_size=config.grid_size,
    )
    if config.law in RESOLVENT_LAWS:
        z = config.z
        m = solve_m(z, sigma.psm(), phi_eff).m
        if config.law == "entrywise":
            bound = psi(z, m, n).psi
        else:
            bound = 1.0 / (n * z.imag)
        return _NContext(z=z, m=m, bound=bound, **base)
    profile = shared.get("profile")
    if profile is None:
        profile = default_profile(config.psm, config.phi)
        shared["profile"] = profile
    measure = DeterministicMeasure.from_profile(profile, "esd_of_S")
    weight = None
    if config.law == "nu_interval":
        xs, vals = delta_curve(profile)
        weight = _ClampedCurve(xs, vals)
    return _NContext(
        measure=measure, weight=weight, bound=1.0 / n, profile=profile, **base
    )


def _replicate_rows(ctx: _NContext, master_seed: int, rep: int) -> list[tuple]:
    seed = derive_seed(master_seed, ctx.n, rep)
    sigma = PopulationCovariance(np.asarray(ctx.sigma_eigenvalues))
    X = sample_data(ModelConfig(ctx.M, ctx.n, ctx.field), seed)

    if ctx.law == "bottom_trace":
        Y = sigma.apply_sqrt(X.entries)
        lam = np.linalg.eigvalsh(Y @ Y.conj().T)
        value = abs(companion_trace(lam, ctx.M, ctx.n, ctx.z) - ctx.m)
        return [(ctx.n, seed, float(value), ctx.bound)]

    if ctx.law == "top_trace":
        cov = sample_cov(sigma, X)
        lam = cov.eigensystem.eigenvalues
        overlaps = sigma.quad_forms(cov.eigensystem.vectors)
        tr = sigma_weighted_trace(lam, overlaps, ctx.z)
        denom = 1.0 + ctx.m * sigma.eigenvalues.astype(complex)
        det_part = np.sum(sigma.eigenvalues / denom)
        value = abs((ctx.z * tr + det_part) / ctx.M)
        return [(ctx.n, seed, float(value), ctx.bound)]

    if ctx.law == "entrywise":
        approx = build_pi(ctx.z, ctx.m, sigma, ctx.n)
        pairs = standard_vector_pairs(ctx.M, ctx.n)
        residuals = entrywise_residuals_solve(ctx.z, X, sigma, approx, pairs)
        return [(ctx.n, seed, float(r), ctx.bound) for r in residuals]

    if ctx.law == "mu_interval":
        Y = sigma.apply_sqrt(X.entries)
        lam = np.linalg.eigvalsh(Y @ Y.conj().T)
        emp = AtomicMeasure(lam, np.full(ctx.M, 1.0 / ctx.M))
        value = interval_sup_distance(
            emp, ctx.measure, ctx.weight, grid_size=ctx.grid_size
        )
        return [(ctx.n, seed, float(value), ctx.bound)]

    if ctx.law == "nu_interval":
        cov = sample_cov(sigma, X)
        _, nu_hat = empirical_measures(cov.eigensystem, sigma)
        value = interval_sup_distance(
            nu_hat, ctx.measure, ctx.weight, grid_size=ctx.grid_size
        )
        return [(ctx.n, seed, float(value), ctx.bound)]

    if ctx.law == "excess_loss":
        cov = sample_cov(sigma, X)
        oracle = oracle_shrink(cov.eigensystem.vectors, sigma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dhat, _ = shrink_spectrum(
                cov.eigensystem.eigenvalues, ctx.profile, n_samples=ctx.n
            )
        feasible = ShrinkageEstimate(cov.eigensystem.vectors, dhat, "delta")
        gap = (
            mv_loss(feasible, sigma, ctx.n).mv_loss
            - mv_loss(oracle, sigma, ctx.n).mv_loss
        )
        return [(ctx.n, seed, float(gap), ctx.bound)]

    raise DomainError(f"unknown law {ctx.law!r}")


def _replicate_task(args) -> tuple[int, int, "list[tuple] | None", "str | None"]:
    ctx, master_seed, rep = args
    try:
        return ctx.n, rep, _replicate_rows(ctx, master_seed, rep), None
    except (NumericError, np.linalg.LinAlgError) as exc:
        return ctx.n, rep, None, f"{type(exc).__name__}: {exc}"


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Run one law over the (N, replicate) grid of a config.

    Individual replicate failures are recorded on the returned table; more
    than 10% of them is an experiment-level error.
    """
    shared: dict = {}
    contexts = {n: _context_for_n(config, n, shared) for n in config.n_list}
    tasks = [
        (contexts[n], config.master_seed, rep)
        for n in config.n_list
        for rep in range(config.replicates)
    ]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=4))
    else:
        results = [_replicate_task(t) for t in tasks]

    results.sort(key=lambda item: (item[0], item[1]))
    table = ResultTable(("n", "seed", "value", "bound"))
    for n, rep, rows, err in results:
        if err is not None:
            table.failures.append((n, rep, err))
        else:
            table.rows.extend(rows)
    total = len(tasks)
    if len(table.failures) > MAX_FAILURE_FRACTION * total:
        raise NumericError(
            f"{len(table.failures)}/{total} replicates failed; first: "
            f"{table.failures[0]}"
        )
    return table


def identity_sweep(
    psm: PopulationSpectralMeasure,
    phi: float,
    z: complex,
    n_list: Sequence[int],
    replicates: int,
    master_seed: int,
    tol: float = 1e-9,
) -> ResultTable:
    """Minor/inverse identity checks on seeded random instances: one
    well-conditioned complex n x n labeled matrix plus one Green-function
    instance (M = round(phi n), N = n) per replicate; the recorded value is
    the larger of the two max violations."""
    table = ResultTable(("n", "seed", "value", "bound"))
    for n in n_list:
        for rep in range(replicates):
            seed = derive_seed(master_seed, n, rep)
            rng = np.random.default_rng(seed)
            A = IndexedMatrix.from_dense(
                rng.standard_normal((n, n))
                + 1j * rng.standard_normal((n, n))
                + 2.0 * np.sqrt(n) * np.eye(n)
            )
            worst = resolvent_identity_check(A, trials=5, seed=seed)
            M = max(1, round(phi * n))
            sigma = PopulationCovariance.from_psm(psm, M)
            X = sample_data(ModelConfig(M, n), seed)
            bundle = build_bundle(z, X, sigma)
            worst = max(worst, green_identity_check(bundle, trials=5, seed=seed))
            table.rows.append((n, seed, float(worst), tol))
    return table


def fit_rate(table: ResultTable, value_column: str = "value") -> RateFit:
    """Slope of log median(value) against log N."""
    groups = table.group_by_n(value_column)
    medians = {n: float(np.median(v)) for n, v in groups.items()}
    usable = {n: m for n, m in medians.items() if m > 0}
    dropped = set(medians) - set(usable)
    if dropped:
        warnings.warn(f"non-positive medians at N in {sorted(dropped)} excluded")
    if len(usable) < 2:
        raise DomainError("rate fit needs >= 2 distinct N with positive medians")
    ns = np.asarray(sorted(usable))
    x = np.log(ns.astype(float))
    y = np.log([usable[n] for n in ns])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = len(ns) - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else float("nan")
    quantiles = {
        n: {
            "q50": float(np.quantile(v, 0.50)),
            "q90": float(np.quantile(v, 0.90)),
            "q99": float(np.quantile(v, 0.99)),
        }
        for n, v in groups.items()
    }
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        n_used=tuple(int(n) for n in ns),
        medians=medians,
        quantiles=quantiles,
    )


def dominance_check(
    table: ResultTable,
    bound_column: str = "bound",
    epsilon: float = 0.2,
    value_column: str = "value",
) -> DominanceReport:
    """Empirical rendering of stochastic domination at desk scale: for each
    N the 99th percentile of value/bound must stay below N^epsilon, and the
    fitted slope of log q99(value/bound) against log N must stay below
    epsilon + 0.05."""
    nk = table.columns.index("n")
    vk = table.columns.index(value_column)
    bk = table.columns.index(bound_column)
    ratios: dict[int, list[float]] = {}
    excluded = 0
    for row in table.rows:
        bound = float(row[bk])
        if bound == 0:
            excluded += 1
            continue
        ratios.setdefault(int(row[nk]), []).append(float(row[vk]) / bound)
    if excluded:
        warnings.warn(f"excluded {excluded} rows with zero bound")
    if not ratios:
        raise DomainError("no usable rows for dominance check")
    q99 = {n: float(np.quantile(np.asarray(v), 0.99)) for n, v in sorted(ratios.items())}
    per_n_ok = {n: q <= n**epsilon for n, q in q99.items()}
    if len(q99) >= 2:
        x = np.log(np.asarray(sorted(q99), dtype=float))
        y = np.log([max(q99[n], 1e-300) for n in sorted(q99)])
        ratio_slope = float(np.polyfit(x, y, 1)[0])
    else:
        ratio_slope = 0.0
    passed = all(per_n_ok.values()) and ratio_slope <= epsilon + 0.05
    return DominanceReport(passed, epsilon, q99, ratio_slope, per_n_ok)


def _loss_rows(ctx: _NContext, master_seed: int, rep: int) -> list[tuple]:
    seed = derive_seed(master_seed, ctx.n, rep)
    sigma = PopulationCovariance(np.asarray(ctx.sigma_eigenvalues))
    X = sample_data(ModelConfig(ctx.M, ctx.n, ctx.field), seed)
    cov = sample_cov(sigma, X)
    eigsys = cov.eigensystem
    estimates = {"oracle": oracle_shrink(eigsys.vectors, sigma)}
    sample_est, scalar_est = baseline_estimates(eigsys)
    estimates["sample"] = sample_est
    estimates["scalar"] = scalar_est
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dhat, _ = shrink_spectrum(eigsys.eigenvalues, ctx.profile, n_samples=ctx.n)
    estimates["delta"] = ShrinkageEstimate(eigsys.vectors, dhat, "delta")
    losses = {
        name: mv_loss(est, sigma, ctx.n).mv_loss for name, est in estimates.items()
    }
    worst = losses["oracle"] - min(losses.values())
    if worst > 1e-9:
        raise NumericError(
            f"oracle beaten by {worst:.3e} at (n={ctx.n}, rep={rep}); "
            "optimality is an exact property"
        )
    order = ("sample", "scalar", "delta", "oracle")
    return [(ctx.n, seed, name, losses[name]) for name in order]


def _loss_task(args):
    ctx, master_seed, rep = args
    try:
        return ctx.n, rep, _loss_rows(ctx, master_seed, rep), None
    except (NumericError, np.linalg.LinAlgError) as exc:
        return ctx.n, rep, None, f"{type(exc).__name__}: {exc}"


def loss_comparison(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Per-replicate MV losses of sample, scalar, feasible-shrinkage and
    oracle estimators; the oracle must win every replicate."""
    cfg = config if config.law == "excess_loss" else replace(config, law="excess_loss")
    shared: dict = {}
    contexts = {n: _context_for_n(cfg, n, shared) for n in cfg.n_list}
    tasks = [
        (contexts[n], cfg.master_seed, rep)
        for n in cfg.n_list
        for rep in range(cfg.replicates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_loss_task, tasks, chunksize=4))
    else:
        results = [_loss_task(t) for t in tasks]
    results.sort(key=lambda item: (item[0], item[1]))
    table = ResultTable(("n", "seed", "estimator", "mv_loss"))
    for n, rep, rows, err in results:
        if err is not None:
            table.failures.append((n, rep, err))
        else:
            table.rows.extend(rows)
    if len(table.failures) > MAX_FAILURE_FRACTION * len(tasks):
        raise NumericError(f"{len(table.failures)}/{len(tasks)} replicates failed")
    return table


# ---------------------------------------------------------------------------
# persistence


def persist_run(
    config: ExperimentConfig,
    tables: dict[str, ResultTable],
    environment: "dict | None" = None,
    summary: "dict | None" = None,
) -> Path:
    """Write config.json, one CSV per table, summary.json and manifest.json
    into the config's output directory.  results.csv content is a pure
    function of the config."""
    if config.out_dir is None:
        raise DomainError("config.out_dir must be set to persist a run")
    run_dir = Path(config.out_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        with (run_dir / "config.json").open("w") as fh:
            json.dump(config.to_jsonable(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, table in tables.items():
            table.write_csv(run_dir / f"{name}.csv")
        with (run_dir / "summary.json").open("w") as fh:
            json.dump(summary or {}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest = {
            "tool": "lplaw",
            "version": _version,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        manifest.update(environment or {})
        with (run_dir / "manifest.json").open("w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DomainError(f"cannot write run directory {run_dir}: {exc}") from exc
    return run_dir


def load_config(run_dir: "str | Path") -> ExperimentConfig:
    with (Path(run_dir) / "config.json").open() as fh:
        return ExperimentConfig.from_jsonable(json.load(fh))


def rate_fit_summary(fit: RateFit, dom: "DominanceReport | None" = None) -> dict:
    out = {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "stderr": fit.stderr,
        "n_used": list(fit.n_used),
        "medians": {str(n): m for n, m in fit.medians.items()},
        "quantiles": {
            str(n): q for n, q in fit.quantiles.items()
        },
    }
    if dom is not None:
        out["dominance"] = {
            "passed": dom.passed,
            "epsilon": dom.epsilon,
            "q99_ratio": {str(n): v for n, v in dom.q99_ratio.items()},
            "ratio_slope": dom.ratio_slope,
        }
    return out
