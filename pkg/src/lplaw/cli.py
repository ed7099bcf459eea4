"""Single entry point dispatching every subcommand.

All numerical work lives in the library modules; each handler only parses
options, calls through, and serializes results.  Options can also come
from a flat `key = value` config file (`--config FILE`, `#` comments);
command-line flags win over file values.  Complex arguments are written
RE+IMi with no spaces, e.g. `1+1i` or `0.5-2e-3i`.

Exit codes: 0 success, 1 domain/validation error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from .core import DomainError, NumericError, PopulationSpectralMeasure
from .experiments import (
    ExperimentConfig,
    dominance_check,
    fit_rate,
    identity_sweep,
    loss_comparison,
    persist_run,
    rate_fit_summary,
    run_experiment,
)
from .mp import default_profile, solve_m
from .sampling import simulate
from .shrinkage import shrink_spectrum

__all__ = ["main", "dispatch", "parse_complex"]

_COMPLEX_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"([+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i$"
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_NUMERIC = 2


def parse_complex(text: str) -> complex:
    m = _COMPLEX_RE.match(text.strip())
    if m is None:
        raise DomainError(f"complex values use RE+IMi (e.g. 1+1i); got {text!r}")
    return complex(float(m.group(1)), float(m.group(2)))


def _parse_n_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise DomainError(f"bad N list {text!r}: {exc}") from exc


def _default_seed() -> int:
    return int(os.environ.get("LP_SEED", "0"))


class _Parser(argparse.ArgumentParser):
    # spec'd exit contract: usage problems exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_DOMAIN)


def _load_config_tokens(path: str) -> list[str]:
    tokens: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise DomainError(f"{path}:{lineno}: empty key")
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file values in *before* explicit flags so the flags
    win, and unknown file keys fall through to normal argparse rejection."""
    if not argv or argv[0].startswith("-"):
        return argv
    sub, rest = argv[0], argv[1:]
    out: list[str] = []
    cfg_tokens: list[str] = []
    k = 0
    while k < len(rest):
        tok = rest[k]
        if tok == "--config":
            if k + 1 >= len(rest):
                raise DomainError("--config needs a file path")
            cfg_tokens.extend(_load_config_tokens(rest[k + 1]))
            k += 2
        elif tok.startswith("--config="):
            cfg_tokens.extend(_load_config_tokens(tok.split("=", 1)[1]))
            k += 1
        else:
            out.append(tok)
            k += 1
    return [sub] + cfg_tokens + out


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func",) and v is not None
    }
    rendered = {k: (str(v) if isinstance(v, complex) else v) for k, v in resolved.items()}
    print(f"config: {json.dumps(rendered, sort_keys=True, default=str)}", file=sys.stderr)


def _write_csv(path: Path, header: list[str], rows) -> None:
    import csv

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.17g}" if isinstance(v, float) else str(v) for v in row]
            )


# ---------------------------------------------------------------------------
# handlers


def _cmd_solve_m(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    sol = solve_m(args.z, psm, args.phi, tol=args.tol)
    print(
        json.dumps(
            {
                "m": {"re": sol.m.real, "im": sol.m.imag},
                "residual": sol.residual,
                "iterations": sol.iterations,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_density(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    if args.emin >= args.emax:
        raise DomainError("--emin must be below --emax")
    grid = np.linspace(args.emin, args.emax, args.points)
    grid = grid[grid != 0.0]
    from .mp import boundary_profile

    profile = boundary_profile(grid, psm, args.phi)
    out = Path(args.out)
    _write_csv(
        out,
        ["E", "w", "hilbert_w", "w_S"],
        zip(profile.E, profile.w, profile.hilbert_w, profile.w_S),
    )
    sidecar = out.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "edges": [[a, b] for a, b in profile.edges],
                "atom_at_zero": profile.atom_at_zero,
            },
            sort_keys=True,
        )
        + "\n"
    )
    print(str(out))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigma, X, cov = simulate(psm, args.phi, args.n, args.seed, args.field)
    lam = cov.eigensystem.eigenvalues
    _write_csv(out / "spectrum.csv", ["lambda"], ((float(v),) for v in lam))
    if args.full_eigensystem:
        if args.field != "real":
            raise DomainError("the binary eigensystem sidecar supports the real field only")
        _write_eigensystem(
            out / "eigensystem.bin", lam, cov.eigensystem.vectors, X.shape, args.seed
        )
    print(str(out))
    return EXIT_OK


def _write_eigensystem(path: Path, lam, U, shape, seed) -> None:
    # layout: magic "LPEIG1", then M, N, seed as little-endian uint64,
    # then M float64 eigenvalues and M*M float64 row-major eigenvectors
    M, N = shape
    with path.open("wb") as fh:
        fh.write(b"LPEIG1")
        fh.write(np.asarray([M, N, seed], dtype="<u8").tobytes())
        fh.write(np.asarray(lam, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(U, dtype="<f8").tobytes())


def _cmd_shrink(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    lams = _read_single_column(args.spectrum, "lambda")
    profile = default_profile(psm, args.phi)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        deltas, clamped = shrink_spectrum(lams, profile, c=args.phi)
    out = Path(args.out)
    _write_csv(out, ["lambda", "delta"], zip(map(float, lams), map(float, deltas)))
    out.with_suffix(".json").write_text(
        json.dumps(
            {
                "trace_in": float(np.sum(lams)),
                "trace_out": float(np.sum(deltas)),
                "clamped_count": int(clamped),
            },
            sort_keys=True,
        )
        + "\n"
    )
    print(str(out))
    return EXIT_OK


def _read_single_column(path: str, column: str) -> np.ndarray:
    import csv

    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DomainError(f"{path}: expected a '{column}' column")
        values = [float(row[column]) for row in reader]
    if not values:
        raise DomainError(f"{path}: no data rows")
    return np.asarray(values)


_CLI_LAW = {
    "bottom-trace": "bottom_trace",
    "top-trace": "top_trace",
    "entrywise": "entrywise",
    "mu-interval": "mu_interval",
    "nu-interval": "nu_interval",
    "excess-loss": "excess_loss",
}


def _cmd_verify(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.law == "identities":
        rows = identity_sweep(
            psm, args.phi, args.z, _parse_n_list(args.n), args.reps, args.seed
        ).rows
    else:
        config = ExperimentConfig(
            law=_CLI_LAW[args.law],
            psm=psm,
            phi=args.phi,
            n_list=_parse_n_list(args.n),
            replicates=args.reps,
            master_seed=args.seed,
            z=args.z,
        )
        table = run_experiment(config, workers=args.workers)
        rows = table.rows
    _write_csv(
        out / "results.csv",
        ["n", "seed", "residual", "psi_or_bound"],
        rows,
    )
    print(str(out))
    return EXIT_OK


def _cmd_measure_distance(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    config = ExperimentConfig(
        law="mu_interval" if args.which == "mu" else "nu_interval",
        psm=psm,
        phi=args.phi,
        n_list=_parse_n_list(args.n),
        replicates=args.reps,
        master_seed=args.seed,
        grid_size=args.grid,
    )
    table = run_experiment(config, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "results.csv",
        ["n", "seed", "distance"],
        [(n, seed, value) for n, seed, value, _ in table.rows],
    )
    print(str(out))
    return EXIT_OK


def _cmd_rate(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    config = ExperimentConfig(
        law=_CLI_LAW[args.law],
        psm=psm,
        phi=args.phi,
        n_list=_parse_n_list(args.n),
        replicates=args.reps,
        master_seed=args.seed,
        z=args.z if _CLI_LAW[args.law] in ("bottom_trace", "top_trace", "entrywise") else None,
        grid_size=args.grid,
        out_dir=args.out,
    )
    table = run_experiment(config, workers=args.workers)
    fit = fit_rate(table)
    dom = dominance_check(table, epsilon=args.epsilon)
    summary = {
        "law": config.law,
        "rate": rate_fit_summary(fit, dom),
        "failures": len(table.failures),
    }
    run_dir = persist_run(config, {"results": table}, summary=summary)
    print(str(run_dir))
    return EXIT_OK


def _cmd_losses(args) -> int:
    psm = PopulationSpectralMeasure.load_csv(args.psm)
    config = ExperimentConfig(
        law="excess_loss",
        psm=psm,
        phi=args.phi,
        n_list=_parse_n_list(args.n),
        replicates=args.reps,
        master_seed=args.seed,
        out_dir=args.out,
    )
    table = loss_comparison(config, workers=args.workers)
    by_est: dict[str, dict[int, list[float]]] = {}
    for n, _seed, est, loss in table.rows:
        by_est.setdefault(est, {}).setdefault(int(n), []).append(float(loss))
    summary = {
        "mean_loss": {
            est: {str(n): float(np.mean(v)) for n, v in sorted(per_n.items())}
            for est, per_n in by_est.items()
        }
    }
    run_dir = persist_run(config, {"losses": table}, summary=summary)
    print(str(run_dir))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="lplaw", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=handler)
        p.add_argument("--config", help="flat key=value option file", dest="_config")
        return p

    p = add("solve-m", _cmd_solve_m, "solve the self-consistent equation at one z")
    p.add_argument("--z", type=parse_complex, required=True, help="RE+IMi")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True, help="tau,weight CSV")
    p.add_argument("--tol", type=float, default=1e-12)

    p = add("density", _cmd_density, "boundary densities on an E grid")
    p.add_argument("--psm", required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--emin", type=float, required=True)
    p.add_argument("--emax", type=float, required=True)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--out", required=True, help="CSV path; JSON sidecar beside it")

    p = add("simulate", _cmd_simulate, "sample S and write its spectrum")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--field", choices=("real", "complex"), default="real")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--full-eigensystem",
        action="store_true",
        help="also write the LPEIG1 binary sidecar",
    )

    p = add("shrink", _cmd_shrink, "nonlinear shrinkage of a spectrum CSV")
    p.add_argument("--spectrum", required=True, help="CSV with a lambda column")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--out", required=True)

    p = add("verify", _cmd_verify, "raw residual sweeps for one law")
    p.add_argument(
        "--law",
        required=True,
        choices=("bottom-trace", "top-trace", "entrywise", "identities"),
    )
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--n", required=True, help="comma-separated N list")
    p.add_argument("--z", type=parse_complex, default=complex(1, 1))
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("measure-distance", _cmd_measure_distance, "sup-interval distances")
    p.add_argument("--which", required=True, choices=("mu", "nu"))
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--n", required=True)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("rate", _cmd_rate, "full rate experiment with persistence")
    p.add_argument("--law", required=True, choices=tuple(_CLI_LAW))
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--n", default="64,128,256,512,1024")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--z", type=parse_complex, default=complex(1, 1))
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("losses", _cmd_losses, "per-estimator MV loss tables")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--psm", required=True)
    p.add_argument("--n", default="128,256,512,1024")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    return parser


def dispatch(argv: "list[str] | None" = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        _echo_config(args)
        return args.func(args)
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
