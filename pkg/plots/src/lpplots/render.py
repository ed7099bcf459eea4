"""Render figures from run-directory artifacts.

Four figure kinds, one per artifact family:

* rate     -- results.csv (n, seed, value, bound); log-log medians with the
              fitted slope annotated (from summary.json when present,
              refitted from the medians otherwise)
* density  -- density.csv (E, w, hilbert_w, w_S), histogram overlay from
              spectrum.csv when available
* delta    -- delta.csv (lambda, delta)
* losses   -- losses.csv (n, seed, estimator, mv_loss); per-estimator
              median curves

Rendering is read-only and deterministic: fixed style, no timestamps in
the output, stable SVG ids.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "SchemaError", "render"]

KINDS = ("rate", "density", "delta", "losses")

plt.rcParams["svg.hashsalt"] = "lplaw-plots"


class SchemaError(ValueError):
    """An artifact is missing, empty, or lacks a required column."""


@dataclass(frozen=True)
class FigureSpec:
    run_dir: Path
    kind: str
    out_path: Path
    title: "str | None" = None
    xlabel: "str | None" = None
    ylabel: "str | None" = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "run_dir", Path(self.run_dir))
        object.__setattr__(self, "out_path", Path(self.out_path))


def _read_table(path: Path, required: tuple[str, ...]) -> dict[str, list[str]]:
    if not path.exists():
        raise SchemaError(f"{path} not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or ()
        for col in required:
            if col not in names:
                raise SchemaError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: table is empty")
    return {col: [row[col] for row in rows] for col in names}


def _floats(table: dict, col: str, path: Path) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in table[col]])
    except ValueError as exc:
        raise SchemaError(f"{path}: column {col!r} is not numeric: {exc}") from exc


def _medians_by_n(n: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ns = np.unique(n)
    med = np.asarray([np.median(v[n == k]) for k in ns])
    return ns, med


def _fit_slope(ns: np.ndarray, med: np.ndarray) -> float:
    keep = med > 0
    x = np.log(ns[keep].astype(float))
    y = np.log(med[keep])
    if x.size < 2:
        raise SchemaError("need at least two N with positive medians to fit a slope")
    return float(np.polyfit(x, y, 1)[0])


def _save(fig, spec: FigureSpec) -> Path:
    spec.out_path.parent.mkdir(parents=True, exist_ok=True)
    suffix = spec.out_path.suffix.lower()
    metadata = {"Date": None} if suffix == ".svg" else None
    fig.savefig(spec.out_path, metadata=metadata)
    plt.close(fig)
    return spec.out_path


def _render_rate(spec: FigureSpec) -> Path:
    path = spec.run_dir / "results.csv"
    table = _read_table(path, ("n", "seed", "value", "bound"))
    n = _floats(table, "n", path)
    value = _floats(table, "value", path)
    ns, med = _medians_by_n(n, value)

    slope = None
    summary_path = spec.run_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())
        slope = summary.get("rate", {}).get("slope")
    if slope is None:
        slope = _fit_slope(ns, med)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(n, value, ".", color="#a0b7d0", markersize=3, alpha=0.5, label="replicates")
    ax.loglog(ns, med, "o-", color="#1f4e79", label="median")
    anchor = med[0] if med[0] > 0 else 1.0
    ax.loglog(
        ns,
        anchor * (ns / ns[0]) ** slope,
        "--",
        color="#c44e52",
        label=f"slope = {slope:.2f}",
    )
    ax.set_xlabel(spec.xlabel or "N")
    ax.set_ylabel(spec.ylabel or "residual")
    ax.set_title(spec.title or "convergence rate")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, spec)


def _render_density(spec: FigureSpec) -> Path:
    path = spec.run_dir / "density.csv"
    table = _read_table(path, ("E", "w", "hilbert_w", "w_S"))
    E = _floats(table, "E", path)
    w_S = _floats(table, "w_S", path)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    spectrum = spec.run_dir / "spectrum.csv"
    if spectrum.exists():
        stable = _read_table(spectrum, ("lambda",))
        lams = _floats(stable, "lambda", spectrum)
        ax.hist(
            lams,
            bins=40,
            density=True,
            color="#f0c674",
            edgecolor="#c8a046",
            label="sample spectrum",
        )
    ax.plot(E, w_S, color="#1f4e79", linewidth=2, label="limit density")
    ax.set_xlabel(spec.xlabel or "eigenvalue")
    ax.set_ylabel(spec.ylabel or "density")
    ax.set_title(spec.title or "spectral density")
    ax.legend()
    return _save(fig, spec)


def _render_delta(spec: FigureSpec) -> Path:
    path = spec.run_dir / "delta.csv"
    table = _read_table(path, ("lambda", "delta"))
    lams = _floats(table, "lambda", path)
    deltas = _floats(table, "delta", path)
    order = np.argsort(lams)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(lams[order], deltas[order], color="#1f4e79", linewidth=2, label="shrinkage")
    ax.plot(lams[order], lams[order], "--", color="#999999", linewidth=1, label="no shrinkage")
    ax.set_xlabel(spec.xlabel or "sample eigenvalue")
    ax.set_ylabel(spec.ylabel or "shrunk eigenvalue")
    ax.set_title(spec.title or "nonlinear shrinkage")
    ax.legend()
    return _save(fig, spec)


def _render_losses(spec: FigureSpec) -> Path:
    path = spec.run_dir / "losses.csv"
    table = _read_table(path, ("n", "seed", "estimator", "mv_loss"))
    n = _floats(table, "n", path)
    loss = _floats(table, "mv_loss", path)
    estimators = table["estimator"]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    palette = {"sample": "#c44e52", "scalar": "#937860", "delta": "#1f4e79", "oracle": "#55a868"}
    for name in sorted(set(estimators)):
        mask = np.asarray([e == name for e in estimators])
        ns, med = _medians_by_n(n[mask], loss[mask])
        ax.loglog(ns, med, "o-", color=palette.get(name, "#333333"), label=name)
    ax.set_xlabel(spec.xlabel or "N")
    ax.set_ylabel(spec.ylabel or "minimum-variance loss")
    ax.set_title(spec.title or "estimator comparison")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, spec)


_RENDERERS = {
    "rate": _render_rate,
    "density": _render_density,
    "delta": _render_delta,
    "losses": _render_losses,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure kind from a run directory to an image file."""
    return _RENDERERS[spec.kind](spec)
