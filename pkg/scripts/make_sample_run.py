#!/usr/bin/env python3
"""Regenerate plots/sample_run, the checked-in fixture for the plot package.

Drives the installed `lplaw` CLI only, so the fixture reflects exactly what
the documented external interfaces produce.
"""

from __future__ import annotations

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SAMPLE = ROOT / "plots" / "sample_run"


def run(*argv: str) -> None:
    print("+", " ".join(argv))
    subprocess.run(argv, check=True, cwd=ROOT)


def main() -> None:
    if SAMPLE.exists():
        shutil.rmtree(SAMPLE)
    SAMPLE.mkdir(parents=True)

    with tempfile.TemporaryDirectory() as tmp:
        tmpdir = Path(tmp)
        psm = tmpdir / "identity.csv"
        psm.write_text("tau,weight\n1.0,1.0\n")

        run(
            "lplaw", "rate", "--law", "bottom-trace", "--phi", "0.5",
            "--psm", str(psm), "--n", "32,64,128", "--reps", "8",
            "--seed", "21", "--out", str(SAMPLE),
        )
        losses_dir = tmpdir / "losses"
        run(
            "lplaw", "losses", "--phi", "0.5", "--psm", str(psm),
            "--n", "48,96", "--reps", "4", "--seed", "22",
            "--out", str(losses_dir),
        )
        shutil.copy(losses_dir / "losses.csv", SAMPLE / "losses.csv")
        run(
            "lplaw", "density", "--psm", str(psm), "--phi", "0.5",
            "--emin", "0.01", "--emax", "3.4", "--points", "200",
            "--out", str(SAMPLE / "density.csv"),
        )
        sim_dir = tmpdir / "sim"
        run(
            "lplaw", "simulate", "--phi", "0.5", "--n", "256",
            "--psm", str(psm), "--seed", "23", "--out", str(sim_dir),
        )
        shutil.copy(sim_dir / "spectrum.csv", SAMPLE / "spectrum.csv")
        run(
            "lplaw", "shrink", "--spectrum", str(SAMPLE / "spectrum.csv"),
            "--phi", "0.5", "--psm", str(psm),
            "--out", str(SAMPLE / "delta.csv"),
        )
    print(f"sample run written to {SAMPLE}")


if __name__ == "__main__":
    sys.exit(main())
