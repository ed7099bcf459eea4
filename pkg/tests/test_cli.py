import csv
import json

import numpy as np
import pytest

from lplaw.cli import dispatch, parse_complex
from lplaw import DomainError


@pytest.fixture()
def identity_csv(tmp_path):
    p = tmp_path / "identity.csv"
    p.write_text("tau,weight\n1.0,1.0\n")
    return str(p)


@pytest.fixture()
def two_atom_csv(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("tau,weight\n1.0,0.5\n3.0,0.5\n")
    return str(p)


def run_cli(capsys, *argv):
    code = dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParseComplex:
    def test_forms(self):
        assert parse_complex("1+1i") == 1 + 1j
        assert parse_complex("0+1i") == 1j
        assert parse_complex("-1.5-0.25i") == -1.5 - 0.25j
        assert parse_complex("1e-2+3i") == 0.01 + 3j

    def test_rejects_garbage(self):
        for bad in ("1+2j", "i", "1 + 2i", "2i"):
            with pytest.raises(DomainError):
                parse_complex(bad)


class TestDispatch:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            dispatch(["--help"])
        assert exc.value.code == 0
        assert "solve-m" in capsys.readouterr().out

    def test_unknown_flag_exits_one(self, capsys, identity_csv):
        with pytest.raises(SystemExit) as exc:
            dispatch(["solve-m", "--z", "0+1i", "--phi", "0.5", "--psm", identity_csv, "--bogus", "1"])
        assert exc.value.code == 1

    def test_unknown_subcommand_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            dispatch(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_file_is_domain_error(self, capsys):
        code, _, err = run_cli(
            capsys, "solve-m", "--z", "0+1i", "--phi", "0.5", "--psm", "nope.csv"
        )
        assert code == 1


class TestSolveM:
    def test_known_value(self, capsys, identity_csv):
        code, out, err = run_cli(
            capsys, "solve-m", "--z", "0+1i", "--phi", "0.5", "--psm", identity_csv
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["m"]["re"] == pytest.approx(0.193030, abs=1e-4)
        assert payload["m"]["im"] == pytest.approx(0.791102, abs=1e-4)
        assert payload["residual"] <= 1e-12
        assert "config:" in err  # resolved config echoed

    def test_config_file_with_flag_override(self, capsys, identity_csv, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text(f"z = 0+1i\nphi = 0.25  # overridden below\npsm = {identity_csv}\n")
        code, out, _ = run_cli(
            capsys, "solve-m", "--config", str(cfg), "--phi", "0.5"
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["m"]["im"] == pytest.approx(0.791102, abs=1e-4)

    def test_config_file_unknown_key_rejected(self, capsys, identity_csv, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("zz = 1+1i\n")
        with pytest.raises(SystemExit) as exc:
            dispatch(["solve-m", "--config", str(cfg), "--z", "0+1i", "--phi", "0.5", "--psm", identity_csv])
        assert exc.value.code == 1


class TestDensity:
    def test_csv_and_sidecar(self, capsys, identity_csv, tmp_path):
        out_csv = tmp_path / "density.csv"
        code, out, _ = run_cli(
            capsys,
            "density", "--psm", identity_csv, "--phi", "0.5",
            "--emin", "0.01", "--emax", "3.5", "--points", "120",
            "--out", str(out_csv),
        )
        assert code == 0
        assert str(out_csv) in out
        with out_csv.open() as fh:
            rows = list(csv.DictReader(fh))
        assert set(rows[0]) == {"E", "w", "hilbert_w", "w_S"}
        sidecar = json.loads(out_csv.with_suffix(".json").read_text())
        (lo, hi), = sidecar["edges"]
        assert lo == pytest.approx((1 - np.sqrt(0.5)) ** 2, abs=1e-3)
        assert hi == pytest.approx((1 + np.sqrt(0.5)) ** 2, abs=1e-3)
        assert sidecar["atom_at_zero"] == pytest.approx(0.5)


class TestSimulate:
    def test_spectrum_and_eigensystem(self, capsys, identity_csv, tmp_path):
        out = tmp_path / "sim"
        code, stdout, _ = run_cli(
            capsys,
            "simulate", "--phi", "0.5", "--n", "64", "--psm", identity_csv,
            "--seed", "3", "--out", str(out), "--full-eigensystem",
        )
        assert code == 0
        lams = [float(r["lambda"]) for r in csv.DictReader((out / "spectrum.csv").open())]
        assert len(lams) == 32
        assert lams == sorted(lams, reverse=True)
        blob = (out / "eigensystem.bin").read_bytes()
        assert blob[:6] == b"LPEIG1"
        header = np.frombuffer(blob[6:30], dtype="<u8")
        assert list(header) == [32, 64, 3]
        lam_bin = np.frombuffer(blob[30 : 30 + 32 * 8], dtype="<f8")
        np.testing.assert_allclose(lam_bin, lams, atol=1e-15)
        U = np.frombuffer(blob[30 + 32 * 8 :], dtype="<f8").reshape(32, 32)
        np.testing.assert_allclose(U.T @ U, np.eye(32), atol=1e-10)

    def test_determinism_across_runs(self, capsys, identity_csv, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code, _, _ = run_cli(
                capsys,
                "simulate", "--phi", "0.5", "--n", "32", "--psm", identity_csv,
                "--seed", "9", "--out", str(out),
            )
            assert code == 0
        assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()

    def test_lp_seed_env_default(self, capsys, identity_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("LP_SEED", "9")
        out = tmp_path / "env"
        code, _, _ = run_cli(
            capsys,
            "simulate", "--phi", "0.5", "--n", "32", "--psm", identity_csv,
            "--out", str(out),
        )
        assert code == 0
        explicit = tmp_path / "explicit"
        run_cli(
            capsys,
            "simulate", "--phi", "0.5", "--n", "32", "--psm", identity_csv,
            "--seed", "9", "--out", str(explicit),
        )
        assert (out / "spectrum.csv").read_bytes() == (explicit / "spectrum.csv").read_bytes()


class TestShrink:
    def test_identity_spectrum_maps_near_one(self, capsys, identity_csv, tmp_path):
        sim = tmp_path / "sim"
        run_cli(
            capsys,
            "simulate", "--phi", "0.5", "--n", "256", "--psm", identity_csv,
            "--seed", "1", "--out", str(sim),
        )
        out = tmp_path / "shrunk.csv"
        code, stdout, _ = run_cli(
            capsys,
            "shrink", "--spectrum", str(sim / "spectrum.csv"), "--phi", "0.5",
            "--psm", identity_csv, "--out", str(out),
        )
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        deltas = np.array([float(r["delta"]) for r in rows])
        assert np.all(np.abs(deltas - 1.0) < 0.2)
        meta = json.loads(out.with_suffix(".json").read_text())
        assert meta["trace_in"] > 0
        assert meta["trace_out"] == pytest.approx(np.sum(deltas) * 1.0, rel=1e-12)
        assert meta["clamped_count"] >= 0


class TestVerifyAndRate:
    def test_verify_bottom_trace_schema(self, capsys, identity_csv, tmp_path):
        out = tmp_path / "verify"
        code, _, _ = run_cli(
            capsys,
            "verify", "--law", "bottom-trace", "--phi", "0.5", "--psm", identity_csv,
            "--n", "32,64", "--z", "1+1i", "--reps", "2", "--seed", "5",
            "--out", str(out),
        )
        assert code == 0
        rows = list(csv.DictReader((out / "results.csv").open()))
        assert set(rows[0]) == {"n", "seed", "residual", "psi_or_bound"}
        assert len(rows) == 4

    def test_verify_identities(self, capsys, identity_csv, tmp_path):
        out = tmp_path / "ids"
        code, _, _ = run_cli(
            capsys,
            "verify", "--law", "identities", "--phi", "0.5", "--psm", identity_csv,
            "--n", "16", "--reps", "2", "--seed", "5", "--out", str(out),
        )
        assert code == 0
        rows = list(csv.DictReader((out / "results.csv").open()))
        assert all(float(r["residual"]) <= 1e-9 for r in rows)

    def test_rate_run_is_reproducible(self, capsys, identity_csv, tmp_path):
        args = [
            "rate", "--law", "bottom-trace", "--phi", "0.5", "--psm", identity_csv,
            "--n", "32,64,128", "--reps", "5", "--seed", "7",
        ]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        code1, _, _ = run_cli(capsys, *args, "--out", str(out1))
        code2, _, _ = run_cli(capsys, *args, "--out", str(out2))
        assert code1 == code2 == 0
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
        summary = json.loads((out1 / "summary.json").read_text())
        assert "rate" in summary and "slope" in summary["rate"]

    def test_measure_distance_schema(self, capsys, two_atom_csv, tmp_path):
        out = tmp_path / "dist"
        code, _, _ = run_cli(
            capsys,
            "measure-distance", "--which", "mu", "--phi", "0.5", "--psm", two_atom_csv,
            "--n", "32,64", "--reps", "2", "--grid", "100", "--seed", "1",
            "--out", str(out),
        )
        assert code == 0
        rows = list(csv.DictReader((out / "results.csv").open()))
        assert set(rows[0]) == {"n", "seed", "distance"}

    def test_losses_run(self, capsys, two_atom_csv, tmp_path):
        out = tmp_path / "losses"
        code, _, _ = run_cli(
            capsys,
            "losses", "--phi", "0.5", "--psm", two_atom_csv,
            "--n", "48,64", "--reps", "2", "--seed", "2", "--out", str(out),
        )
        assert code == 0
        rows = list(csv.DictReader((out / "losses.csv").open()))
        assert set(rows[0]) == {"n", "seed", "estimator", "mv_loss"}
        assert {r["estimator"] for r in rows} == {"sample", "scalar", "delta", "oracle"}
