import json
import subprocess
import sys
from pathlib import Path

import pytest

from eocavity import cli
from eocavity.fixtures import shipped_decay_path

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    pairs = {}
    for line in out.splitlines():
        if " = " in line and not line.startswith("#"):
            k, v = line.split(" = ", 1)
            pairs[k.strip()] = v.split(" +/- ")[0].strip()
    return pairs


class TestReports:
    def test_cqed_cavity_a(self, capsys):
        code, out, _ = run(["cqed", "--config", "cavity-A.cfg"], capsys)
        assert code == 0
        r = kv(out)
        assert float(r["cooperativity"]) == pytest.approx(7.59, abs=0.005)
        assert float(r["beta"]) == pytest.approx(0.884, abs=0.001)
        assert float(r["tau_c_us"]) == pytest.approx(50.0, abs=0.1)
        assert float(r["branching_enhanced"]) == pytest.approx(0.913, abs=0.001)
        assert "91.5%" in out and "91.3%" in out
        assert out.startswith("# config = cavity-A (sha256:")

    def test_budget(self, capsys):
        code, out, _ = run(["budget", "--config", "cavity-A"], capsys)
        assert code == 0
        assert "85.05" in out and "40" in out

    def test_switch_from_protocol(self, tmp_path, capsys):
        out_csv = tmp_path / "p.csv"
        args = ["protocol", "--config", "cavity-A", "--t-detune-us", 60, "--t-wait-us", 100,
                "--detune-ghz", 54, "--duration-us", 400, "--out", out_csv]
        assert run(args, capsys)[0] == 0
        code, out, _ = run(["fit", "--model", "switch", "--in", out_csv, "--x-min", 50, "--x-max", 100], capsys)
        assert code == 0
        assert float(kv(out)["switching_time_us"]) == pytest.approx(5.0, rel=0.02)


class TestRoundTrips:
    def test_fixture_exp2(self, tmp_path, capsys):
        report = tmp_path / "fit.json"
        code, out, _ = run(["fit", "--model", "exp2", "--in", shipped_decay_path(), "--report", report], capsys)
        assert code == 0
        r = kv(out)
        assert float(r["tau_1_us"]) == pytest.approx(51, abs=4)
        assert float(r["tau_2_us"]) == pytest.approx(182, abs=40)
        data = json.loads(report.read_text())
        assert data["model"] == "exp2" and data["params"]["tau_1"] < data["params"]["tau_2"]

    def test_simulate_then_exp1(self, tmp_path, capsys):
        out_csv = tmp_path / "s.csv"
        code, _, _ = run(["simulate", "--config", "cavity-A", "--protocol", SAMPLES / "storage.protocol", "--out", out_csv], capsys)
        assert code == 0
        code, out, _ = run(["fit", "--model", "exp1", "--in", out_csv, "--x-min", 180], capsys)
        assert code == 0
        assert float(kv(out)["tau_1_us"]) == pytest.approx(50.08, abs=0.01)

    def test_simulate_to_stdout(self, capsys):
        code, out, _ = run(["simulate", "--config", "cavity-A", "--protocol", SAMPLES / "storage.protocol"], capsys)
        assert code == 0
        assert "t_us,delta_ghz,population,flux_cavity_per_s,flux_free_per_s" in out

    def test_transmission_then_lorentzian(self, tmp_path, capsys):
        out_csv = tmp_path / "t.csv"
        assert run(["transmission", "--config", "cavity-A", "--bias-v", 15, "--out", out_csv], capsys)[0] == 0
        code, out, _ = run(["fit", "--model", "lorentzian", "--in", out_csv], capsys)
        r = kv(out)
        assert code == 0
        assert float(r["center_ghz"]) == pytest.approx(4.05, abs=1e-4)
        assert float(r["fwhm_mhz"]) == pytest.approx(305.91e6 / 79_833, rel=1e-3)

    def test_hole_then_lorentzian(self, tmp_path, capsys):
        out_csv = tmp_path / "h.csv"
        code, out, _ = run(["synth-hole", "--config", "cavity-A", "--gamma-h-mhz", 48.5, "--out", out_csv], capsys)
        assert code == 0 and float(kv(out)["hole_fwhm_mhz"]) == pytest.approx(97.05, abs=0.01)
        code, out, _ = run(["fit", "--model", "lorentzian", "--in", out_csv], capsys)
        assert code == 0
        assert float(kv(out)["fwhm_mhz"]) == pytest.approx(97.0, rel=0.005)

    def test_synth_ple_then_fits(self, tmp_path, capsys):
        out_dir = tmp_path / "ple"
        args = ["synth-ple", "--config", "cavity-B.cfg", "--plan", SAMPLES / "tail140.plan", "--seed", 42, "--out", out_dir]
        assert run(args, capsys)[0] == 0
        files = sorted(out_dir.iterdir())
        assert [f.name for f in files] == [f"ple_{k:03d}.csv" for k in range(4)]
        assert "setpoint_ghz=142.7" in files[1].read_text().splitlines()[0]
        code, out, _ = run(["fit", "--model", "peaks", "--in", files[0], "--min-separation-mhz", 247], capsys)
        assert code == 0 and int(kv(out)["n_peaks"]) > 0
        code, out, _ = run(["fit", "--model", "lorentzian", "--poisson", "--in", files[0]], capsys)
        assert code == 0


class TestDeterminism:
    def test_synth_ple_byte_identical(self, tmp_path, capsys):
        outs = []
        for name in ("a", "b"):
            args = ["synth-ple", "--config", "cavity-B", "--plan", SAMPLES / "tail140.plan", "--seed", 42, "--out", tmp_path / name]
            code, stdout, _ = run(args, capsys)
            assert code == 0
            outs.append(({p.name: p.read_bytes() for p in (tmp_path / name).iterdir()}, stdout.replace(str(tmp_path / name), "")))
        assert outs[0] == outs[1]

    def test_seed_changes_output(self, tmp_path, capsys):
        for seed in (1, 2):
            run(["synth-ple", "--config", "cavity-B", "--plan", SAMPLES / "tail140.plan", "--seed", seed, "--out", tmp_path / str(seed)], capsys)
        assert (tmp_path / "1" / "ple_000.csv").read_bytes() != (tmp_path / "2" / "ple_000.csv").read_bytes()

    def test_no_noise_writes_rates(self, tmp_path, capsys):
        args = ["synth-ple", "--config", "cavity-B", "--plan", SAMPLES / "tail140.plan", "--seed", 1, "--no-noise", "--out", tmp_path]
        assert run(args, capsys)[0] == 0
        assert (tmp_path / "ple_000.csv").read_text().splitlines()[1] == "f_ghz,rate_per_s"


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["frobnicate"],
            ["cqed"],
            ["cqed", "--config", "cavity-A", "--bogus"],
            ["cqed", "--config", "no-such-device"],
            ["fit", "--model", "exp2", "--in", "/nonexistent.csv"],
            ["fit", "--model", "cubic", "--in", "x.csv"],
        ],
    )
    def test_usage_and_validation_errors(self, argv, capsys):
        code, _, err = run(argv, capsys)
        assert code == 2
        assert err.strip()

    def test_internal_error(self, monkeypatch, capsys):
        def boom(args):
            raise RuntimeError("unexpected")

        monkeypatch.setattr(cli, "cmd_budget", boom)
        code, _, err = run(["budget", "--config", "cavity-A"], capsys)
        assert code == 1 and "internal error" in err

    def test_no_partial_outputs(self, tmp_path, capsys):
        bad_plan = tmp_path / "far.plan"
        bad_plan.write_text(
            (SAMPLES / "tail140.plan").read_text().replace("140, 142.7, 145.4, 148.1", "140, 142.7, 260")
        )
        cases = [
            ["transmission", "--config", "cavity-A", "--bias-v", 400, "--out", tmp_path / "t.csv"],
            ["protocol", "--config", "cavity-A", "--t-detune-us", 60, "--t-wait-us", 100, "--v-off", 350, "--out", tmp_path / "p.csv"],
            ["synth-ple", "--config", "cavity-B", "--plan", bad_plan, "--seed", 1, "--out", tmp_path / "ple"],
            ["synth-hole", "--config", "cavity-A", "--saturation", -1, "--out", tmp_path / "h.csv"],
        ]
        for argv in cases:
            assert run(argv, capsys)[0] == 2
        assert sorted(p.name for p in tmp_path.iterdir()) == ["far.plan"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eocavity", "cqed", "--config", "cavity-B"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "cooperativity = 5.9" in proc.stdout
