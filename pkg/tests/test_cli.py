"""End-to-end CLI tests: every subcommand against temp directories."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from scaleladder.cli import main
from scaleladder.config import ConfigError, resolve_experiment
from scaleladder.ladder import tanh_psi_closed_form
from scaleladder.scales import load_dataset
from scaleladder.stepnet import model_to_json_dict, save_model

REPO = Path(__file__).resolve().parent.parent


def planted_config(out, **overrides):
    cfg = json.loads((REPO / "configs" / "planted_small.json").read_text())
    cfg["out"]["directory"] = str(out)
    cfg["train"]["n"] = overrides.pop("n", 80)
    for key, value in overrides.items():
        section, name = key.split("__")
        cfg[section][name] = value
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


class TestConfigResolution:
    def test_missing_required_key(self, tmp_path):
        path = write_config(tmp_path, {"ladder": {"epsilon": 0.25, "beta": 2.0}})
        assert main(["ladder", "--config", str(path)]) == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = planted_config(tmp_path / "o")
        cfg["model"]["mystery"] = 1
        assert main(["ladder", "--config", str(write_config(tmp_path, cfg))]) == 2

    def test_planted_requires_numeric_base_slope(self, tmp_path):
        cfg = planted_config(tmp_path / "o", model__base_slope="f-prime-0")
        with pytest.raises(ConfigError):
            resolve_experiment(json.loads(json.dumps(cfg)))

    def test_seed_and_out_overrides(self, tmp_path):
        cfg = planted_config(tmp_path / "a")
        exp = resolve_experiment(cfg, seed=99, out_dir=str(tmp_path / "b"))
        assert exp.seed == 99
        assert exp.out_dir == tmp_path / "b"
        assert exp.echo["train"]["seed"] == 99

    def test_resolved_echo_carries_derived_quantities(self, tmp_path):
        exp = resolve_experiment(planted_config(tmp_path / "o"))
        resolved = exp.echo["resolved"]
        assert resolved["set_sizes"] == [129, 129, 129]
        assert len(resolved["lambda_bar"]) == 3
        assert resolved["gamma"][-1] == 1.0

    def test_tanh_mode_autoresolves_constants(self):
        cfg = json.loads((REPO / "configs" / "tanh_transfer.json").read_text())
        exp = resolve_experiment(cfg)
        assert exp.c1 == pytest.approx(3 * exp.bundle.m1 * exp.bundle.m2)
        assert exp.template.base_slope == pytest.approx(1.0)  # tanh'(0)
        assert exp.slack > 0

    def test_explicit_lambda_override(self, tmp_path):
        cfg = planted_config(tmp_path / "o", train__lambda=[0.5, 0.3, 0.1])
        exp = resolve_experiment(cfg)
        assert exp.schedule.lambda_bar == (0.5, 0.3, 0.1)


class TestLadderCommand:
    def test_schedules_csv(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, planted_config(out))
        assert main(["ladder", "--config", str(path)]) == 0
        header, rows = read_csv(out / "schedules.csv")
        assert header == ["k", "gamma_k", "rho_k", "lambda_bar_k", "lambda_k", "W_k_size"]
        assert len(rows) == 3
        gammas = [float(r[1]) for r in rows]
        assert gammas[-1] == 1.0
        for a, b in zip(gammas, gammas[1:]):
            assert b / a == pytest.approx(2.0, rel=1e-12)
        assert [int(r[5]) for r in rows] == [129, 129, 129]
        assert (out / "schedules.png").exists()
        assert (out / "run_manifest.json").exists()

    def test_enumeration_cap_exit_code(self, tmp_path):
        out = tmp_path / "out"
        cfg = planted_config(out, model__tau=8, model__eta=[0.001, 0.001, 0.001])
        path = write_config(tmp_path, cfg)
        assert main(["ladder", "--config", str(path)]) == 3


class TestDecomposeCommand:
    def test_outputs_and_closed_form(self, tmp_path):
        out = tmp_path / "fig"
        cfg = json.loads((REPO / "configs" / "figure1.json").read_text())
        cfg["out"]["directory"] = str(out)
        path = write_config(tmp_path, cfg)
        assert main(["decompose", "--config", str(path), "--points", "50"]) == 0
        header, rows = read_csv(out / "psi_curves.csv")
        assert header == ["k", "x", "psi"]
        assert len(rows) == 5 * 50
        gamma_prev = {k: 2.0 ** (k - 6) for k in range(1, 6)}
        for k_str, x_str, psi_str in rows[::37]:
            k, x, val = int(k_str), float(x_str), float(psi_str)
            assert val == pytest.approx(tanh_psi_closed_form(gamma_prev[k], x), abs=1e-10)
        report = json.loads((out / "rung_certificates.json").read_text())
        assert report["all_pass"]
        assert len(report["levels"]) == 5
        assert (out / "psi_curves.png").exists()

    def test_requires_tanh_mode(self, tmp_path):
        cfg = planted_config(tmp_path / "o")
        path = write_config(tmp_path, cfg)
        assert main(["decompose", "--config", str(path)]) == 2


class TestSampleCommand:
    def test_dataset_round_trip(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, planted_config(out))
        assert main(["sample", "--config", str(path)]) == 0
        dataset, law = load_dataset(out / "dataset.csv", out / "manifest.json")
        assert dataset.n == 80
        assert law.alpha == 1.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest) == {"alpha", "epsilon", "beta", "d", "n", "seed", "mode"}


class TestTrainCommand:
    def test_same_seed_byte_identical_model(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        path = write_config(tmp_path, planted_config(out_a))
        assert main(["train", "--config", str(path)]) == 0
        assert main(["train", "--config", str(path), "--out", str(out_b)]) == 0
        assert (out_a / "model.json").read_bytes() == (out_b / "model.json").read_bytes()
        assert (out_a / "trace.json").exists()
        assert (out_a / "train_trace.png").exists()

    def test_stop_after_and_resume_bit_exact(self, tmp_path):
        full_out, part_out = tmp_path / "full", tmp_path / "part"
        path = write_config(tmp_path, planted_config(full_out))
        assert main(["train", "--config", str(path)]) == 0
        assert main(["train", "--config", str(path), "--out", str(part_out), "--stop-after", "2"]) == 0
        assert not (part_out / "model.json").exists()
        trace = json.loads((part_out / "trace.json").read_text())
        assert len(trace["levels"]) == 2
        resume_out = tmp_path / "resumed"
        assert (
            main(
                [
                    "train",
                    "--config",
                    str(path),
                    "--out",
                    str(resume_out),
                    "--resume",
                    str(part_out / "trace.json"),
                ]
            )
            == 0
        )
        assert (resume_out / "model.json").read_bytes() == (full_out / "model.json").read_bytes()

    def test_trace_matches_schedule(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, planted_config(out))
        main(["train", "--config", str(path)])
        trace = json.loads((out / "trace.json").read_text())
        exp = resolve_experiment(planted_config(out))
        for level, entry in enumerate(trace["levels"], start=1):
            assert entry["level"] == level
            assert entry["lambda"] == pytest.approx(exp.schedule.lambda_cum[level - 1])
            assert entry["set_size"] == 129
            assert entry["min_loss"] <= entry["chosen_loss"]


class TestEvaluateCommand:
    def test_reference_model_scores_zero(self, tmp_path):
        out = tmp_path / "out"
        cfg = planted_config(out)
        path = write_config(tmp_path, cfg)
        exp = resolve_experiment(cfg)
        out.mkdir(parents=True)
        save_model(exp.reference, out / "model.json")
        assert main(["evaluate", "--config", str(path)]) == 0
        report = json.loads((out / "risk_report.json").read_text())
        assert abs(report["statistical_risk"]["value"]) <= 1e-10
        assert abs(report["chained_risk"]["value"]) <= 1e-10
        from scaleladder.risk import lambda_ratio

        assert report["lambda_ratio"] == pytest.approx(lambda_ratio(8.0, 3), rel=1e-12)
        for key in ("chained_optimized", "erm", "chained_plain", "chained_scale_weighted"):
            assert key in report["bounds"]
        assert (out / "risk_report.png").exists()

    def test_train_then_evaluate_with_sweep(self, tmp_path):
        out = tmp_path / "out"
        cfg = json.loads((REPO / "configs" / "tanh_transfer.json").read_text())
        cfg["out"]["directory"] = str(out)
        cfg["train"]["n"] = 60
        path = write_config(tmp_path, cfg)
        assert main(["train", "--config", str(path)]) == 0
        assert main(["evaluate", "--config", str(path)]) == 0
        report = json.loads((out / "risk_report.json").read_text())
        assert report["transfer_check"] is not None
        assert report["bounds"]["powerlaw_factor"] > 0
        header, rows = read_csv(out / "bounds_sweep.csv")
        assert header == ["n", "d", "beta", "alpha", "chained_opt", "erm", "risk_bound", "lambda_ratio"]
        assert [int(r[0]) for r in rows] == [100, 400, 1600, 6400]
        assert float(rows[1][4]) == pytest.approx(float(rows[0][4]) / 2.0, rel=1e-9)
        assert (out / "bounds_sweep.png").exists()

    def test_ladder_mismatch_rejected(self, tmp_path):
        out = tmp_path / "out"
        cfg = planted_config(out)
        path = write_config(tmp_path, cfg)
        exp = resolve_experiment(cfg)
        out.mkdir(parents=True)
        other = dict(model_to_json_dict(exp.reference))
        other["ladder"]["epsilon"] = 0.125
        (out / "model.json").write_text(json.dumps(other))
        assert main(["evaluate", "--config", str(path)]) == 2


class TestVerifyCommand:
    def test_entropy_suite_passes(self, tmp_path, capsys):
        assert main(["verify", "--suite", "entropy", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["pass"]
        assert all(check["pass"] for check in report["checks"])
        captured = capsys.readouterr()
        assert "[pass]" in captured.out

    def test_bounds_suite_passes(self, tmp_path):
        assert main(["verify", "--suite", "bounds", "--out", str(tmp_path)]) == 0

    def test_unknown_suite_rejected(self):
        with pytest.raises(SystemExit):
            main(["verify", "--suite", "bogus"])


class TestRatioCommand:
    def test_value_printed_and_saved(self, tmp_path, capsys):
        assert main(["ratio", "--rbar", "10", "--d", "20", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "0.264" in out
        data = json.loads((tmp_path / "ratio.json").read_text())
        assert data["lambda_ratio"] == pytest.approx(0.2648, abs=5e-4)


class TestConsoleEntryPoint:
    def test_installed_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "scaleladder.cli"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0  # no subcommand given
        proc = subprocess.run(
            [sys.executable, "-c", "import scaleladder.cli as c; raise SystemExit(c.main(['ratio','--rbar','10','--d','20']))"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "0.264" in proc.stdout
