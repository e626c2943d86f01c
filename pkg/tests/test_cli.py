"""End-to-end command behavior: exits, files, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from legsurf import heisenberg as hs


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "legsurf.cli", *args], capture_output=True, text=True
    )


def write_clifford_grid(path, n=32):
    h = 2 * np.pi / n
    s = np.arange(n) * h
    ss, tt = np.meshgrid(s, s, indexing="ij")
    u = np.stack([np.cos(ss), np.sin(ss), np.cos(tt), np.sin(tt)], axis=-1)
    grid = hs.LagrangianSampleGrid(n, n, h, h, u, (True, True))
    with open(path, "w") as f:
        json.dump(grid.to_json(), f)


class TestVerifyIdentities:
    def test_default_seed_passes(self, tmp_path):
        r = run_cli("verify-identities", "--out", str(tmp_path))
        assert r.returncode == 0
        report = json.loads((tmp_path / "identities.json").read_text())
        assert len(report["checks"]) >= 12
        assert report["all_passed"]
        assert "config_hash" in report and "version" in report

    def test_injected_bug_names_check(self, tmp_path):
        r = run_cli("verify-identities", "--out", str(tmp_path), "--inject-bug")
        assert r.returncode == 3
        report = json.loads((tmp_path / "identities.json").read_text())
        failing = [c["name"] for c in report["checks"] if not c["passed"]]
        assert "jh_involution" in failing

    def test_seed_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("verify-identities", "--seed", "7", "--out", str(a)).returncode == 0
        assert run_cli("verify-identities", "--seed", "7", "--out", str(b)).returncode == 0
        assert (a / "identities.json").read_bytes() == (b / "identities.json").read_bytes()


class TestLift:
    def test_clifford_grid(self, tmp_path):
        grid_path = tmp_path / "grid.json"
        write_clifford_grid(grid_path, n=64)
        r = run_cli("lift", "--grid", str(grid_path), "--out", str(tmp_path))
        assert r.returncode == 0
        payload = json.loads((tmp_path / "lift.json").read_text())
        # trapezoidal periods are n sin(2 pi / n): O(h^2) below 2 pi
        assert payload["periods"][0] == pytest.approx(2 * np.pi, rel=2e-3)
        assert payload["periods"][1] == pytest.approx(2 * np.pi, rel=2e-3)

    def test_constant_map(self, tmp_path):
        grid = hs.LagrangianSampleGrid(
            6, 6, 0.1, 0.1, np.tile(np.array([1.0, 0, 0, 0]), (6, 6, 1))
        )
        grid_path = tmp_path / "grid.json"
        with open(grid_path, "w") as f:
            json.dump(grid.to_json(), f)
        r = run_cli("lift", "--grid", str(grid_path), "--out", str(tmp_path))
        assert r.returncode == 0
        payload = json.loads((tmp_path / "lift.json").read_text())
        assert max(abs(x) for x in payload["phi"]) == 0.0

    def test_non_lagrangian_fails(self, tmp_path):
        lin = np.linspace(0, 1, 8)
        ss, tt = np.meshgrid(lin, lin, indexing="ij")
        grid = hs.LagrangianSampleGrid(
            8, 8, lin[1], lin[1], np.stack([ss, tt, 0 * ss, 0 * tt], axis=-1)
        )
        grid_path = tmp_path / "grid.json"
        with open(grid_path, "w") as f:
            json.dump(grid.to_json(), f)
        r = run_cli("lift", "--grid", str(grid_path), "--out", str(tmp_path))
        assert r.returncode == 2
        assert "cell" in r.stdout


class TestConfigValidation:
    def test_unknown_keys_rejected(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text('{"seed": 1, "bogus_key": true}')
        r = run_cli("verify-identities", "--config", str(config), "--out", str(tmp_path))
        assert r.returncode == 2
        assert "bogus_key" in r.stderr

    def test_missing_required_rejected(self, tmp_path):
        r = run_cli("energy", "--out", str(tmp_path))
        assert r.returncode == 2


class TestDescendCommand:
    def test_end_to_end(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(
            json.dumps(
                {
                    "family": "perturbed_clifford",
                    "resolution": 12,
                    "amplitude": 1e-2,
                    "epsilon_schedule": [0.2],
                    "max_iters": 12,
                    "seed": 3,
                }
            )
        )
        out = tmp_path / "out"
        r = run_cli("descend", "--config", str(config), "--out", str(out))
        assert r.returncode == 0
        lines = (out / "trajectory.jsonl").read_text().splitlines()
        assert lines
        rec = json.loads(lines[0])
        assert set(rec) == {
            "k", "iter", "area", "penalty", "grad_norm",
            "max_leg_residual", "entropy_indicator",
        }
        summary = json.loads((out / "summary.json").read_text())
        assert summary["stages"]
        assert (out / "final_mesh.json").exists()

    def test_trajectory_determinism(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(
            json.dumps(
                {
                    "family": "perturbed_clifford",
                    "resolution": 10,
                    "epsilon_schedule": [0.2],
                    "max_iters": 6,
                    "seed": 5,
                }
            )
        )
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli("descend", "--config", str(config), "--out", str(out)).returncode == 0
            outs.append((out / "trajectory.jsonl").read_bytes())
        assert outs[0] == outs[1]


class TestDensityCommand:
    def test_flat_patch_csv(self, tmp_path):
        r = run_cli(
            "density", "--family", "flat_patch", "--resolution", "128",
            "--out", str(tmp_path),
        )
        assert r.returncode == 0
        text = (tmp_path / "density.csv").read_text()
        assert text.startswith("#")
        header = [l for l in text.splitlines() if not l.startswith("#")][0]
        assert header == "s,ratio,n_components"

    def test_density_determinism(self, tmp_path):
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            r = run_cli(
                "density", "--family", "flat_patch", "--resolution", "64",
                "--seed", "2", "--out", str(out),
            )
            assert r.returncode == 0
            blobs.append((out / "density.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestMonotonicityCommand:
    def test_ladder_csv(self, tmp_path):
        r = run_cli(
            "monotonicity", "--family", "clifford_lift",
            "--resolution-ladder", "48,96", "--out", str(tmp_path),
        )
        assert r.returncode == 0
        text = (tmp_path / "monotonicity.csv").read_text()
        assert "residual" in text
        summary = json.loads((tmp_path / "monotonicity_summary.json").read_text())
        assert "residuals" in summary and len(summary["residuals"]) == 2


class TestEnergyCommand:
    def test_energy_file(self, tmp_path):
        r = run_cli(
            "energy", "--family", "clifford_lift", "--resolution", "16",
            "--epsilon", "0.2", "--out", str(tmp_path),
        )
        assert r.returncode == 0
        payload = json.loads((tmp_path / "energy.json").read_text())
        assert payload["total"] == pytest.approx(payload["area"] + payload["penalty"])


class TestCliffordDemo:
    def test_demo(self, tmp_path):
        r = run_cli("clifford-demo", "--resolution", "24", "--out", str(tmp_path))
        assert r.returncode == 0
        payload = json.loads((tmp_path / "clifford_demo.json").read_text())
        assert abs(payload["maslov_periods"][0] - np.pi) < 0.05


class TestSolverAbortExit:
    def test_exit_code_four(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(
            json.dumps(
                {
                    "family": "perturbed_clifford",
                    "resolution": 10,
                    "epsilon_schedule": [0.2],
                    "max_iters": 5,
                    "armijo": 2.0,
                    "tau_min": 1e-8,
                    "seed": 3,
                }
            )
        )
        out = tmp_path / "out"
        r = run_cli("descend", "--config", str(config), "--out", str(out))
        assert r.returncode == 4
        # partial outputs still land on disk
        assert (out / "summary.json").exists()
