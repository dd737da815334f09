import json
import math
import subprocess
import sys

import numpy as np
import pytest

from stepstone.scenario import (
    NOMINAL_NOISE,
    ScenarioError,
    TerrainSpec,
    flat_walk_scenario,
    line_stones_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_toml,
    single_step_exploration_scenario,
)
from stepstone.sweep import SweepSpec, apply_parameter, run_sweep, success_rates, summary_csv


def write_scenario(tmp_path, cfg, name="scn.toml"):
    p = tmp_path / name
    p.write_text(scenario_to_toml(cfg))
    return p


class TestScenarioRoundTrip:
    def test_toml_round_trip_preserves_fields(self, tmp_path):
        cfg = line_stones_scenario(n_steps=3, seed=9, pushes=((1.5, (3.0, -4.0)),),
                                   swing_time=0.5)
        path = write_scenario(tmp_path, cfg)
        back = load_scenario(path)
        assert back.seed == cfg.seed
        assert back.swing_time == cfg.swing_time
        assert back.noise == cfg.noise
        assert back.pushes == cfg.pushes
        assert len(back.footsteps) == len(cfg.footsteps)
        for a, b in zip(back.footsteps, cfg.footsteps):
            assert a.foot == b.foot
            assert a.terrain.kind == b.terrain.kind
            assert a.terrain.angle == pytest.approx(b.terrain.angle)
            assert np.allclose(a.position, b.position)
        assert back.exploration.enabled == cfg.exploration.enabled
        assert back.exploration.explorer.waypoint_dwell == cfg.exploration.explorer.waypoint_dwell

    def test_validation_errors_name_the_field(self):
        with pytest.raises(ScenarioError, match="dt"):
            scenario_from_dict({"scenario": {"dt": 0.0}, "steps": [
                {"foot": "left", "position": [0.2, 0.1]}]})
        with pytest.raises(ScenarioError, match="swing_time"):
            scenario_from_dict({"scenario": {"swing_time": -1}, "steps": [
                {"foot": "left", "position": [0.2, 0.1]}]})
        with pytest.raises(ScenarioError, match="footsteps"):
            scenario_from_dict({"steps": []})
        with pytest.raises(ScenarioError):
            scenario_from_dict({"steps": [{"foot": "middle", "position": [0, 0]}]})

    def test_terrain_kinds(self):
        raw = {"steps": [
            {"foot": "left", "position": [0.2, 0.1], "contact": "line",
             "contact_angle_deg": 30.0},
            {"foot": "right", "position": [0.4, -0.1], "contact": "point",
             "contact_position": [0.01, 0.0], "contact_size": 0.02},
        ]}
        cfg = scenario_from_dict(raw)
        assert cfg.footsteps[0].terrain.kind == "line"
        assert cfg.footsteps[0].terrain.angle == pytest.approx(math.radians(30))
        assert cfg.footsteps[1].terrain.size == 0.02


class TestSweep:
    def base(self):
        return flat_walk_scenario(n_steps=2, seed=0, settle_time=0.3, final_hold=0.5)

    def test_degenerate_sweep_matches_single_run(self):
        from stepstone.metrics import compute_metrics
        from stepstone.runner import run_scenario

        base = self.base()
        spec = SweepSpec("swing_time", (0.5,), 1, base, base_seed=base.seed)
        rows = run_sweep(spec)
        assert len(rows) == 1
        value, rep, seed, metrics = rows[0]
        cfg = apply_parameter(base, "swing_time", 0.5)
        from dataclasses import replace
        cfg = replace(cfg, seed=base.seed)
        log, outcome = run_scenario(cfg)
        direct = compute_metrics(cfg, log, outcome)
        assert metrics.success == direct.success
        assert metrics.max_tracking_error == pytest.approx(direct.max_tracking_error)

    def test_seed_derivation_rule(self):
        spec = SweepSpec("swing_time", (0.4, 0.6), 2, self.base(), base_seed=100)
        rows = run_sweep(spec)
        assert [r[2] for r in rows] == [100, 101, 102, 103]

    def test_parallel_matches_serial(self):
        spec = SweepSpec("swing_time", (0.4, 0.6), 2, self.base(), base_seed=5)
        serial = run_sweep(spec, jobs=1)
        parallel = run_sweep(spec, jobs=2)
        assert summary_csv(serial) == summary_csv(parallel)

    def test_noise_parameter_scales_sigmas(self):
        cfg = apply_parameter(line_stones_scenario(n_steps=1), "noise_sigma", 2.0)
        assert cfg.noise.cop_sigma == pytest.approx(2 * NOMINAL_NOISE.cop_sigma)

    def test_push_parameter_rescales_magnitude(self):
        base = flat_walk_scenario(n_steps=2, pushes=((1.0, (3.0, 4.0)),))
        cfg = apply_parameter(base, "push_impulse", 10.0)
        assert np.hypot(*cfg.pushes[0][1]) == pytest.approx(10.0)
        assert cfg.pushes[0][1][0] / cfg.pushes[0][1][1] == pytest.approx(3.0 / 4.0)


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "stepstone.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


@pytest.fixture(scope="module")
def cli_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    flat = flat_walk_scenario(n_steps=2, seed=7, settle_time=0.3, final_hold=0.5)
    (d / "flat.toml").write_text(scenario_to_toml(flat))
    terr = TerrainSpec(kind="line", angle=math.radians(25.0))
    exp = single_step_exploration_scenario(terr, seed=4)
    (d / "explore.toml").write_text(scenario_to_toml(exp))
    (d / "sweep.toml").write_text(
        '[sweep]\nparameter = "swing_time"\nvalues = [0.5]\nrepetitions = 1\n'
        'base_scenario = "flat.toml"\nbase_seed = 3\n'
    )
    (d / "bad.toml").write_text("[scenario]\ndt = 0.0\n\n[[steps]]\n"
                                'foot = "left"\nposition = [0.2, 0.1]\n')
    return d


class TestCli:
    def test_run_exit_zero_and_outputs(self, cli_dir):
        res = run_cli(["run", "flat.toml", "--out", "o1", "--no-plots"], cli_dir)
        assert res.returncode == 0, res.stderr
        payload = json.loads(res.stdout.strip().splitlines()[-1])
        assert payload["schema"] == "stepstone-metrics/1"
        assert payload["success"] is True
        assert (cli_dir / "o1" / "flat_walk.csv").exists()
        assert (cli_dir / "o1" / "flat_walk.json").exists()

    def test_run_renders_figures(self, cli_dir):
        res = run_cli(["run", "flat.toml", "--out", "o_fig"], cli_dir)
        assert res.returncode == 0
        assert (cli_dir / "o_fig" / "flat_walk_ground_reference.png").exists()

    def test_invalid_config_exit_one(self, cli_dir):
        res = run_cli(["run", "bad.toml", "--no-plots"], cli_dir)
        assert res.returncode == 1
        assert "dt" in res.stderr

    def test_run_byte_identical_csv(self, cli_dir):
        run_cli(["run", "flat.toml", "--out", "oa", "--no-plots"], cli_dir)
        run_cli(["run", "flat.toml", "--out", "ob", "--no-plots"], cli_dir)
        a = (cli_dir / "oa" / "flat_walk.csv").read_bytes()
        b = (cli_dir / "ob" / "flat_walk.csv").read_bytes()
        assert a == b

    def test_seed_override_changes_log(self, cli_dir):
        # Noise-free flat walk is seed invariant, so use the explore scenario.
        run_cli(["explore", "explore.toml", "--out", "e1", "--no-plots"], cli_dir)
        res = run_cli(["run", "explore.toml", "--out", "e2", "--seed", "99",
                       "--no-plots"], cli_dir)
        assert res.returncode == 0
        a = (cli_dir / "e1" / "single_step_exploration.csv").read_bytes()
        b = (cli_dir / "e2" / "single_step_exploration.csv").read_bytes()
        assert a != b

    def test_sweep_command(self, cli_dir):
        res = run_cli(["sweep", "sweep.toml", "--out", "sw", "--no-plots"], cli_dir)
        assert res.returncode == 0, res.stderr
        payload = json.loads(res.stdout.strip().splitlines()[-1])
        assert payload["schema"] == "stepstone-sweep/1"
        csv_text = (cli_dir / "sw" / "sweep_swing_time.csv").read_text()
        assert csv_text.startswith("value,repetition,seed,success")

    def test_explore_command_reports_error_vs_truth(self, cli_dir):
        res = run_cli(["explore", "explore.toml", "--out", "ex", "--no-plots"], cli_dir)
        assert res.returncode == 0, res.stderr
        payload = json.loads(res.stdout.strip().splitlines()[-1])
        entry = payload["explorations"][0]
        assert entry["error"]["kind"] == "line"
        assert entry["error"]["angle_deg"] < 2.0
        assert entry["error"]["offset_m"] < 0.005
        assert 1.0 <= entry["duration"] <= 3.0

    def test_straight_line_course_explores_every_step(self, cli_dir, tmp_path):
        # A course of straight line contacts (tilted-block walkway): the log
        # must carry one exploration phase per step.
        cfg = line_stones_scenario(n_steps=4, angles_deg=(0.0,), seed=6,
                                   settle_time=0.3, final_hold=0.5)
        path = tmp_path / "straight.toml"
        path.write_text(scenario_to_toml(cfg))
        res = run_cli(["run", str(path), "--out", str(tmp_path / "o"), "--no-plots"],
                      cli_dir)
        assert res.returncode == 0, res.stderr
        sidecar = json.loads((tmp_path / "o" / "line_stones.json").read_text())
        assert len(sidecar["exploration"]) >= 4

    def test_qp_dump_written(self, cli_dir):
        res = run_cli(["run", "flat.toml", "--out", "oq", "--qp-dump", "--no-plots"], cli_dir)
        assert res.returncode == 0
        dump = (cli_dir / "oq" / "flat_walk_qp_dump.jsonl")
        assert dump.exists()
        first = json.loads(dump.read_text().splitlines()[0])
        assert set(first) >= {"t", "A", "b", "Q_com", "W_g", "solution", "weights"}
