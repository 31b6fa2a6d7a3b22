"""CLI: config resolution, map generation, experiments, manifests."""

import json

import pytest

from radiosurvey.cli import (
    EXIT_BRIDGE,
    EXIT_CONFIG,
    EXIT_OK,
    main,
    resolve_config,
)


def _tiny_config(tmp_path, **overrides):
    cfg = {
        "name": "tiny",
        "n_runs": 2,
        "n_maps": 2,
        "max_measurements": 8,
        "seed": 11,
        "output_dir": str(tmp_path / "out"),
        "map": {"rows": 10, "cols": 10},
        "planners": ["min_cost"],
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestResolveConfig:
    def test_defaults_without_file(self):
        cfg = resolve_config(None, {})
        assert cfg["map"]["rows"] == 32
        assert cfg["planner_config"]["beta"] == 0.75

    def test_file_overrides_defaults_and_flags_override_file(self, tmp_path):
        path = _tiny_config(tmp_path)
        cfg = resolve_config(str(path), {"seed": 99})
        assert cfg["map"]["rows"] == 10
        assert cfg["map"]["cols"] == 10
        assert cfg["map"]["spacing_m"] == 3.0  # default survives nested merge
        assert cfg["seed"] == 99

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"not_a_key": 1}))
        from radiosurvey.cli import ConfigError

        with pytest.raises(ConfigError):
            resolve_config(str(path), {})


class TestGenerateMaps:
    def test_writes_maps_and_manifest(self, tmp_path):
        path = _tiny_config(tmp_path)
        assert main(["generate-maps", "--config", str(path)]) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "manifest.json").exists()
        assert (out / "map_0000.txt").exists()
        assert (out / "map_0001.txt").exists()

    def test_deterministic_by_seed(self, tmp_path):
        path = _tiny_config(tmp_path)
        main(["generate-maps", "--config", str(path), "--out", str(tmp_path / "a")])
        main(["generate-maps", "--config", str(path), "--out", str(tmp_path / "b")])
        a = (tmp_path / "a" / "map_0000.txt").read_bytes()
        b = (tmp_path / "b" / "map_0000.txt").read_bytes()
        assert a == b

    def test_imported_dataset_cannot_be_generated(self, tmp_path):
        path = _tiny_config(tmp_path, dataset="imported")
        assert main(["generate-maps", "--config", str(path)]) == EXIT_CONFIG


class TestRunExperiment:
    def test_planner_fanout_writes_csvs(self, tmp_path):
        path = _tiny_config(tmp_path, planners=["min_cost", "grid", "spiral", "uniform"],
                            max_measurements=6, n_runs=1)
        assert main(["run-experiment", "--config", str(path)]) == EXIT_OK
        out = tmp_path / "out"
        aggs = sorted(p.name for p in out.glob("agg_*.csv"))
        assert aggs == [
            "agg_online_bayes_grid.csv",
            "agg_online_bayes_min_cost.csv",
            "agg_online_bayes_spiral.csv",
            "agg_online_bayes_uniform.csv",
        ]

    def test_single_run_std_zero(self, tmp_path):
        path = _tiny_config(tmp_path, n_runs=1, max_measurements=5)
        main(["run-experiment", "--config", str(path)])
        lines = (tmp_path / "out" / "agg_online_bayes_min_cost.csv").read_text().strip()
        rows = [line.split(",") for line in lines.split("\n")[1:]]
        assert all(float(r[2]) == 0.0 for r in rows)  # std_rmse column

    def test_beta_sweep_fanout(self, tmp_path):
        path = _tiny_config(tmp_path, beta_sweep=[0, 0.25, 0.5, 0.75, 1],
                            n_runs=1, max_measurements=5)
        main(["run-experiment", "--config", str(path)])
        out = tmp_path / "out"
        names = sorted(p.name for p in out.glob("agg_*beta*.csv"))
        assert names == [
            "agg_online_bayes_min_cost_beta0.25.csv",
            "agg_online_bayes_min_cost_beta0.5.csv",
            "agg_online_bayes_min_cost_beta0.75.csv",
            "agg_online_bayes_min_cost_beta0.csv",
            "agg_online_bayes_min_cost_beta1.csv",
        ]

    def test_missing_imported_dir_is_config_error(self, tmp_path):
        path = _tiny_config(tmp_path, dataset="imported")
        assert main(["run-experiment", "--config", str(path)]) == EXIT_CONFIG

    def test_imported_dataset_runs_from_files(self, tmp_path):
        gen = _tiny_config(tmp_path, n_maps=2)
        main(["generate-maps", "--config", str(gen), "--out", str(tmp_path / "maps")])
        run = _tiny_config(tmp_path, dataset="imported",
                           imported_dir=str(tmp_path / "maps"),
                           planners=["uniform"], n_runs=2, max_measurements=5)
        assert main(["run-experiment", "--config", str(run),
                     "--out", str(tmp_path / "imp")]) == EXIT_OK
        assert (tmp_path / "imp" / "runs_online_bayes_uniform.csv").exists()

    def test_manifest_rerun_reproduces_runs_csv(self, tmp_path):
        path = _tiny_config(tmp_path, n_runs=2, max_measurements=6)
        main(["run-experiment", "--config", str(path), "--out", str(tmp_path / "one")])
        manifest = tmp_path / "one" / "manifest.json"
        main(["run-experiment", "--config", str(manifest), "--out", str(tmp_path / "two")])
        a = (tmp_path / "one" / "runs_online_bayes_min_cost.csv").read_bytes()
        b = (tmp_path / "two" / "runs_online_bayes_min_cost.csv").read_bytes()
        assert a == b

    def test_unreachable_bridge_is_exit_3(self, tmp_path):
        import socket

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        path = _tiny_config(tmp_path, estimators=["bridge"], planners=["uniform"],
                            n_runs=1, max_measurements=3)
        code = main(["run-experiment", "--config", str(path),
                     "--bridge-endpoint", f"127.0.0.1:{port}"])
        assert code == EXIT_BRIDGE

    def test_bridge_estimator_against_stub(self, tmp_path):
        from radiosurvey.bridge import StubEstimateServer

        with StubEstimateServer(mode="nearest") as server:
            path = _tiny_config(tmp_path, estimators=["bridge"], planners=["uniform"],
                                n_runs=1, max_measurements=5)
            code = main(["run-experiment", "--config", str(path),
                         "--bridge-endpoint", server.endpoint])
            assert code == EXIT_OK
            assert (tmp_path / "out" / "runs_bridge_uniform.csv").exists()
