"""Command-line entry points for map generation and survey experiments.

Every invocation writes a ``manifest.json`` with the fully resolved
configuration; re-running with ``--config manifest.json`` reproduces the
per-run CSVs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 bridge error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from radiosurvey.bridge import BridgeError
from radiosurvey.mapgen import GaussianModelParams
from radiosurvey.mapio import load_map, save_map, save_map_csv
from radiosurvey.planner import PlannerConfig
from radiosurvey.seeding import derive_rng
from radiosurvey.survey import (
    MapSpec,
    SurveyConfig,
    SurveyError,
    aggregate,
    monte_carlo,
    run_survey,
    write_aggregate_csv,
    write_runs_csv,
)

__all__ = ["main", "cmd_generate_maps", "cmd_run_experiment", "resolve_config"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BRIDGE = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "name": "experiment",
    "dataset": "gudmundson",
    "imported_dir": None,
    "estimators": ["online_bayes"],
    "planners": ["min_cost"],
    "beta_sweep": None,
    "n_runs": 10,
    "n_maps": 10,
    "max_measurements": 100,
    "seed": 1,
    "workers": 1,
    "output_dir": "out",
    "bridge_endpoint": None,
    "known_mean": True,
    "on_grid_measurements": False,
    "start": None,
    "interp_method": "cubic",
    "map": {
        "rows": 32,
        "cols": 32,
        "spacing_m": 3.0,
        "origin": [0.0, 0.0],
        "buildings": [],
        "n_transmitters": 2,
        "tx_power_dbm": 10.0,
        "tx_height_m": 20.0,
        "carrier_hz": 2.4e9,
        "altitude_m": 0.0,
    },
    "model": {
        "shadow_var": 10.0,
        "shadow_corr_dist_m": 50.0,
        "shadow_mean": 0.0,
        "fading_var": 0.0,
        "noise_var": 0.0,
        "pathloss_exponent": 2.0,
    },
    "planner_config": {
        "beta": 0.75,
        "speed_mps": 1.0,
        "n_update": 7,
        "alpha": 0.25,
        "measurement_spacing_m": 7.0,
        "h_kind": "reciprocal",
        "epsilon": 0.01,
        "solver": "bellman_ford",
    },
}


def resolve_config(config_path: str | None, flag_overrides: dict) -> dict:
    """Defaults <- config file <- command-line flags, nested dicts merged."""

    def merge(base: dict, new: dict) -> dict:
        out = dict(base)
        for key, val in new.items():
            if key not in base:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(base[key], dict) and isinstance(val, dict):
                out[key] = merge(base[key], val)
            else:
                out[key] = val
        return out

    resolved = dict(DEFAULT_CONFIG)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {config_path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        resolved = merge(resolved, loaded)
    resolved = merge(resolved, {k: v for k, v in flag_overrides.items() if v is not None})
    return resolved


def _survey_config(cfg: dict, estimator: str, planner: str, beta: float | None) -> SurveyConfig:
    m = cfg["map"]
    map_spec = MapSpec(
        rows=int(m["rows"]), cols=int(m["cols"]), spacing_m=float(m["spacing_m"]),
        origin=tuple(m["origin"]), buildings=frozenset(int(b) for b in m["buildings"]),
        n_transmitters=int(m["n_transmitters"]), tx_power_dbm=float(m["tx_power_dbm"]),
        tx_height_m=float(m["tx_height_m"]), carrier_hz=float(m["carrier_hz"]),
        altitude_m=float(m["altitude_m"]),
    )
    params = GaussianModelParams(**{k: float(v) for k, v in cfg["model"].items()})
    pc = dict(cfg["planner_config"])
    if beta is not None:
        pc["beta"] = beta
    planner_config = PlannerConfig(
        beta=float(pc["beta"]), speed_mps=float(pc["speed_mps"]),
        n_update=int(pc["n_update"]), alpha=float(pc["alpha"]),
        measurement_spacing_m=float(pc["measurement_spacing_m"]),
        h_kind=str(pc["h_kind"]), epsilon=float(pc["epsilon"]), solver=str(pc["solver"]),
    )
    try:
        return SurveyConfig(
            estimator=estimator, planner=planner, planner_config=planner_config,
            model_params=params, map_spec=map_spec,
            max_measurements=int(cfg["max_measurements"]), seed=int(cfg["seed"]),
            known_mean=bool(cfg["known_mean"]),
            on_grid_measurements=bool(cfg["on_grid_measurements"]),
            start=None if cfg["start"] is None else int(cfg["start"]),
            bridge_endpoint=cfg["bridge_endpoint"],
            interp_method=str(cfg["interp_method"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _write_manifest(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_generate_maps(cfg: dict) -> int:
    if cfg["dataset"] != "gudmundson":
        raise ConfigError("only the gudmundson dataset can be generated; "
                          "imported maps come from files")
    out_dir = Path(cfg["output_dir"])
    _write_manifest(cfg, out_dir)
    sc = _survey_config(cfg, "online_bayes", "random", None)
    for r in range(int(cfg["n_maps"])):
        seed = int(derive_rng(int(cfg["seed"]), "run", r).integers(2 ** 62))
        radio_map = sc.map_spec.draw_map(sc.model_params, seed)
        save_map(radio_map, out_dir / f"map_{r:04d}.txt")
        if r == 0:
            save_map_csv(radio_map, out_dir / f"map_{r:04d}.csv")
    print(f"wrote {cfg['n_maps']} maps to {out_dir}")
    return EXIT_OK


def _pair_label(estimator: str, planner: str, beta: float | None) -> str:
    label = f"{estimator}_{planner}"
    if beta is not None:
        label += f"_beta{beta:g}"
    return label


def _imported_runs(cfg: dict, sc: SurveyConfig) -> list:
    directory = cfg["imported_dir"]
    if not directory or not Path(directory).is_dir():
        raise ConfigError(f"imported dataset directory missing: {directory!r}")
    files = sorted(Path(directory).glob("*.txt"))
    if not files:
        raise ConfigError(f"no map files found in {directory!r}")
    records = []
    for r in range(int(cfg["n_runs"])):
        radio_map = load_map(files[r % len(files)])
        run_seed = int(derive_rng(sc.seed, "run", r).integers(2 ** 62))
        records.append(run_survey(radio_map, replace(sc, seed=run_seed)))
    return records


def cmd_run_experiment(cfg: dict) -> int:
    out_dir = Path(cfg["output_dir"])
    _write_manifest(cfg, out_dir)
    pairs = []
    for estimator in cfg["estimators"]:
        for planner in cfg["planners"]:
            betas = cfg["beta_sweep"] if (cfg["beta_sweep"] and planner == "min_cost") \
                else [None]
            for beta in betas:
                pairs.append((estimator, planner, beta))
    for estimator, planner, beta in pairs:
        sc = _survey_config(cfg, estimator, planner, beta)
        if cfg["dataset"] == "imported":
            records = _imported_runs(cfg, sc)
            agg = aggregate(records)
        else:
            records, agg = monte_carlo(sc, int(cfg["n_runs"]), int(cfg["workers"]))
        label = _pair_label(estimator, planner, beta)
        write_runs_csv(records, out_dir / f"runs_{label}.csv")
        write_aggregate_csv(agg, out_dir / f"agg_{label}.csv")
        print(f"{label}: {len(records)} runs, final mean RMSE "
              f"{agg.mean_rmse[-1]:.3f} dB, final mean uncertainty "
              f"{agg.mean_uncertainty[-1]:.4f}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radiosurvey",
        description="Radio-map surveying simulator: generate maps and run experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("generate-maps", "write ground-truth map files"),
                            ("run-experiment", "run Monte Carlo survey experiments")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (e.g. a previous manifest)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--runs", type=int, help="number of Monte Carlo runs / maps")
        p.add_argument("--workers", type=int, help="worker processes for Monte Carlo")
        p.add_argument("--bridge-endpoint", help="host:port of an external estimator")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "output_dir": args.out,
        "bridge_endpoint": args.bridge_endpoint,
        "workers": args.workers,
    }
    if args.runs is not None:
        overrides["n_runs"] = args.runs
        overrides["n_maps"] = args.runs
    try:
        cfg = resolve_config(args.config, overrides)
        if args.command == "generate-maps":
            return cmd_generate_maps(cfg)
        return cmd_run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BridgeError as e:
        print(f"bridge error: {e}", file=sys.stderr)
        return EXIT_BRIDGE
    except SurveyError as e:
        if isinstance(e.__cause__, BridgeError):
            print(f"bridge error: {e}", file=sys.stderr)
            return EXIT_BRIDGE
        print(f"survey error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
