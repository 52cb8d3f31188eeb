"""Configuration parsing, output files, subcommand behavior."""

import json
import math

import numpy as np
import pytest

from coalbins import InitialDistributionSpec, discretize, realization_seed
from coalbins.cli import ConfigError, config_from_dict, main, parse_config

MINIMAL = {
    "init": {"kind": "gamma", "mean_mass_g": 4.19e-9, "total_number": 200.0},
    "kernel": {"kind": "golovin_sum", "coefficient": 1500.0},
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def small_config(tmp_path, out_name="out", **engine):
    payload = {
        "init": dict(MINIMAL["init"]),
        "kernel": dict(MINIMAL["kernel"]),
        "engine": {"max_events": 150, "seed": 7,
                   "snapshot_times_s": [0.0, 1e-3], **engine},
        "output": {"directory": str(tmp_path / out_name)},
    }
    return write_config(tmp_path, payload)


class TestParseConfig:
    def test_minimal_gets_documented_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, MINIMAL))
        assert cfg.grid_n_bins == 70
        assert cfg.grid_ratio == pytest.approx(math.sqrt(2.0))
        assert cfg.grid_x_min == 4.19e-12
        assert cfg.engine.mode == "refined"
        assert cfg.engine.volume == 1.0
        assert cfg.engine.max_events == 10000
        assert cfg.engine.seed == 1
        assert cfg.n_realizations == 1

    def test_bad_ratio_names_the_field(self, tmp_path):
        payload = dict(MINIMAL, grid={"ratio": 0.5})
        with pytest.raises(ConfigError, match="grid.ratio"):
            parse_config(write_config(tmp_path, payload))

    def test_unknown_key_names_the_path(self, tmp_path):
        payload = dict(MINIMAL, engine={"max_evnets": 10})
        with pytest.raises(ConfigError, match="engine.max_evnets"):
            parse_config(write_config(tmp_path, payload))
        payload = dict(MINIMAL)
        payload["init"] = dict(MINIMAL["init"], color="blue")
        with pytest.raises(ConfigError, match="init.color"):
            parse_config(write_config(tmp_path, payload))

    def test_legacy_mode_selected(self, tmp_path):
        payload = dict(MINIMAL, engine={"mode": "legacy"})
        cfg = parse_config(write_config(tmp_path, payload))
        assert cfg.engine.mode == "legacy"

    def test_missing_required_section(self, tmp_path):
        with pytest.raises(ConfigError, match="config.kernel"):
            parse_config(write_config(tmp_path, {"init": MINIMAL["init"]}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(path)

    def test_invalid_kernel_value(self, tmp_path):
        payload = dict(MINIMAL)
        payload["kernel"] = {"kind": "golovin_sum", "coefficient": -1.0}
        with pytest.raises(ConfigError, match="kernel"):
            parse_config(write_config(tmp_path, payload))

    def test_round_trip_resolved_config(self, tmp_path):
        payload = {
            "grid": {"x_min_g": 1e-11, "ratio": 2.0, "n_bins": 40},
            "init": {"kind": "exponential", "mean_mass_g": 2e-9,
                     "total_number": 5e3, "scale_factor": 2.0},
            "kernel": {"kind": "constant", "coefficient": 3.3e-6},
            "engine": {"mode": "legacy", "volume_cm3": 2.0,
                       "max_time_s": 12.5, "max_events": 777, "seed": 99,
                       "snapshot_times_s": [0.0, 1.0, 2.0]},
            "ensemble": {"n_realizations": 3, "base_seed": 4},
            "output": {"directory": "results", "formats": ["json"],
                       "events_log": True},
        }
        cfg = parse_config(write_config(tmp_path, payload))
        again = config_from_dict(json.loads(json.dumps(cfg.resolved())))
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()


class TestCmdRun:
    def test_snapshot_zero_matches_discretize(self, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config",
                     small_config(tmp_path, snapshot_times_s=[0.0])])
        assert code == 0
        state0 = discretize(
            InitialDistributionSpec(kind="gamma", mean_mass=4.19e-9,
                                    total_number=200.0),
            parse_config(small_config(tmp_path)).build_grid())
        rows = [line.split(",") for line in
                (out / "snapshots.csv").read_text().splitlines()
                if not line.startswith("#")][1:]
        zero_rows = [r for r in rows if r[0] == "0.0" and r[1] != "-1"]
        mass = np.array([float(r[4]) for r in zero_rows])
        number = np.array([float(r[5]) for r in zero_rows])
        np.testing.assert_array_equal(mass, state0.mass)
        np.testing.assert_array_equal(number, state0.number)

    def test_outputs_carry_metadata_header(self, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", small_config(tmp_path)])
        text = (out / "snapshots.csv").read_text()
        assert text.startswith("# artifact=coalbins")
        assert "# config_sha256=" in text
        assert "# seed=7" in text
        assert "# mode=refined" in text
        assert "# rng=philox4x64" in text
        payload = json.loads((out / "run.json").read_text())
        assert payload["meta"]["seed"] == 7

    def test_byte_identical_reruns(self, tmp_path):
        cfg_a = small_config(tmp_path, out_name="a")
        main(["run", "--config", cfg_a, "--events-log"])
        first = {p.name: p.read_bytes()
                 for p in (tmp_path / "a").iterdir()}
        main(["run", "--config", cfg_a, "--events-log",
              "--out", str(tmp_path / "b")])
        for name, blob in first.items():
            if name == "resolved_config.json":
                continue  # embeds the output directory
            assert (tmp_path / "b" / name).read_bytes() == blob

    def test_format_flag_restricts_outputs(self, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", small_config(tmp_path), "--format", "csv"])
        assert (out / "snapshots.csv").exists()
        assert not (out / "run.json").exists()

    def test_seed_and_mode_overrides(self, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", small_config(tmp_path), "--seed", "31",
              "--mode", "legacy"])
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["engine"]["seed"] == 31
        assert resolved["engine"]["mode"] == "legacy"

    def test_events_log_flag(self, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", small_config(tmp_path), "--events-log"])
        lines = [l for l in (out / "events.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "time_s,source_i,source_j,x_i_g,x_j_g,deposit_bin"
        assert len(lines) == 151  # header + max_events rows

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
        assert "config error" in capsys.readouterr().err


class TestCmdEnsemble:
    def test_single_member_matches_run_with_derived_seed(self, tmp_path):
        payload = {
            "init": dict(MINIMAL["init"]),
            "kernel": dict(MINIMAL["kernel"]),
            "engine": {"max_events": 120,
                       "snapshot_times_s": [0.0, 5e-4]},
            "ensemble": {"n_realizations": 1, "base_seed": 13},
            "output": {"directory": str(tmp_path / "ens")},
        }
        main(["ensemble", "--config", write_config(tmp_path, payload)])
        ens = json.loads((tmp_path / "ens" / "ensemble.json").read_text())
        assert ens["n_realizations"] == 1
        assert ens["seeds"] == [realization_seed(13, 0)]
        assert np.all(np.array(ens["moment_var"]) == 0.0)

        payload_run = dict(payload)
        payload_run["engine"] = dict(payload["engine"],
                                     seed=realization_seed(13, 0))
        payload_run["output"] = {"directory": str(tmp_path / "single")}
        main(["run", "--config", write_config(tmp_path, payload_run,
                                              "run.json.cfg")])
        single = json.loads((tmp_path / "single" / "run.json").read_text())
        moments = [[m["moment0"], m["moment1"], m["moment2"], m["moment3"]]
                   for m in single["moments"]]
        np.testing.assert_array_equal(np.array(ens["moment_mean"]),
                                      np.array(moments))

    def test_moments_csv_layout(self, tmp_path):
        payload = {
            "init": dict(MINIMAL["init"]),
            "kernel": dict(MINIMAL["kernel"]),
            "engine": {"max_events": 60, "snapshot_times_s": [0.0]},
            "ensemble": {"n_realizations": 2, "base_seed": 3},
            "output": {"directory": str(tmp_path / "ens2")},
        }
        main(["ensemble", "--config", write_config(tmp_path, payload)])
        lines = [l for l in
                 (tmp_path / "ens2" / "ensemble_moments.csv")
                 .read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "time_s,order,mean,variance,stderr"
        assert len(lines) == 1 + 4  # one snapshot, orders 0..3


class TestCmdCompareModes:
    def test_writes_per_seed_summary_and_verdict(self, tmp_path, capsys):
        payload = {
            "init": {"kind": "gamma", "mean_mass_g": 4.19e-9,
                     "total_number": 400.0},
            "kernel": dict(MINIMAL["kernel"]),
            "engine": {"max_events": 399},
            "ensemble": {"n_realizations": 5, "base_seed": 2},
            "output": {"directory": str(tmp_path / "cmp")},
        }
        code = main(["compare-modes", "--config",
                     write_config(tmp_path, payload)])
        assert code == 0
        verdict = capsys.readouterr().out.strip()
        comparison = json.loads(
            (tmp_path / "cmp" / "comparison.json").read_text())
        assert comparison["refined_total"] == 0
        assert len(comparison["per_seed"]) == 5
        assert comparison["verdict"] == verdict
        lines = [l for l in
                 (tmp_path / "cmp" / "mode_comparison.csv")
                 .read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == ("realization,seed,refined_violations,"
                            "legacy_violations")
        assert len(lines) == 6