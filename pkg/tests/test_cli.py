"""CLI tests: exercised in-process through main(argv) so exit codes and all
output files can be checked quickly."""

import csv
import json
import math

import numpy as np
import pytest

from retrobell.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_PHYSICS,
    ScenarioConfig,
    load_config,
    main,
)


def write_config(tmp_path, name="scenario.json", **overrides):
    doc = {
        "schema": "retrobell-scenario/1",
        "name": "test-scenario",
        "state": "singlet",
        "a": {"angle_deg": 0.0},
        "b": {"angle_deg": 60.0},
        "pairs": 4000,
        "seed": 7,
        "bin_width": 0.5,
    }
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return path


def read_summary(out_dir, name="summary.json"):
    return json.loads((out_dir / name).read_text())


def read_csv_rows(path):
    with open(path) as fh:
        schema_line = fh.readline()
        assert schema_line.startswith("# schema: retrobell-")
        return list(csv.DictReader(fh))


class TestConfigParsing:
    def test_round_trip_identity(self, tmp_path):
        path = write_config(
            tmp_path,
            weights="outcome-bias",
            positions={"preset": "cross-shift", "shift": 0.5},
            scan={"mode": "signal", "probes": [{"angle_deg": 90.0}]},
            mi_probe_b=[1.0, 0.0, 0.0],
        )
        cfg = load_config(path)
        reparsed = ScenarioConfig.from_dict(cfg.to_dict())
        assert reparsed.to_dict() == cfg.to_dict()

    def test_seed_is_mandatory(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"pairs": 10}))
        with pytest.raises(Exception) as err:
            load_config(path)
        assert "seed" in str(err.value)

    def test_unknown_field_rejected(self, tmp_path):
        path = write_config(tmp_path, wibble=3)
        assert main(["exact", "--config", str(path)]) == EXIT_CONFIG

    def test_zero_pairs_rejected(self, tmp_path):
        path = write_config(tmp_path, pairs=0)
        assert main(["run", "--config", str(path),
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_malformed_json_names_location(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{\n  \"seed\": 1,\n  oops\n}\n")
        assert main(["exact", "--config", str(path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "line 3" in err

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["exact", "--config", str(tmp_path / "absent.json")]) == EXIT_IO

    def test_explicit_weights_table(self, tmp_path):
        path = write_config(tmp_path, weights={"++": 0.1, "+-": 0.4,
                                               "-+": 0.4, "--": 0.1})
        cfg = load_config(path)
        assert cfg.weights.values == pytest.approx((0.1, 0.4, 0.4, 0.1))

    def test_amplitude_state(self, tmp_path):
        s = 1.0 / math.sqrt(2.0)
        path = write_config(tmp_path, state=[[0.0, 0.0], [s, 0.0],
                                             [s, 0.0], [0.0, 0.0]])
        cfg = load_config(path)
        assert cfg.canonical["state"][1][0] == pytest.approx(s)


class TestExactCommand:
    def test_closed_form_values(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = write_config(tmp_path, mi_probe_b={"angle_deg": 90.0})
        assert main(["exact", "--config", str(path), "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "exact.json").read_text())
        results = doc["results"]
        assert results["dot_ab"] == pytest.approx(0.5, abs=1e-12)
        assert results["correlator"] == pytest.approx(-0.5, abs=1e-12)
        assert results["outcome_bias"]["wing1_plus_rate"] == pytest.approx(
            3.5 / 6.0, abs=1e-12)
        assert results["chsh"]["abs"] == pytest.approx(2.0 * math.sqrt(2.0),
                                                       abs=1e-10)
        assert results["measurement_independence"]["divergence"] >= 0.0
        assert results["support_labels"] == ["++", "+-", "-+", "--"]
        printed = capsys.readouterr().out
        assert "correlator" in printed

    def test_equal_settings_anticorrelated(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, b={"angle_deg": 0.0})
        assert main(["exact", "--config", str(path), "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "exact.json").read_text())
        assert doc["results"]["correlator"] == pytest.approx(-1.0, abs=1e-12)

    def test_mi_divergence_half_for_aligned_vs_orthogonal(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, b={"angle_deg": 0.0},
                            mi_probe_b={"angle_deg": 90.0})
        main(["exact", "--config", str(path), "--out", str(out)])
        doc = json.loads((out / "exact.json").read_text())
        assert doc["results"]["measurement_independence"]["divergence"] == \
            pytest.approx(0.5, abs=1e-12)


class TestRunCommand:
    def test_outputs_and_summary(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path)
        assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_OK

        for name in ("summary.json", "records.csv", "hist_wing1_all.csv",
                     "hist_wing1_plus.csv", "hist_wing1_minus.csv",
                     "hist_wing2_all.csv", "spot_wing1.png", "spot_wing2.png"):
            assert (out / name).exists(), name

        doc = read_summary(out)
        assert doc["schema"] == "retrobell-summary/1"
        assert doc["config"]["seed"] == 7
        results = doc["results"]
        assert results["pair_count"] == 4000
        corr = results["correlator"]
        assert abs(corr["value"] - results["exact_correlator"]) < \
            3 * corr["std_error"]
        assert results["diagnostics"]["readout_errors"] == 0

        rows = read_csv_rows(out / "records.csv")
        assert len(rows) == 4000
        assert set(rows[0]) == {"pair", "outcome1", "true1", "x1", "y1", "z1",
                                "outcome2", "true2", "x2", "y2", "z2"}

        hist_rows = read_csv_rows(out / "hist_wing1_all.csv")
        total = sum(float(r["weight"]) for r in hist_rows)
        assert total == pytest.approx(4000)

    def test_byte_identical_rerun(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(path), "--out", str(out1)]) == EXIT_OK
        assert main(["run", "--config", str(path), "--out", str(out2)]) == EXIT_OK
        names = sorted(p.name for p in out1.iterdir())
        assert names == sorted(p.name for p in out2.iterdir())
        for name in names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_seed_override_changes_results(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["run", "--config", str(path), "--out", str(out1)])
        main(["run", "--config", str(path), "--out", str(out2), "--seed", "8"])
        doc1, doc2 = read_summary(out1), read_summary(out2)
        assert doc2["config"]["seed"] == 8
        assert doc1["results"]["correlator"]["value"] != \
            doc2["results"]["correlator"]["value"]

    def test_separation_refusal_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, duration=3.0)
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == \
            EXIT_PHYSICS
        err = capsys.readouterr().err
        assert "g*T" in err and "3.0" in err

    def test_plots_can_be_disabled(self, tmp_path):
        path = write_config(tmp_path, plots=False)
        out = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_OK
        assert not (out / "spot_wing1.png").exists()
        assert (out / "summary.json").exists()


class TestScanCommand:
    def test_bell_curve_matches_exact_pointwise(self, tmp_path):
        path = write_config(tmp_path, pairs=5000,
                            scan={"mode": "bell-curve", "points": 7})
        out = tmp_path / "out"
        assert main(["scan", "--config", str(path), "--out", str(out)]) == EXIT_OK
        rows = read_csv_rows(out / "sweep.csv")
        assert len(rows) == 7
        for row in rows:
            est = float(row["estimate"])
            se = float(row["std_error"])
            exact = float(row["exact"])
            assert exact == pytest.approx(-float(row["dot"]), abs=1e-10)
            if se == 0.0:
                assert est == pytest.approx(exact, abs=1e-9)
            else:
                assert abs(est - exact) < 4 * se
        assert (out / "bell_curve.png").exists()
        doc = read_summary(out)
        assert doc["mode"] == "bell-curve"

    def test_signal_scan_outcome_bias(self, tmp_path):
        path = write_config(
            tmp_path, pairs=20_000, b={"angle_deg": 0.0},
            weights="outcome-bias",
            scan={"mode": "signal", "probes": [{"angle_deg": 180.0}]})
        out = tmp_path / "out"
        assert main(["scan", "--config", str(path), "--out", str(out)]) == EXIT_OK
        rows = read_csv_rows(out / "signal.csv")
        by_observable = {r["observable"]: r for r in rows}
        rate = by_observable["outcome-rate"]
        shape = by_observable["spot-shape"]
        assert float(rate["divergence"]) > 5 * float(rate["std_error"])
        assert float(shape["divergence"]) <= 3 * float(shape["std_error"])
        assert (out / "signal_scan.png").exists()

    def test_scan_requires_scan_block(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["scan", "--config", str(path),
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_scan_byte_identical_rerun(self, tmp_path):
        path = write_config(tmp_path, pairs=3000,
                            scan={"mode": "bell-curve", "points": 5})
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["scan", "--config", str(path), "--out", str(out1)])
        main(["scan", "--config", str(path), "--out", str(out2)])
        for name in ("summary.json", "sweep.csv", "bell_curve.png"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
