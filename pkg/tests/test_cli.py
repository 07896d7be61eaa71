import yaml

import pytest

from wbansim.cli import main, parse_seed_range

from conftest import base_scenario_dict


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(base_scenario_dict()), encoding="utf-8")
    return path


class TestSeedRange:
    def test_inclusive_range(self):
        assert parse_seed_range("1..4") == [1, 2, 3, 4]

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_seed_range("5")
        with pytest.raises(ValueError):
            parse_seed_range("9..1")


class TestExitCodes:
    def test_success_is_zero(self, scenario_file, tmp_path):
        assert main(["--scenario", str(scenario_file), "--seed", "1",
                     "--out", str(tmp_path / "out")]) == 0

    def test_validation_failure_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        raw = base_scenario_dict()
        raw["nodes"].append({"id": 1})
        bad.write_text(yaml.safe_dump(raw), encoding="utf-8")
        assert main(["--scenario", str(bad)]) == 2
        assert "duplicate node id" in capsys.readouterr().err

    def test_missing_file_is_two(self, tmp_path):
        assert main(["--scenario", str(tmp_path / "nope.yaml")]) == 2

    def test_conflicting_seed_flags_rejected(self, scenario_file):
        assert main(["--scenario", str(scenario_file), "--seed", "1",
                     "--seeds", "1..2"]) == 2

    def test_validate_only_stops_before_any_run(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["--scenario", str(scenario_file), "--validate-only",
                     "--out", str(out)]) == 0
        assert "OK" in capsys.readouterr().out
        assert not out.exists()

    def test_unwritable_output_directory_is_one(self, scenario_file, tmp_path, capsys):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("file in the way", encoding="utf-8")
        assert main(["--scenario", str(scenario_file), "--seed", "1",
                     "--out", str(blocker)]) == 1
        assert "error" in capsys.readouterr().err


class TestOutputs:
    def test_single_run_writes_node_and_summary_csv(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        main(["--scenario", str(scenario_file), "--seed", "3", "--out", str(out)])
        node_csv = (out / "tiny_seed3.csv").read_text(encoding="utf-8")
        summary_csv = (out / "tiny_seed3_summary.csv").read_text(encoding="utf-8")
        assert node_csv.startswith("run_id,seed,mac,node_id,class,")
        assert ",csma,1,normal_high," in node_csv
        assert "bnc_awake_fraction" in summary_csv

    def test_repeat_runs_byte_identical(self, scenario_file, tmp_path):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            main(["--scenario", str(scenario_file), "--seed", "7", "--out", str(out)])
            texts.append((out / "tiny_seed7.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_trace_flag_emits_event_log(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        main(["--scenario", str(scenario_file), "--seed", "1", "--out", str(out), "--trace"])
        trace = (out / "tiny_seed1_trace.log").read_text(encoding="utf-8").splitlines()
        assert trace
        t, kind, node = trace[0].split()
        assert t == "0" and kind == "BeaconDue"
        times = [int(line.split()[0]) for line in trace]
        assert times == sorted(times)

    def test_sweep_writes_per_run_and_aggregate(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        main(["--scenario", str(scenario_file), "--seeds", "1..4", "--out", str(out)])
        per_run = sorted(p.name for p in out.glob("tiny_seed*.csv") if "summary" not in p.name)
        assert per_run == [f"tiny_seed{i}.csv" for i in (1, 2, 3, 4)]
        assert (out / "tiny_aggregate.csv").exists()

    def test_aggregate_equals_merge_of_per_run_ledgers(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        main(["--scenario", str(scenario_file), "--seeds", "1..3", "--out", str(out)])
        offered = delivered = 0
        for i in (1, 2, 3):
            lines = (out / f"tiny_seed{i}.csv").read_text().splitlines()[1:]
            for line in lines:
                f = line.split(",")
                offered += int(f[5])
                delivered += int(f[6])
        agg = (out / "tiny_aggregate.csv").read_text().splitlines()[1]
        fields = agg.split(",")
        assert int(fields[5]) == offered
        assert int(fields[6]) == delivered
        assert fields[0] == "tiny-aggregate"
