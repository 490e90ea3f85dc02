import json
from pathlib import Path

import pytest

from prunerec.cli import main, run_command
from prunerec.errors import ConfigError
from prunerec.runspec import (
    RunSpec,
    fmt_cell,
    parse_spec_text,
    read_report,
    trial_seed,
    with_overrides,
    write_report,
)

SMALL_SPEC = """\
# toy-size operating point for fast tests
depth = 4
dim = 8
heads = 2
ffn_mult = 2
num_tokens = 16
num_clusters = 4
l_p = 1
retain = 0.5
delta_l_max = 2
k = 2
probes = 2
trials = 2
"""


@pytest.fixture
def spec_path(tmp_path):
    p = tmp_path / "small.spec"
    p.write_text(SMALL_SPEC)
    return str(p)


class TestSpecParsing:
    def test_defaults(self):
        spec = parse_spec_text("")
        assert spec == RunSpec()
        assert spec.l_p == 3 and spec.delta_l_max == 7 and spec.k == 10

    def test_values_and_comments(self):
        spec = parse_spec_text("depth = 4  # shallow\n\nl_p = 1\ndelta_l_max = 2\nretain = 0.35\n")
        assert spec.depth == 4 and spec.retain == 0.35

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_spec_text("depht = 4\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_spec_text("depth = 4\ndepth = 5\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_spec_text("depth 4\n")

    def test_invalid_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_spec_text("l_p = 0\n")

    def test_absolute_retain(self):
        spec = parse_spec_text("retain = 24\n")
        assert spec.compression_config().resolve_k(64) == 24

    def test_sha_changes_with_content(self):
        assert RunSpec().sha256() != RunSpec(seed=1).sha256()
        assert RunSpec().sha256() == RunSpec().sha256()

    def test_trial_seed_stable(self):
        assert trial_seed(7, 3) == trial_seed(7, 3)
        assert trial_seed(7, 3) != trial_seed(7, 4)

    def test_override_validation(self):
        with pytest.raises(ConfigError):
            with_overrides(RunSpec(), l_p=99)


class TestReportSerialization:
    def test_csv_round_trip_bytes(self):
        meta = {"schema_version": "1", "command": "x"}
        columns = ["a", "b"]
        rows = [[fmt_cell(1), fmt_cell(0.1)], [fmt_cell(True), fmt_cell("s")]]
        text = write_report(meta, columns, rows, "csv")
        m2, c2, r2 = read_report(text, "csv")
        assert write_report(m2, c2, r2, "csv") == text

    def test_float_17g_lossless(self):
        x = 0.1234567890123456789
        assert float(fmt_cell(x)) == x

    def test_json_round_trip(self):
        meta = {"command": "x"}
        text = write_report(meta, ["a"], [["1"]], "json")
        doc = json.loads(text)
        assert doc["meta"] == meta and doc["rows"] == [["1"]]

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            write_report({}, [], [], "xml")


class TestSubcommands:
    @pytest.mark.parametrize("command", ["forward", "compress", "bounds", "stats", "flops", "ablate"])
    def test_pure_in_spec(self, command):
        spec = parse_spec_text(SMALL_SPEC)
        a = run_command(command, spec)
        b = run_command(command, spec)
        assert a[0] == b[0] and a[2] == b[2]

    def test_bounds_no_prune_all_zero(self):
        spec = with_overrides(parse_spec_text(SMALL_SPEC), retain=1.0, trials=1)
        _, columns, rows, fig = run_command("bounds", spec)
        assert rows[0][columns.index("hausdorff_recon")] == 0.0
        assert fig is None

    def test_sweep_retain_ratio_non_increasing(self):
        spec = parse_spec_text(SMALL_SPEC)
        _, columns, rows, _ = run_command("sweep", spec, "retain", [1.0, 0.5, 0.35, 0.2])
        ratios = [r[columns.index("flops_ratio_ipcv")] for r in rows]
        assert all(b <= a for a, b in zip(ratios, ratios[1:]))
        assert ratios[0] == 1.0

    def test_sweep_bad_axis(self):
        with pytest.raises(ConfigError):
            run_command("sweep", parse_spec_text(SMALL_SPEC), "dim", [8])


class TestMain:
    def test_byte_identical_reruns(self, spec_path, tmp_path, capsys):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["bounds", "--spec", spec_path, "--out", str(out1), "--no-plot"]) == 0
        assert main(["bounds", "--spec", spec_path, "--out", str(out2), "--no-plot"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_report_round_trips_from_disk(self, spec_path, tmp_path, capsys):
        out = tmp_path / "r.csv"
        assert main(["flops", "--spec", spec_path, "--out", str(out)]) == 0
        text = out.read_text()
        meta, cols, rows = read_report(text, "csv")
        assert write_report(meta, cols, rows, "csv") == text
        assert meta["command"] == "flops"

    def test_stats_renders_figure(self, spec_path, tmp_path, capsys):
        out = tmp_path / "stats.csv"
        assert main(["stats", "--spec", spec_path, "--out", str(out)]) == 0
        assert (tmp_path / "stats_stats.png").exists()

    def test_no_plot_skips_figure(self, spec_path, tmp_path, capsys):
        out = tmp_path / "stats.csv"
        assert main(["stats", "--spec", spec_path, "--out", str(out), "--no-plot"]) == 0
        assert not (tmp_path / "stats_stats.png").exists()

    def test_sweep_end_to_end(self, spec_path, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        rc = main(["sweep", "--spec", spec_path, "--out", str(out),
                   "--axis", "retain", "--values", "1.0,0.5,0.35,0.2"])
        assert rc == 0
        _, cols, rows = read_report(out.read_text(), "csv")
        ratios = [float(r[cols.index("flops_ratio_ipcv")]) for r in rows]
        assert all(b <= a for a, b in zip(ratios, ratios[1:]))
        assert (tmp_path / "sweep_sweep.png").exists()

    def test_json_format(self, spec_path, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert main(["flops", "--spec", spec_path, "--out", str(out), "--format", "json"]) == 0
        doc = json.loads(out.read_text())
        assert doc["meta"]["command"] == "flops"

    def test_stdout_when_no_out(self, spec_path, capsys):
        assert main(["flops", "--spec", spec_path]) == 0
        captured = capsys.readouterr()
        assert "ratio_vs_vanilla" in captured.out

    def test_seed_override_changes_report(self, spec_path, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["forward", "--spec", spec_path, "--out", str(a), "--seed", "1"])
        main(["forward", "--spec", spec_path, "--out", str(b), "--seed", "2"])
        assert a.read_bytes() != b.read_bytes()

    def test_usage_error_exit_1(self, capsys):
        assert main(["sweep", "--axis", "retain"]) == 1  # missing --values
        assert main(["notacommand"]) == 1

    def test_bad_values_exit_1(self, spec_path, capsys):
        assert main(["sweep", "--spec", spec_path, "--axis", "k", "--values", "two"]) == 1
        assert main(["sweep", "--spec", spec_path, "--axis", "k", "--values", ""]) == 1

    def test_missing_spec_file_exit_1(self, tmp_path, capsys):
        assert main(["flops", "--spec", str(tmp_path / "nope.spec")]) == 1

    def test_config_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.spec"
        bad.write_text("notakey = 1\n")
        assert main(["flops", "--spec", str(bad)]) == 2
        bad.write_text("l_p = 0\n")
        assert main(["flops", "--spec", str(bad)]) == 2
