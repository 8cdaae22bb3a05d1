import json
import os

import pytest

from mdlab.cli import build_parser, parse_and_dispatch

EXPECTED_FLAGS = {
    "simulate": {
        "--n", "--delta", "--trials", "--seed", "--workers", "--out-dir",
        "--p", "--regime", "--budget-factor", "--step-budget",
        "--coupling-checks", "--no-coupling-checks",
        "--phase-checks", "--no-phase-checks",
        "--trajectory-stride", "--snapshot-times", "--connected-only",
        "--write-trajectories", "--fixed-point-sweeps", "--help", "-h",
    },
    "sweep": {
        "--n", "--delta", "--trials", "--seed", "--workers", "--out-dir",
        "--p-grid", "--budget-factor", "--write-trajectories", "--help", "-h",
    },
    "verify-qk": {"--k-max", "--delta-max", "--delta-step", "--help", "-h"},
    "phase-diagnostics": {
        "--n", "--delta", "--trials", "--seed", "--workers", "--out-dir",
        "--p", "--regime", "--through", "--slack",
        "--coupling-checks", "--no-coupling-checks", "--help", "-h",
    },
    "calibrate-coupon": {"--n", "--trials", "--seed", "--help", "-h"},
}


def subcommand_flags():
    parser = build_parser()
    subparsers = next(a for a in parser._actions
                      if isinstance(a, type(parser._subparsers._group_actions[0])))
    out = {}
    for name, sp in subparsers.choices.items():
        flags = set()
        for action in sp._actions:
            flags.update(action.option_strings)
        out[name] = flags
    return out


class TestFlagSurface:
    def test_every_documented_flag_is_pinned(self):
        # golden flag surface: any addition or removal must update this table
        assert subcommand_flags() == EXPECTED_FLAGS

    def test_all_flags_have_help_text(self):
        parser = build_parser()
        subparsers = parser._subparsers._group_actions[0]
        for sp in subparsers.choices.values():
            for action in sp._actions:
                assert action.help, f"missing help for {action.option_strings}"


class TestExitCodes:
    def test_verify_qk_passes(self, capsys):
        assert parse_and_dispatch(["verify-qk", "--k-max", "60", "--delta-max", "0.1"]) == 0
        assert "min slack" in capsys.readouterr().out

    def test_single_trial_simulation(self, tmp_path, capsys):
        code = parse_and_dispatch([
            "simulate", "--n", "1", "--p", "0.5", "--delta", "0.1",
            "--trials", "1", "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "trials.csv").exists()
        body = (tmp_path / "trials.csv").read_text().splitlines()
        assert len(body) == 2

    def test_invalid_delta_exits_one(self, capsys):
        code = parse_and_dispatch([
            "simulate", "--n", "10", "--p", "0.5", "--delta", "0.7", "--trials", "1"])
        assert code == 1
        assert "delta" in capsys.readouterr().err

    def test_unknown_flag_exits_one(self, capsys):
        code = parse_and_dispatch(["simulate", "--n", "4", "--delta", "0.1", "--bogus", "1"])
        assert code == 1
        assert capsys.readouterr().err.strip()

    def test_help_exits_zero(self, capsys):
        assert parse_and_dispatch(["--help"]) == 0
        assert "simulate" in capsys.readouterr().out


class TestConfigEcho:
    def test_aggregate_echoes_parsed_flags(self, tmp_path):
        code = parse_and_dispatch([
            "simulate", "--n", "12", "--p", "0.25", "--delta", "0.2",
            "--trials", "3", "--seed", "77", "--workers", "1",
            "--budget-factor", "15", "--out-dir", str(tmp_path),
            "--snapshot-times", "2,5"])
        assert code == 0
        agg = json.loads((tmp_path / "aggregate.json").read_text())
        cfgd = agg["config"]
        assert cfgd["n"] == 12
        assert cfgd["p"] == 0.25
        assert cfgd["delta"] == 0.2
        assert cfgd["trials"] == 3
        assert cfgd["base_seed"] == 77
        assert cfgd["budget_factor"] == 15.0
        assert cfgd["snapshot_times"] == [2, 5]
        assert cfgd["out_dir"] == str(tmp_path)

    def test_out_dir_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MDL_OUT_DIR", str(tmp_path / "envdir"))
        code = parse_and_dispatch([
            "simulate", "--n", "6", "--p", "0.4", "--delta", "0.2", "--trials", "2"])
        assert code == 0
        assert (tmp_path / "envdir" / "trials.csv").exists()


class TestOtherCommands:
    def test_calibrate_coupon(self, capsys):
        code = parse_and_dispatch(["calibrate-coupon", "--n", "300", "--trials", "300"])
        assert code == 0
        assert "coverage time" in capsys.readouterr().out

    def test_sweep_writes_index_and_subdirs(self, tmp_path, capsys):
        code = parse_and_dispatch([
            "sweep", "--n", "20", "--p-grid", "0.1,0.5", "--delta", "0.2",
            "--trials", "4", "--out-dir", str(tmp_path)])
        assert code == 0
        index = json.loads((tmp_path / "sweep_index.json").read_text())
        assert [pt["p"] for pt in index["points"]] == [0.1, 0.5]
        assert (tmp_path / "p_00" / "aggregate.json").exists()
        assert (tmp_path / "p_01" / "trials.csv").exists()

    def test_phase_diagnostics_window_mode(self, capsys):
        code = parse_and_dispatch([
            "phase-diagnostics", "--n", "300", "--p", "0.02", "--delta", "0.1",
            "--trials", "2", "--through", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "phase1_y1" in out

    def test_phase_diagnostics_full_mode(self, tmp_path, capsys):
        code = parse_and_dispatch([
            "phase-diagnostics", "--n", "200", "--p", "0.05", "--delta", "0.2",
            "--trials", "2", "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "phase1_pass" in out
