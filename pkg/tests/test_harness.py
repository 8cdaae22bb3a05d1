import json
import math
import os

import numpy as np
import pytest

from mdlab.harness import (
    ExperimentConfig,
    TRIALS_CSV_COLUMNS,
    aggregate,
    load_trials,
    run_trials,
    wilson_interval,
    write_results,
)


class TestWilsonInterval:
    def test_boundaries(self):
        lo, _ = wilson_interval(0, 10, 1.96)
        _, hi = wilson_interval(10, 10, 1.96)
        assert lo == 0.0
        assert hi == 1.0

    def test_half_and_half(self):
        # closed-form evaluation at p-hat = 0.5, n = 100, z = 1.96
        lo, hi = wilson_interval(50, 100, 1.96)
        assert lo == pytest.approx(0.4038, abs=2e-4)
        assert hi == pytest.approx(0.5962, abs=2e-4)

    def test_matches_direct_formula(self):
        for s, n, z in ((3, 17, 1.96), (120, 400, 3.0), (1, 2, 1.0)):
            phat = s / n
            denom = 1 + z * z / n
            center = (phat + z * z / (2 * n)) / denom
            half = z / denom * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
            lo, hi = wilson_interval(s, n, z)
            assert lo == pytest.approx(max(0.0, center - half), abs=1e-12)
            assert hi == pytest.approx(min(1.0, center + half), abs=1e-12)

    def test_rejects_invalid(self):
        with pytest.raises(ValueError):
            wilson_interval(5, 4)
        with pytest.raises(ValueError):
            wilson_interval(-1, 4)
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


class TestConfigValidation:
    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            ExperimentConfig(n=5, delta=0.7, trials=1, p=0.5).validate()

    def test_requires_p_or_regime(self):
        with pytest.raises(ValueError):
            ExperimentConfig(n=5, delta=0.1, trials=1).validate()

    def test_regime_presets(self):
        n = 3000
        assert ExperimentConfig(n=n, delta=0.1, trials=1, regime="dense").resolved_p() == 0.5
        assert ExperimentConfig(n=n, delta=0.1, trials=1, regime="sparse").resolved_p() == \
            pytest.approx(math.log(n) ** 2 / n)
        assert ExperimentConfig(n=n, delta=0.1, trials=1, regime="very_sparse").resolved_p() == \
            pytest.approx((math.log(n) + 5) / n)

    def test_explicit_p_overrides_regime(self):
        cfg = ExperimentConfig(n=100, delta=0.1, trials=1, regime="dense", p=0.25)
        assert cfg.resolved_p() == 0.25


class TestRunTrials:
    def test_single_node_single_trial(self, tmp_path):
        cfg = ExperimentConfig(n=1, delta=0.1, trials=1, p=0.5, base_seed=3,
                               out_dir=str(tmp_path))
        stats = run_trials(cfg)
        rows = load_trials(tmp_path / "trials.csv")
        assert len(rows) == 1
        assert rows[0]["t_hat"] == 1
        assert rows[0]["outcome"] in ("consensus_0", "consensus_1")
        assert stats.outcome_counts[rows[0]["outcome"]] == 1

    @staticmethod
    def _agg_without_run_paths(path):
        agg = json.loads(path.read_text())
        agg["config"].pop("out_dir")
        return agg

    def test_byte_identical_rerun(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            cfg = ExperimentConfig(n=40, delta=0.2, trials=15, p=0.15, base_seed=9,
                                   out_dir=str(d))
            run_trials(cfg)
        assert (d1 / "trials.csv").read_bytes() == (d2 / "trials.csv").read_bytes()
        assert self._agg_without_run_paths(d1 / "aggregate.json") == \
            self._agg_without_run_paths(d2 / "aggregate.json")

    def test_parallel_equals_serial(self, tmp_path):
        d1, d2 = tmp_path / "serial", tmp_path / "par"
        for d, workers in ((d1, 1), (d2, 3)):
            cfg = ExperimentConfig(n=40, delta=0.2, trials=12, p=0.15, base_seed=10,
                                   out_dir=str(d), workers=workers)
            run_trials(cfg)
        assert (d1 / "trials.csv").read_bytes() == (d2 / "trials.csv").read_bytes()
        a = self._agg_without_run_paths(d1 / "aggregate.json")
        b = self._agg_without_run_paths(d2 / "aggregate.json")
        a["config"].pop("workers")
        b["config"].pop("workers")
        assert a == b

    def test_trial_permutation_leaves_aggregate_unchanged(self):
        cfg = ExperimentConfig(n=30, delta=0.2, trials=10, p=0.2, base_seed=11)
        stats = run_trials(cfg)
        rows = list(stats.rows)
        rng = np.random.default_rng(0)
        rng.shuffle(rows)
        again = aggregate(cfg, rows)
        assert again.to_json_dict() == stats.to_json_dict()

    def test_outcome_counts_sum_to_trials(self):
        cfg = ExperimentConfig(n=25, delta=0.15, trials=17, p=0.3, base_seed=12)
        stats = run_trials(cfg)
        assert sum(stats.outcome_counts.values()) == 17

    def test_connected_only_resamples(self):
        cfg = ExperimentConfig(n=12, delta=0.2, trials=30, p=0.12, base_seed=13,
                               connected_only=True)
        stats = run_trials(cfg)
        assert all(r.outcome != "mixed_stable" or r.y1_final + r.y0_final == 12
                   for r in stats.rows)
        assert any(r.attempts > 1 for r in stats.rows)  # p low enough to reject some

    def test_adding_trials_preserves_earlier_rows(self, tmp_path):
        d1, d2 = tmp_path / "small", tmp_path / "big"
        cfg1 = ExperimentConfig(n=30, delta=0.2, trials=5, p=0.2, base_seed=14, out_dir=str(d1))
        cfg2 = ExperimentConfig(n=30, delta=0.2, trials=9, p=0.2, base_seed=14, out_dir=str(d2))
        run_trials(cfg1)
        run_trials(cfg2)
        small = (d1 / "trials.csv").read_text().splitlines()
        big = (d2 / "trials.csv").read_text().splitlines()
        assert big[:len(small)] == small


class TestWriteResults:
    def test_csv_schema_and_round_trip(self, tmp_path):
        cfg = ExperimentConfig(n=20, delta=0.2, trials=6, p=0.3, base_seed=15,
                               out_dir=str(tmp_path))
        stats = run_trials(cfg)
        header = (tmp_path / "trials.csv").read_text().splitlines()[0]
        assert header == ",".join(TRIALS_CSV_COLUMNS)
        rows = load_trials(tmp_path / "trials.csv")
        assert [r["trial_id"] for r in rows] == list(range(6))
        counts = {}
        for r in rows:
            counts[r["outcome"]] = counts.get(r["outcome"], 0) + 1
        for k, v in counts.items():
            assert stats.outcome_counts[k] == v

    def test_aggregate_contents(self, tmp_path):
        cfg = ExperimentConfig(n=20, delta=0.2, trials=6, p=0.3, base_seed=16,
                               out_dir=str(tmp_path))
        run_trials(cfg)
        agg = json.loads((tmp_path / "aggregate.json").read_text())
        assert agg["trials"] == 6
        assert set(agg["outcome_counts"]) == {
            "consensus_1", "consensus_0", "mixed_stable", "step_budget_exhausted"}
        prob = agg["probabilities"]["consensus_1"]
        assert 0.0 <= prob["wilson95"][0] <= prob["estimate"] <= prob["wilson95"][1] <= 1.0
        assert prob["wilson3sigma"][0] <= prob["wilson95"][0]
        assert agg["config"]["n"] == 20
        assert agg["config"]["resolved_p"] == 0.3
        p0, p1 = agg["cascade_bounds"]["p0"], agg["cascade_bounds"]["p1"]
        assert p0 == pytest.approx(0.3 * 0.3 ** (1 / 0.3))
        assert p1 == pytest.approx(0.7 * 0.3 ** (1 / 0.3))

    def test_trajectory_files(self, tmp_path):
        cfg = ExperimentConfig(n=20, delta=0.2, trials=2, p=0.3, base_seed=17,
                               out_dir=str(tmp_path), write_trajectories=True,
                               trajectory_stride=5)
        run_trials(cfg)
        path = tmp_path / "trajectory_0.csv"
        assert path.exists()
        lines = path.read_text().splitlines()
        assert lines[0] == "t,y_perp,y0,y1,z_qmark"
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "20"
        assert first[4] == ""  # no shadow columns without coupling

    def test_load_rejects_wrong_schema(self, tmp_path):
        bad = tmp_path / "trials.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            load_trials(bad)


class TestGoldenSchema:
    def test_fixed_seed_run_matches_frozen_bytes(self, tmp_path):
        # frozen after the first verified run; guards the on-disk schema
        cfg = ExperimentConfig(n=8, delta=0.25, trials=3, p=0.5, base_seed=20260101,
                               out_dir=str(tmp_path))
        run_trials(cfg)
        golden = os.path.join(os.path.dirname(__file__), "data", "golden_trials.csv")
        assert (tmp_path / "trials.csv").read_bytes() == open(golden, "rb").read()
