import csv
import json
import os

import pytest

from mdplots.cli import run
from mdplots.figures import KINDS, extract_series
from mdplots.io import SchemaError, validate_trials_csv

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
SWEEP = os.path.join(FIXTURES, "sweep")
TIME = os.path.join(FIXTURES, "time_scaling")
COUPLED = os.path.join(FIXTURES, "coupled")

KIND_INPUTS = {
    "consensus_vs_p": SWEEP,
    "time_vs_nlogn": TIME,
    "trajectory": COUPLED,
    "phase_passrates": COUPLED,
}


@pytest.mark.parametrize("kind", KINDS)
def test_all_kinds_render_nonempty(kind, tmp_path):
    out = tmp_path / f"{kind}.png"
    code = run([kind, "--in", KIND_INPUTS[kind], "--out", str(out)])
    assert code == 0
    assert out.stat().st_size > 0


@pytest.mark.parametrize("kind", KINDS)
def test_self_check_reproduces_input_series(kind, tmp_path):
    out = tmp_path / f"{kind}.png"
    dump = tmp_path / f"{kind}.csv"
    code = run([kind, "--in", KIND_INPUTS[kind], "--out", str(out),
                "--dump-series", str(dump)])
    assert code == 0
    with open(dump, newline="") as fh:
        rows = [(r["series"], float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)]
    assert rows == extract_series(kind, KIND_INPUTS[kind])


def test_consensus_series_match_aggregates_exactly():
    series = extract_series("consensus_vs_p", SWEEP)
    by_key = {(name, x): y for name, x, y in series}
    for sub in sorted(os.listdir(SWEEP)):
        agg_path = os.path.join(SWEEP, sub, "aggregate.json")
        if not os.path.exists(agg_path):
            continue
        agg = json.load(open(agg_path))
        p = agg["config"]["resolved_p"]
        assert by_key[("consensus_1", p)] == agg["probabilities"]["consensus_1"]["estimate"]
        assert by_key[("bound_p0", p)] == agg["cascade_bounds"]["p0"]
        assert by_key[("bound_p1", p)] == agg["cascade_bounds"]["p1"]


def test_unanimous_trajectory_monotone():
    # the bundled run converges to all-1: y1 climbs to n and stays there
    series = extract_series("trajectory", COUPLED)
    y1 = [(x, y) for name, x, y in series if name == "y1"]
    assert y1 == sorted(y1)
    assert max(y for _, y in y1) == 200
    tail = [y for _, y in y1][-3:]
    assert all(y == 200 for y in tail)


def test_empty_trials_file_is_named(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / "trials.csv").write_text("")
    (run_dir / "aggregate.json").write_text("{}")
    code = run(["consensus_vs_p", "--in", str(tmp_path), "--out",
                str(tmp_path / "x.png")])
    assert code == 1


def test_missing_column_is_named(tmp_path):
    bad = tmp_path / "trials.csv"
    bad.write_text("trial_id,seed,n\n1,2,3\n")
    with pytest.raises(SchemaError) as err:
        validate_trials_csv(str(bad))
    assert "outcome" in str(err.value)


def test_missing_trajectory_column_is_named(tmp_path):
    bad = tmp_path / "trajectory_0.csv"
    bad.write_text("t,y_perp,y0\n0,5,0\n")
    code = run(["trajectory", "--in", str(tmp_path), "--out", str(tmp_path / "x.png")])
    assert code == 1


def test_missing_input_directory(tmp_path):
    code = run(["consensus_vs_p", "--in", str(tmp_path / "nope"),
                "--out", str(tmp_path / "x.png")])
    assert code == 1


def test_rendering_series_deterministic(tmp_path):
    a = extract_series("consensus_vs_p", SWEEP)
    b = extract_series("consensus_vs_p", SWEEP)
    assert a == b
