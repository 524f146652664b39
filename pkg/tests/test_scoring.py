import math
from pathlib import Path

import pytest

from reglove.scoring import (
    AdlRecord,
    EmptyTrials,
    MalformedNumber,
    MissingColumn,
    NoScores,
    YcbTrial,
    load_adl_csv,
    load_ycb_csv,
    score_adl,
    score_ycb,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "reglove" / "data"


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- ADL loading -----------------------------------------------------------------

TABLE_HEADER = "Task Category,Specific Task,Human Time (s),ReGlove Time (s),Score (0--3),Failure Rate (%)\n"
PLOT_HEADER = "Tasks,Avg Human Execution Time (s),Avg ReGlove Execution Time (s)\n"


def test_table_dialect_parses(tmp_path):
    path = write(tmp_path, TABLE_HEADER + "Kitchen,Fill water,4.1,9.8,3,0\n")
    records = load_adl_csv(path)
    assert records == [AdlRecord("Kitchen", "Fill water", 4.1, 9.8, 3.0, 0.0)]


def test_single_hyphen_score_header_variant(tmp_path):
    header = TABLE_HEADER.replace("Score (0--3)", "Score (0-3)")
    records = load_adl_csv(write(tmp_path, header + "Kitchen,Fill water,4.1,9.8,2.5,10\n"))
    assert records[0].score == 2.5


def test_plot_dialect_parses(tmp_path):
    path = write(tmp_path, PLOT_HEADER + "Fill water,4.1,9.8\n")
    records = load_adl_csv(path)
    assert records[0].specific_task == "Fill water"
    assert records[0].task_category == ""
    assert records[0].score is None


def test_unknown_columns_ignored(tmp_path):
    path = write(tmp_path, "Tasks,Avg Human Execution Time (s),Avg ReGlove Execution Time (s),Notes\nX,1,2,hello\n")
    assert load_adl_csv(path)[0].reglove_time_s == 2.0


def test_empty_file_is_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_adl_csv(write(tmp_path, ""))


def test_wrong_headers_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_adl_csv(write(tmp_path, "a,b,c\n1,2,3\n"))


def test_score_out_of_range_rejected(tmp_path):
    path = write(tmp_path, TABLE_HEADER + "Kitchen,Fill water,4.1,9.8,3.5,0\n")
    with pytest.raises(MalformedNumber) as err:
        load_adl_csv(path)
    assert err.value.row == 2 and "3.5" in str(err.value)


def test_non_numeric_time_rejected(tmp_path):
    path = write(tmp_path, TABLE_HEADER + "Kitchen,Fill water,fast,9.8,3,0\n")
    with pytest.raises(MalformedNumber):
        load_adl_csv(path)


def test_negative_time_rejected(tmp_path):
    path = write(tmp_path, TABLE_HEADER + "Kitchen,Fill water,-1,9.8,3,0\n")
    with pytest.raises(MalformedNumber):
        load_adl_csv(path)


def test_shipped_sample_has_27_tasks():
    records = load_adl_csv(DATA / "adl_sample.csv")
    assert len(records) == 27
    assert all(r.score is not None and 0 <= r.score <= 3 for r in records)


# --- ADL scoring ------------------------------------------------------------------

def rec(score, human=1.0, reglove=2.0):
    return AdlRecord("", "t", human, reglove, score)


def test_constant_scores():
    result = score_adl([rec(3.0)] * 27)
    assert result["mean_score"] == 3.0
    assert result["std_score"] == 0.0
    assert result["n"] == 27


def test_two_point_population_std():
    result = score_adl([rec(2.0), rec(3.0)])
    assert result["mean_score"] == 2.5
    assert result["std_score"] == 0.5  # population, not sample


def test_time_ratio():
    result = score_adl([rec(3.0, human=2.0, reglove=5.0), rec(3.0, human=4.0, reglove=6.0)])
    assert result["mean_time_ratio"] == pytest.approx((2.5 + 1.5) / 2)


def test_no_scores_raises():
    with pytest.raises(NoScores):
        score_adl([AdlRecord("", "t", 1.0, 2.0, None)])


def test_scoring_matches_independent_formula():
    import random

    rng = random.Random(7)
    for _ in range(100):
        n = rng.randint(1, 40)
        scores = [round(rng.uniform(0, 3), 2) for _ in range(n)]
        result = score_adl([rec(s) for s in scores])
        mean = sum(scores) / n
        var = sum((s - mean) ** 2 for s in scores) / n
        assert result["mean_score"] == pytest.approx(mean, rel=1e-12)
        assert result["std_score"] == pytest.approx(math.sqrt(var), rel=1e-12, abs=1e-12)


def test_ycb_matches_independent_formula():
    import random

    rng = random.Random(11)
    for _ in range(100):
        n = rng.randint(1, 30)
        trials = []
        for i in range(n):
            possible = round(rng.uniform(1, 60), 1)
            awarded = round(rng.uniform(0, possible), 1)
            trials.append(YcbTrial(f"obj-{i}", awarded, possible))
        result = score_ycb(trials)
        awarded_sum = sum(t.points_awarded for t in trials)
        possible_sum = sum(t.points_possible for t in trials)
        assert result["success_rate_pct"] == pytest.approx(
            100.0 * awarded_sum / possible_sum, rel=1e-12
        )


# --- YCB -------------------------------------------------------------------------

def test_paper_point_totals_ratio():
    result = score_ycb([YcbTrial("all", 215.5, 260.5)])
    assert result["success_rate_pct"] == pytest.approx(82.73, abs=0.01)


def test_full_and_zero_points():
    assert score_ycb([YcbTrial("a", 10, 10), YcbTrial("b", 5, 5)])["success_rate_pct"] == 100.0
    assert score_ycb([YcbTrial("a", 0, 10)])["success_rate_pct"] == 0.0


def test_empty_trials():
    with pytest.raises(EmptyTrials):
        score_ycb([])


def test_trial_invariants():
    with pytest.raises(ValueError):
        YcbTrial("bad", 11, 10)
    with pytest.raises(ValueError):
        YcbTrial("bad", 0, 0)


def test_ycb_csv_loading(tmp_path):
    path = write(tmp_path, "Object,Points Awarded,Points Possible\nmug,52,60\n")
    assert load_ycb_csv(path) == [YcbTrial("mug", 52.0, 60.0)]
    with pytest.raises(MalformedNumber):
        load_ycb_csv(write(tmp_path, "Object,Points Awarded,Points Possible\nmug,99,60\n"))


def test_shipped_ycb_sample_reproduces_aggregate():
    result = score_ycb(load_ycb_csv(DATA / "ycb_sample.csv"))
    assert result["points"] == 215.5
    assert result["possible"] == 260.5
    assert result["success_rate_pct"] == pytest.approx(82.7255, abs=0.001)
