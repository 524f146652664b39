import numpy as np
import pytest

from reglove.grasps import GraspType
from reglove.perception import (
    ClassifierOutput,
    ConfusionClassifier,
    ConfusionMatrix,
    InvalidMatrix,
    LatencyModel,
    SceneObject,
    StubClassifier,
    default_confusion_matrix,
    frame_wait,
    sample_frame_wait,
    sample_stages,
    truncated_gaussian,
)

MODEL = LatencyModel()


def obj(grasp=GraspType.POWER):
    return SceneObject(name="mug", true_grasp=grasp)


# --- confusion matrix ---------------------------------------------------------

def test_default_matrix_rows_sum_to_one_exactly():
    m = default_confusion_matrix().as_array()
    assert all(s == 1.0 for s in m.sum(axis=1))


def test_default_matrix_mean_diagonal():
    assert default_confusion_matrix().mean_diagonal() == pytest.approx(0.967, abs=1e-12)


def test_default_matrix_dominant_confusion_is_pinch_three_jaw():
    m = default_confusion_matrix().as_array()
    off = m - np.diag(np.diag(m))
    i, j = np.unravel_index(np.argmax(off), off.shape)
    assert {GraspType(int(i)), GraspType(int(j))} == {GraspType.PINCH, GraspType.THREE_JAW_CHUCK}
    assert m[GraspType.PINCH, GraspType.THREE_JAW_CHUCK] == pytest.approx(0.040)
    assert m[GraspType.THREE_JAW_CHUCK, GraspType.PINCH] == pytest.approx(0.040)


def test_matrix_rejects_non_stochastic_rows():
    rows = np.eye(5)
    rows[2, 2] = 0.9
    with pytest.raises(InvalidMatrix):
        ConfusionMatrix(rows)
    with pytest.raises(InvalidMatrix):
        ConfusionMatrix(np.full((5, 5), 0.2) * -1)
    with pytest.raises(InvalidMatrix):
        ConfusionMatrix(np.eye(4))


def test_matrix_csv_round_trip(tmp_path):
    path = tmp_path / "matrix.csv"
    default_confusion_matrix().to_csv(path)
    loaded = ConfusionMatrix.from_csv(path)
    assert np.array_equal(loaded.as_array(), default_confusion_matrix().as_array())


# --- classifiers ---------------------------------------------------------------

def test_stub_returns_truth_with_full_confidence():
    out = StubClassifier().classify(obj(GraspType.TOOL))
    assert out == ClassifierOutput(GraspType.TOOL, 1.0, MODEL.inference_mean_ms)


def test_identity_matrix_never_confuses():
    clf = ConfusionClassifier(ConfusionMatrix.identity(), seed=1)
    for g in GraspType:
        for _ in range(2000):
            assert clf.classify(obj(g)).predicted is g


def test_confusion_sampling_is_seed_deterministic():
    a = ConfusionClassifier(default_confusion_matrix(), seed=99)
    b = ConfusionClassifier(default_confusion_matrix(), seed=99)
    objs = [obj(GraspType(i % 5)) for i in range(500)]
    assert [a.classify(o) for o in objs] == [b.classify(o) for o in objs]


def test_confidence_is_matrix_entry():
    m = default_confusion_matrix()
    clf = ConfusionClassifier(m, seed=7)
    for _ in range(200):
        out = clf.classify(obj(GraspType.PINCH))
        assert out.confidence == m[GraspType.PINCH, out.predicted]


def test_per_class_accuracy_tracks_the_diagonal():
    m = default_confusion_matrix()
    clf = ConfusionClassifier(m, seed=2024)
    n = 20_000
    for g in GraspType:
        hits = sum(clf.classify(obj(g)).predicted is g for _ in range(n))
        assert hits / n == pytest.approx(m[g, g], abs=0.01)  # 3-sigma binomial bound


def test_overall_accuracy_uniform_classes():
    clf = ConfusionClassifier(default_confusion_matrix(), seed=5)
    n = 100_000
    hits = 0
    for i in range(n):
        g = GraspType(i % 5)
        hits += clf.classify(obj(g)).predicted is g
    assert hits / n == pytest.approx(0.967, abs=0.005)


def test_inference_latency_distribution():
    clf = ConfusionClassifier(default_confusion_matrix(), seed=11)
    samples = [clf.classify(obj()).inference_latency_ms for _ in range(10_000)]
    assert all(s > 0 for s in samples)
    assert np.mean(samples) == pytest.approx(0.90, abs=0.02)
    assert np.std(samples) == pytest.approx(0.15, abs=0.02)


# --- latency model ---------------------------------------------------------------

def test_latency_model_validation():
    MODEL.validate()
    with pytest.raises(ValueError):
        LatencyModel(frame_period_ms=0).validate()
    with pytest.raises(ValueError):
        LatencyModel(capture_transfer_sigma_ms=-1).validate()


def test_truncated_gaussian_positive():
    rng = np.random.default_rng(0)
    assert all(truncated_gaussian(rng, 0.5, 1.0) > 0 for _ in range(5000))
    assert truncated_gaussian(rng, 3.0, 0.0) == 3.0


def test_frame_wait_phase_formula():
    assert frame_wait(0.0, MODEL) == 0.0
    assert frame_wait(33.33, MODEL) == pytest.approx(0.0, abs=1e-9)
    assert frame_wait(33.33 / 2, MODEL) == pytest.approx(33.33 / 2)
    assert frame_wait(100.0, MODEL) == pytest.approx(33.33 - (100.0 % 33.33))


def test_frame_wait_always_within_period():
    for t in np.linspace(0, 1000, 3000):
        w = frame_wait(float(t), MODEL)
        assert 0 <= w < MODEL.frame_period_ms


def test_uniform_phase_wait_mean():
    rng = np.random.default_rng(123)
    waits = [sample_frame_wait(rng, MODEL) for _ in range(100_000)]
    assert np.mean(waits) == pytest.approx(16.67, abs=0.2)
    assert all(0 <= w < MODEL.frame_period_ms for w in waits)


def test_stage_sample_decomposition():
    rng = np.random.default_rng(77)
    totals, inferences = [], []
    for _ in range(10_000):
        s = sample_stages(rng, MODEL)
        assert s.host_total_ms == (
            s.frame_wait_ms + s.capture_transfer_ms + s.preprocess_infer_ms + s.decision_protocol_ms
        )
        assert s.inference_ms <= s.preprocess_infer_ms
        totals.append(s.host_total_ms)
        inferences.append(s.inference_ms)
    assert np.mean(totals) == pytest.approx(38.0, abs=0.5)
    assert np.mean(inferences) == pytest.approx(0.90, abs=0.02)


def test_deterministic_frame_wait_used_when_trigger_time_given():
    rng = np.random.default_rng(1)
    s = sample_stages(rng, MODEL, trigger_time_ms=10.0)
    assert s.frame_wait_ms == pytest.approx(frame_wait(10.0, MODEL))
