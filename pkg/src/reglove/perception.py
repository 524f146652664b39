"""Host-side perception stage: pluggable grasp classifier plus stage-latency models.

No real inference happens here. The system-level behavior of the vision
pipeline reduces to (predicted class, confidence, latency); a deterministic
stub and a confusion-matrix sampler cover both the nominal and the
mispredict-then-override flows.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grasps import GraspType

_ROW_SUM_TOL = 1e-9


class InvalidMatrix(ValueError):
    """A confusion matrix row failed stochasticity."""


@dataclass(frozen=True)
class SceneObject:
    name: str
    true_grasp: GraspType
    scale_ambiguous: bool = False


@dataclass(frozen=True)
class ClassifierOutput:
    predicted: GraspType
    confidence: float
    inference_latency_ms: float


class ConfusionMatrix:
    """5x5 row-stochastic matrix, rows = true class, columns = predicted."""

    def __init__(self, rows) -> None:
        m = np.asarray(rows, dtype=float)
        if m.shape != (5, 5):
            raise InvalidMatrix(f"expected a 5x5 matrix, got {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise InvalidMatrix("entries must lie in [0,1]")
        sums = m.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > _ROW_SUM_TOL)[0]
        if bad.size:
            raise InvalidMatrix(f"rows {bad.tolist()} do not sum to 1 (sums {sums[bad].tolist()})")
        self._m = m
        self._row_cum = np.cumsum(m, axis=1)
        self._row_cum[:, -1] = 1.0  # guard the top bin against rounding

    def __getitem__(self, key) -> float:
        true, pred = key
        return float(self._m[int(true), int(pred)])

    def row(self, true: GraspType) -> np.ndarray:
        return self._m[int(true)].copy()

    def as_array(self) -> np.ndarray:
        return self._m.copy()

    def mean_diagonal(self) -> float:
        return float(np.trace(self._m) / 5.0)

    @classmethod
    def identity(cls) -> "ConfusionMatrix":
        return cls(np.eye(5))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ConfusionMatrix":
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(x) for x in line.split(",")])
        return cls(rows)

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join(",".join(repr(float(v)) for v in row) for row in self._m) + "\n"
        )


def default_confusion_matrix() -> ConfusionMatrix:
    """Calibrated default: 96.7% mean diagonal with the dominant confusion
    between the geometrically similar pinch and three-jaw chuck classes."""
    return ConfusionMatrix(
        [
            [0.950, 0.004, 0.040, 0.003, 0.003],  # pinch
            [0.005, 0.975, 0.005, 0.010, 0.005],  # power
            [0.040, 0.004, 0.950, 0.003, 0.003],  # three-jaw chuck
            [0.005, 0.010, 0.005, 0.975, 0.005],  # tool
            [0.005, 0.004, 0.003, 0.003, 0.985],  # key
        ]
    )


@dataclass(frozen=True)
class LatencyModel:
    """Stage latencies for the trigger -> actuation pipeline, in ms.

    Stages are truncated-at-zero Gaussians; the free-running camera makes
    the frame wait uniform over one frame period. preprocess_infer includes
    the inference time as a sub-component.
    """

    frame_period_ms: float = 33.33
    capture_transfer_mean_ms: float = 17.6
    capture_transfer_sigma_ms: float = 2.0
    preprocess_infer_mean_ms: float = 1.5
    preprocess_infer_sigma_ms: float = 0.3
    inference_mean_ms: float = 0.9
    inference_sigma_ms: float = 0.15
    decision_protocol_mean_ms: float = 2.2
    decision_protocol_sigma_ms: float = 0.5

    def validate(self) -> None:
        means = (
            self.frame_period_ms,
            self.capture_transfer_mean_ms,
            self.preprocess_infer_mean_ms,
            self.inference_mean_ms,
            self.decision_protocol_mean_ms,
        )
        sigmas = (
            self.capture_transfer_sigma_ms,
            self.preprocess_infer_sigma_ms,
            self.inference_sigma_ms,
            self.decision_protocol_sigma_ms,
        )
        if any(m <= 0 for m in means) or any(s < 0 for s in sigmas):
            raise ValueError("latency means must be > 0 and sigmas >= 0")


def truncated_gaussian(rng: np.random.Generator, mean: float, sigma: float) -> float:
    """Positive Gaussian sample; resamples the (negligible) negative tail."""
    if sigma == 0:
        return mean
    for _ in range(100):
        x = rng.normal(mean, sigma)
        if x > 0:
            return float(x)
    return mean  # distribution is pathological; fall back to the mean


def frame_wait(trigger_time_ms: float, model: LatencyModel) -> float:
    """Time from a trigger to the next frame boundary of the free-running camera."""
    period = model.frame_period_ms
    return (period - (trigger_time_ms % period)) % period


def sample_frame_wait(rng: np.random.Generator, model: LatencyModel) -> float:
    """Stochastic-mode frame wait: trigger phase uniform over one period."""
    return float(rng.uniform(0.0, model.frame_period_ms))


@dataclass(frozen=True)
class StageSample:
    frame_wait_ms: float
    capture_transfer_ms: float
    preprocess_infer_ms: float
    inference_ms: float
    decision_protocol_ms: float

    @property
    def host_total_ms(self) -> float:
        return (
            self.frame_wait_ms
            + self.capture_transfer_ms
            + self.preprocess_infer_ms
            + self.decision_protocol_ms
        )


def sample_stages(
    rng: np.random.Generator,
    model: LatencyModel,
    trigger_time_ms: float | None = None,
    inference_ms: float | None = None,
) -> StageSample:
    """Draw one pipeline latency decomposition. With a trigger time the frame
    wait is the deterministic phase formula; otherwise uniform phase. An
    externally measured inference time (the classifier's own draw) can be
    injected so the preprocess_infer stage contains exactly that sample."""
    if trigger_time_ms is None:
        fw = sample_frame_wait(rng, model)
    else:
        fw = frame_wait(trigger_time_ms, model)
    ct = truncated_gaussian(rng, model.capture_transfer_mean_ms, model.capture_transfer_sigma_ms)
    if inference_ms is None:
        inference = truncated_gaussian(rng, model.inference_mean_ms, model.inference_sigma_ms)
    else:
        inference = inference_ms
    rest_mean = model.preprocess_infer_mean_ms - model.inference_mean_ms
    rest_sigma_sq = model.preprocess_infer_sigma_ms**2 - model.inference_sigma_ms**2
    rest = truncated_gaussian(rng, rest_mean, max(0.0, rest_sigma_sq) ** 0.5)
    dp = truncated_gaussian(rng, model.decision_protocol_mean_ms, model.decision_protocol_sigma_ms)
    return StageSample(
        frame_wait_ms=fw,
        capture_transfer_ms=ct,
        preprocess_infer_ms=rest + inference,
        inference_ms=inference,
        decision_protocol_ms=dp,
    )


class StubClassifier:
    """Deterministic identity classifier: always the true grasp, confidence 1."""

    def __init__(self, model: LatencyModel | None = None) -> None:
        self.model = model or LatencyModel()

    def classify(self, obj: SceneObject) -> ClassifierOutput:
        return ClassifierOutput(
            predicted=obj.true_grasp,
            confidence=1.0,
            inference_latency_ms=self.model.inference_mean_ms,
        )


class ConfusionClassifier:
    """Samples predictions from the true-class row of a confusion matrix.

    Owns its generator: a given seed always reproduces the same prediction
    sequence regardless of what else the caller samples.
    """

    def __init__(self, matrix: ConfusionMatrix, seed, model: LatencyModel | None = None) -> None:
        self.matrix = matrix
        self.model = model or LatencyModel()
        self.rng = np.random.default_rng(seed)

    def classify(self, obj: SceneObject) -> ClassifierOutput:
        # Inverse-CDF draw over the true-class row.
        cum = self.matrix._row_cum[int(obj.true_grasp)]
        predicted = GraspType(int(np.searchsorted(cum, self.rng.random(), side="right")))
        return ClassifierOutput(
            predicted=predicted,
            confidence=self.matrix[obj.true_grasp, predicted],
            inference_latency_ms=truncated_gaussian(
                self.rng, self.model.inference_mean_ms, self.model.inference_sigma_ms
            ),
        )


Classifier = StubClassifier | ConfusionClassifier
