"""
Inference types: configuration, fitted parts of the classifier ensemble and
per-object / per-frame verdicts.

Fitted parameters are rounded to float32 when they are created, so a model
scores the same before and after a bundle round trip.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from core_main.exceptions import ConfigError, DimensionMismatchError
from feature_data.domain import DESCRIPTOR_COLUMNS, frozen_array
from feature_inference.kmeans import nearest_center
from feature_inference.svm import kernel_matrix

KERNELS = ('linear', 'rbf')
VERDICTS = ('normal', 'anomalous', 'unknown')
MODES = ('ensemble', 'baseline')
# calibrated probabilities are kept strictly inside (0, 1)
PROBABILITY_FLOOR = 1e-9


def float32_array(values):
    return frozen_array(np.asarray(values, dtype=np.float32), np.float64)


def float32_scalar(value):
    return float(np.float32(value))


@dataclass(frozen=True)
class SvmParams:
    """
    Soft-margin SVM hyperparameters

    ``gamma`` None means 1 / (d * variance) of the standardized training data.
    """

    kernel: str = 'rbf'
    C: float = 1.0
    gamma: float = None
    tol: float = 1e-3
    max_iter: int = 200000

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.C > 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("tol must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class InferenceConfig:
    """
    ``k1`` normal and ``k2`` anomalous clusters, thresholds ``mu`` (normal)
    and ``eta`` (anomalous). ``k2 == 0`` trains on normal samples only.
    ``normal_samples`` / ``anomalous_samples`` cap how many labelled training
    objects are drawn (None: all of them).
    """

    k1: int = 4
    k2: int = 3
    mu: float = 0.5
    eta: float = 0.5
    svm: SvmParams = field(default_factory=SvmParams)
    seed: int = 0
    n_init: int = 10
    normal_samples: int = 300
    anomalous_samples: int = 60
    baseline_clusters: int = 5

    def __post_init__(self):
        if self.k1 < 1:
            raise ConfigError(f"k1 must be >= 1, got {self.k1}")
        if self.k2 < 0:
            raise ConfigError(f"k2 must be >= 0, got {self.k2}")
        for name in ('mu', 'eta'):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if self.n_init < 1 or self.baseline_clusters < 2:
            raise ConfigError("n_init must be >= 1 and baseline_clusters >= 2")
        for name in ('normal_samples', 'anomalous_samples'):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")

    @property
    def is_baseline(self):
        return self.k2 == 0


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'mean', float32_array(self.mean))
        object.__setattr__(self, 'scale', float32_array(self.scale))

    @property
    def dimension(self):
        return self.mean.shape[0]

    def apply(self, descriptors):
        descriptors = np.asarray(descriptors, dtype=np.float64)
        if descriptors.shape[-1] != self.dimension:
            raise DimensionMismatchError(
                f"descriptor has {descriptors.shape[-1]} entries, the model expects {self.dimension}"
            )
        return (descriptors - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """K centres; samples belong to the nearest centre (Euclidean)"""

    centers: np.ndarray
    inertia: float = 0.0

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or not np.isfinite(centers).all():
            raise ConfigError("cluster centres must be a finite (k, d) array")
        object.__setattr__(self, 'centers', float32_array(centers))

    @property
    def k(self):
        return self.centers.shape[0]

    def assign(self, samples):
        return nearest_center(np.asarray(samples, dtype=np.float64), self.centers)[0]


@dataclass(frozen=True, eq=False)
class CalibratedSvm:
    """
    Kernel expansion f(x) = sum_i coef_i K(sv_i, x) + bias, mapped to a
    probability by the Platt sigmoid 1 / (1 + exp(A f + B))
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    kernel: str
    gamma: float
    platt_a: float = -1.0
    platt_b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'support_vectors', float32_array(np.atleast_2d(self.support_vectors)))
        object.__setattr__(self, 'dual_coef', float32_array(self.dual_coef))
        for name in ('bias', 'gamma', 'platt_a', 'platt_b'):
            object.__setattr__(self, name, float32_scalar(getattr(self, name)))
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.support_vectors.shape[0] != self.dual_coef.shape[0]:
            raise ConfigError("support vectors and dual coefficients disagree in count")

    def decision_function(self, samples):
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatchError(
                f"descriptor has {samples.shape[1]} entries, the classifier expects {self.support_vectors.shape[1]}"
            )
        return kernel_matrix(samples, self.support_vectors, self.kernel, self.gamma) @ self.dual_coef + self.bias

    def probability(self, samples):
        margin = self.decision_function(samples)
        p = expit(-(self.platt_a * margin + self.platt_b))
        return np.clip(p, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)


@dataclass(frozen=True, eq=False)
class InferenceModel:
    """
    Fitted ensemble: standardizer, cluster centres per pool and one calibrated
    one-vs-rest classifier per cluster (normal clusters first)

    ``columns`` names the feature-table columns the model was fitted on.
    """

    config: InferenceConfig
    standardizer: Standardizer
    normal_clusters: ClusterModel
    anomalous_clusters: ClusterModel
    classifiers: tuple
    columns: tuple = DESCRIPTOR_COLUMNS
    mode: str = 'ensemble'

    def __post_init__(self):
        object.__setattr__(self, 'classifiers', tuple(self.classifiers))
        object.__setattr__(self, 'columns', tuple(self.columns))
        if self.mode not in MODES:
            raise ConfigError(f"unknown model mode {self.mode!r}")
        if len(self.columns) != self.standardizer.dimension:
            raise DimensionMismatchError(
                f"{len(self.columns)} column names for a {self.standardizer.dimension}-dimensional model"
            )
        if len(self.classifiers) != self.k1 + self.k2:
            raise ConfigError(f"expected {self.k1 + self.k2} classifiers, got {len(self.classifiers)}")

    @property
    def k1(self):
        return self.normal_clusters.k

    @property
    def k2(self):
        return 0 if self.anomalous_clusters is None else self.anomalous_clusters.k


@dataclass(frozen=True)
class ObjectVerdict:
    alpha: float
    beta: float
    label: str
    score: float

    @property
    def alarm(self):
        return self.label != 'normal'


@dataclass(frozen=True)
class ScoredFrame:
    video_id: str
    frame_index: int
    score: float
    verdict: str
    object_count: int = 0
