from dataclasses import dataclass, field

import numpy as np

from core_main.exceptions import ConfigError
from feature_data.domain import APPEARANCE_COLUMNS, CONTEXT_COLUMNS, DESCRIPTOR_COLUMNS, TEMPORAL_COLUMNS, frozen_array
from feature_synth.domain import DescriptorScenarioConfig

EXPERIMENTS = ('context-ablation', 'fewshot-ablation', 'baseline-comparison', 'feature-subsets')
EXPERIMENT_SOURCES = ('synthetic', 'dataset')

# descriptor-level scenario each experiment draws when run on synthetic tables
EXPERIMENT_SCENARIOS = {
    'context-ablation': 'contextual',
    'fewshot-ablation': 'local',
    'baseline-comparison': 'local',
    'feature-subsets': 'contextual',
}

FEATURE_SUBSETS = {
    'contextual-only': CONTEXT_COLUMNS,
    'temporal-only': TEMPORAL_COLUMNS,
    'appearance-only': APPEARANCE_COLUMNS,
    'full': DESCRIPTOR_COLUMNS,
}


@dataclass(frozen=True, eq=False)
class RocCurve:
    """(fpr, tpr) points from (0, 0) to (1, 1), one per distinct score threshold"""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def __post_init__(self):
        object.__setattr__(self, 'fpr', frozen_array(self.fpr))
        object.__setattr__(self, 'tpr', frozen_array(self.tpr))
        object.__setattr__(self, 'thresholds', frozen_array(self.thresholds))


@dataclass(frozen=True, eq=False)
class PcaProjection:
    points: np.ndarray
    explained_variance: np.ndarray
    components: np.ndarray
    mean: np.ndarray


@dataclass(frozen=True, eq=False)
class EvaluationSet:
    """
    Everything needed to train and score one experiment run

    ``features`` and ``object_labels`` cover train and test videos;
    ``frame_labels`` (video, frame, label) lists the test frames scored.
    """

    name: str
    features: object
    object_labels: object
    frame_labels: object


@dataclass(frozen=True)
class GridConfig:
    """Parameter sets swept by the grid search; gamma None is the data-driven default"""

    k1: tuple = (2, 4, 6, 8)
    k2: tuple = (2, 3, 4)
    n: tuple = (0, 20, 40, 60, 80, 100)
    mu: tuple = (0.4, 0.5, 0.6, 0.7, 0.8)
    eta: tuple = (0.5, 0.6, 0.7, 0.8)
    C: tuple = (1.0,)
    gamma: tuple = (None,)

    def __post_init__(self):
        for name in ('k1', 'k2', 'n', 'mu', 'eta', 'C', 'gamma'):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"grid {name} needs at least one value")
            object.__setattr__(self, name, values)
        if min(self.k1) < 1 or min(self.k2) < 0 or min(self.n) < 0:
            raise ConfigError("grid K1 values must be >= 1, K2 and N values >= 0")
        if not all(0 < value < 1 for value in self.mu + self.eta):
            raise ConfigError("grid thresholds must lie in (0, 1)")
        if min(self.C) <= 0 or any(g is not None and g <= 0 for g in self.gamma):
            raise ConfigError("grid C and gamma values must be > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    ``source`` picks descriptor-level synthetic tables (one per seed) or the
    extracted dataset features; ``scatter_samples`` caps each class in PCA
    scatter plots.
    """

    seeds: tuple = (0, 1, 2, 3, 4)
    n_values: tuple = (0, 20, 40, 60, 80, 100)
    source: str = 'synthetic'
    scenario: DescriptorScenarioConfig = field(default_factory=DescriptorScenarioConfig)
    scatter_samples: int = 200

    def __post_init__(self):
        object.__setattr__(self, 'seeds', tuple(self.seeds))
        object.__setattr__(self, 'n_values', tuple(self.n_values))
        if not self.seeds or not self.n_values:
            raise ConfigError("experiments need at least one seed and one N value")
        if min(self.n_values) < 0:
            raise ConfigError("N values must be >= 0")
        if self.source not in EXPERIMENT_SOURCES:
            raise ConfigError(f"experiment source must be one of {EXPERIMENT_SOURCES}")
        if self.scatter_samples < 1:
            raise ConfigError("scatter_samples must be >= 1")


@dataclass(frozen=True)
class EvaluationConfig:
    """`evaluation` section: grid search sets and experiment settings"""

    grid: GridConfig = field(default_factory=GridConfig)
    experiments: ExperimentConfig = field(default_factory=ExperimentConfig)


@dataclass(frozen=True, eq=False)
class GridSearchReport:
    """Evaluated cells, the selected one and the cells skipped as infeasible"""

    table: object
    selected: dict
    seed: int
    skipped: tuple = ()


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """
    Per-seed AUCs (``runs``: variant, seed, auc), long-form plot data
    (``curves``: variant, series, x, y) and rendered SVG charts by file name
    """

    name: str
    runs: object
    curves: object
    charts: dict = field(default_factory=dict)

    def mean_auc(self, variant):
        rows = self.runs[self.runs['variant'] == variant]
        return float(rows['auc'].mean())


@dataclass(frozen=True, eq=False)
class ScoredRun:
    """A model fitted on an evaluation set with its object rows, frame rows (with labels) and ROC"""

    model: object
    objects: object
    frames: object
    roc: RocCurve
