from dataclasses import dataclass, field
from pathlib import Path

from feature_autoencoder.domain import AutoencoderConfig
from feature_descriptors.domain import FeaturesConfig
from feature_eval.domain import EvaluationConfig
from feature_flow.domain import FlowConfig
from feature_inference.domain import InferenceConfig

STAGES = ('synth', 'train_ae', 'extract', 'train_infer', 'score', 'evaluate', 'gridsearch', 'experiment')
DEFAULT_STAGES = ('synth', 'train_ae', 'extract', 'train_infer', 'score', 'evaluate')


@dataclass(frozen=True)
class PathsConfig:
    """
    Artifact locations, absolute once the config is loaded

    ``base`` is the config file's directory; the run manifest records paths
    relative to it.
    """

    dataset: Path
    bundles: Path
    outputs: Path
    base: Path

    @property
    def features_csv(self):
        return self.outputs / 'features.csv'

    @property
    def scores_csv(self):
        return self.outputs / 'scores.csv'

    @property
    def evaluation_dir(self):
        return self.outputs / 'evaluation'

    @property
    def gridsearch_csv(self):
        return self.outputs / 'gridsearch.csv'

    @property
    def experiments_dir(self):
        return self.outputs / 'experiments'

    @property
    def manifest(self):
        return self.outputs / 'run_manifest.json'

    def relative(self, path):
        path = Path(path)
        try:
            return path.relative_to(self.base).as_posix()
        except ValueError:
            return path.as_posix()


@dataclass(frozen=True)
class PipelineConfig:
    """
    Validated pipeline config; ``echo`` is the normalized input the config
    hash and the run manifest are computed from
    """

    seed: int
    paths: PathsConfig
    synth: object = None
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    echo: dict = field(default_factory=dict, compare=False)
