import json
import logging
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import yaml
from django.conf import settings
from django.utils import timezone

from core_main.artifacts import atomic_directory, atomic_write_text, config_hash, json_default, sha256_tree
from core_main.domain import DEFAULT_STAGES, STAGES
from core_main.exceptions import ConfigError, MissingArtifactError, PipelineError, StageFailedError
from core_main.models import PipelineRun, StageRun
from core_main.serializers import PipelineConfigSerializer
from core_main.validation import build_from
from feature_autoencoder.services import AutoencoderServices
from feature_data.bundle import BundleServices
from feature_data.dataset import DatasetLayout, VideoDataset
from feature_data.domain import DESCRIPTOR_COLUMNS
from feature_data.services import RecordIOServices
from feature_descriptors.services import DescriptorServices
from feature_eval.domain import EXPERIMENTS
from feature_eval.services import EvaluationServices, ExperimentServices, GridSearchServices
from feature_inference.services import InferenceServices
from feature_synth.services import SynthServices

logger = logging.getLogger(__name__)

AUTOENCODER_ROLES = ('appearance', 'temporal')
VERSIONED_PACKAGES = ('Django', 'numpy', 'scipy', 'pandas', 'scikit-learn', 'torch', 'matplotlib')


def _require(path, stage):
    if not Path(path).exists():
        raise MissingArtifactError(path, stage=stage)
    return Path(path)


def _package_versions():
    versions = {'bundle_format': settings.BUNDLE_FORMAT_VERSION}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = None
    return versions


class PipelineServices:
    """
    Pipeline stages over a PipelineConfig

    Every stage reads its inputs from the config paths unless the caller names
    them explicitly, writes its artifacts atomically and returns their paths.
    """

    @staticmethod
    def load_config(path=None, seed=None):
        """
        Read and validate a pipeline YAML file

        PHASE 1: Parse YAML
        PHASE 2: Validate every section; relative paths resolve against the file's directory
        """
        path = Path(path or settings.DEFAULT_PIPELINE_CONFIG)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")

        # PHASE 1: Parse
        try:
            data = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")

        # PHASE 2: Validate
        config = build_from(PipelineConfigSerializer, data, str(path), context={'base_dir': path.parent, 'seed': seed})
        logger.info("loaded config %s (seed %d, hash %s)", path, config.seed, config_hash(config.echo)[:12])
        return config

    @staticmethod
    def with_outputs(config, outputs):
        """Config with the outputs directory moved (features, scores, reports and manifest follow it)"""
        return replace(config, paths=replace(config.paths, outputs=Path(outputs).resolve()))

    @staticmethod
    def synth(config, out=None):
        if config.synth is None:
            raise ConfigError("synth: the config has no synth section")
        root = Path(out or config.paths.dataset)
        videos = SynthServices.synthesize(config.synth)
        return [SynthServices.write_dataset(videos, root, seed=config.synth.seed)]

    @staticmethod
    def train_ae(config, roles=AUTOENCODER_ROLES, dataset=None, out=None):
        """
        Train the appearance and/or temporal autoencoder on normal training objects

        ``out`` is the bundle root; each role writes its own sub-bundle.
        """
        dataset = VideoDataset(dataset or config.paths.dataset, stage='train_ae')
        cfg = config.autoencoder
        written = []
        for role in roles:
            patches = AutoencoderServices.training_patches(dataset, role, config.flow, cfg.train)
            state = AutoencoderServices.ae_train(AutoencoderServices.ae_init(cfg.spec, cfg.train.seed), patches, cfg.train)
            bundle = AutoencoderServices.to_bundle(state, role, extra={'flow_source': config.flow.source})
            written.append(BundleServices.save(bundle, BundleServices.role_path(out or config.paths.bundles, role)))
        return written

    @staticmethod
    def extract(config, dataset=None, bundles=None, out=None):
        bundles = bundles or config.paths.bundles
        ae_app = AutoencoderServices.from_bundle(BundleServices.load_role(bundles, 'appearance', stage='extract'))
        ae_temp = AutoencoderServices.from_bundle(BundleServices.load_role(bundles, 'temporal', stage='extract'))
        dataset = VideoDataset(dataset or config.paths.dataset, stage='extract')
        table = DescriptorServices.extract_dataset(dataset, ae_app, ae_temp, config.flow, config.features)
        return [RecordIOServices.write_feature_table(out or config.paths.features_csv, table)]

    @staticmethod
    def train_infer(config, features=None, labels=None, out=None):
        """Fit the cluster classifier ensemble on the train split; ``out`` is the inference bundle directory"""
        features = RecordIOServices.load_feature_table(_require(features or config.paths.features_csv, 'train_infer'))
        labels_path = labels or VideoDataset(config.paths.dataset, stage='train_infer').layout.object_labels
        labels = RecordIOServices.load_object_labels(_require(labels_path, 'train_infer'))
        model = InferenceServices.fit_from_tables(features, labels, config.inference, DESCRIPTOR_COLUMNS)
        out = out or BundleServices.role_path(config.paths.bundles, 'inference')
        return [BundleServices.save(InferenceServices.to_bundle(model), out)]

    @staticmethod
    def score(config, bundle=None, features=None, dataset=None, out=None):
        """
        Score every frame into `video,frame,score,verdict` rows

        With a dataset, frames without detections are listed with score 0.
        Without one (none given and none at the configured path) only frames
        holding objects are scored.
        """
        bundle = Path(bundle or BundleServices.role_path(config.paths.bundles, 'inference'))
        _require(bundle / 'manifest.json', 'score')
        model = InferenceServices.from_bundle(BundleServices.load(bundle, kind='inference'))
        features = RecordIOServices.load_feature_table(_require(features or config.paths.features_csv, 'score'))
        root = dataset or config.paths.dataset
        frames = None
        if dataset is not None or DatasetLayout(root).manifest.exists():
            dataset = VideoDataset(root, stage='score')
            frames = [(video.video_id, t) for video in dataset.videos for t in range(video.frame_count)]
        else:
            logger.info("no dataset at %s; scoring only frames that hold objects", root)
        scored = InferenceServices.score_table(model, features, frames)
        return [RecordIOServices.write_scores(out or config.paths.scores_csv, scored)]

    @staticmethod
    def evaluate(config, scores=None, labels=None, dataset=None, out=None, video_id=None):
        """
        Frame AUC of a scores table against frame labels

        Labels come from a label file or from the test videos of a dataset.
        ``out`` receives roc.csv and evaluation.json.
        """
        scores_table = RecordIOServices.load_scores(_require(scores or config.paths.scores_csv, 'evaluate'))
        if labels is not None:
            frame_labels = EvaluationServices.load_frame_labels(_require(labels, 'evaluate'), video_id)
        else:
            frame_labels = EvaluationServices.frame_labels_from_dataset(
                VideoDataset(dataset or config.paths.dataset, stage='evaluate')
            )
        roc, merged = EvaluationServices.evaluate_scores(scores_table, frame_labels)
        tpr, fpr = EvaluationServices.verdict_rates(merged)
        summary = {
            'auc': roc.auc,
            'frames': len(merged),
            'anomalous_frames': int(merged['label'].sum()),
            'verdict_tpr': tpr,
            'verdict_fpr': fpr,
        }
        out = Path(out or config.paths.evaluation_dir)
        with atomic_directory(out) as staging:
            atomic_write_text(staging / 'roc.csv', EvaluationServices.roc_table(roc).to_csv(
                index=False, float_format='%.6f', lineterminator='\n'))
            atomic_write_text(staging / 'evaluation.json', json.dumps(summary, indent=2, sort_keys=True) + '\n')
        logger.info("frame AUC %.4f over %d frames (%d anomalous)", roc.auc, summary['frames'],
                    summary['anomalous_frames'])
        return [out], summary

    @staticmethod
    def _dataset_evaluation_set(config, features, dataset, stage):
        table = RecordIOServices.load_feature_table(_require(features or config.paths.features_csv, stage))
        dataset = VideoDataset(dataset or config.paths.dataset, stage=stage)
        return EvaluationServices.evaluation_set_from_dataset(table, dataset)

    @staticmethod
    def gridsearch(config, features=None, dataset=None, out=None):
        """Grid search over the extracted features; the selection goes next to the CSV"""
        evaluation_set = PipelineServices._dataset_evaluation_set(config, features, dataset, 'gridsearch')
        report = GridSearchServices.grid_search(evaluation_set, config.evaluation.grid, config.inference, config.seed)
        out = Path(out or config.paths.gridsearch_csv)
        return list(GridSearchServices.write_report(report, out, out.with_name(f'{out.stem}_selection.json')))

    @staticmethod
    def experiment(config, name, out=None, features=None, dataset=None):
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; choose one of {', '.join(EXPERIMENTS)}")
        experiments = config.evaluation.experiments
        dataset_set = None
        if experiments.source == 'dataset':
            dataset_set = PipelineServices._dataset_evaluation_set(config, features, dataset, 'experiment')
        report = ExperimentServices.run_experiment(name, config.inference, experiments, dataset_set)
        return [ExperimentServices.write_report(report, out or config.paths.experiments_dir / name)]

    @staticmethod
    def _stage_outputs(config, stage):
        """(sub-stage label, callable) pairs a pipeline stage expands to"""
        if stage == 'evaluate':
            return [(stage, lambda: PipelineServices.evaluate(config)[0])]
        if stage == 'experiment':
            return [
                (stage, lambda name=name: PipelineServices.experiment(config, name)) for name in EXPERIMENTS
            ]
        return [(stage, lambda: getattr(PipelineServices, stage)(config))]

    @staticmethod
    def manifest(config, run, artifacts):
        return {
            'config_hash': config_hash(config.echo),
            'config': config.echo,
            'seed': config.seed,
            'stages': run.stages,
            'status': run.status,
            'versions': _package_versions(),
            'artifacts': artifacts,
        }

    @staticmethod
    def run_pipeline(config, stages=DEFAULT_STAGES):
        """
        Run stages in pipeline order and record them

        PHASE 1: Validate the stage list and open a PipelineRun
        PHASE 2: Run each stage, recording a StageRun per artifact; stop at the first failure
        PHASE 3: Close the run and write run_manifest.json (no timestamps)
        """
        # PHASE 1: Plan
        unknown = [stage for stage in stages if stage not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stages {unknown}; choose from {', '.join(STAGES)}")
        ordered = [stage for stage in STAGES if stage in set(stages)]
        run = PipelineRun.objects.create(
            config_hash=config_hash(config.echo), config=json.loads(json.dumps(config.echo, default=json_default)),
            seed=config.seed, stages=ordered,
        )
        logger.info("pipeline run %d: stages %s", run.pk, ', '.join(ordered))

        # PHASE 2: Stages
        artifacts, failure = [], None
        for stage in ordered:
            try:
                for label, action in PipelineServices._stage_outputs(config, stage):
                    logger.info("stage %s started", label)
                    for path in action():
                        digest = sha256_tree(path)
                        StageRun.objects.create(
                            run=run, stage=label, status='succeeded', artifact_path=str(path), artifact_sha256=digest
                        )
                        artifacts.append({'stage': label, 'path': config.paths.relative(path), 'sha256': digest})
                        logger.info("stage %s wrote %s (sha256 %s)", label, path, digest[:12])
            except PipelineError as exc:
                StageRun.objects.create(run=run, stage=stage, status='failed', message=str(exc))
                logger.error("stage %s failed: %s", stage, exc)
                failure = (stage, exc)
                break

        # PHASE 3: Close
        run.status = 'failed' if failure else 'succeeded'
        run.finished_at = timezone.now()
        run.save(update_fields=['status', 'finished_at'])
        atomic_write_text(
            config.paths.manifest,
            json.dumps(PipelineServices.manifest(config, run, artifacts), indent=2, sort_keys=True,
                       default=json_default) + '\n',
        )
        if failure:
            stage, exc = failure
            raise StageFailedError(stage, exc) from exc
        return run

