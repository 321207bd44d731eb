import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from core_main.artifacts import atomic_directory, atomic_write_text, config_hash, sha256_tree
from core_main.exceptions import ConfigError, MissingArtifactError, StageFailedError
from core_main.models import PipelineRun, StageRun
from core_main.services import PipelineServices
from feature_data.bundle import BundleServices
from feature_data.domain import DESCRIPTOR_COLUMNS
from feature_data.services import RecordIOServices
from feature_inference.domain import InferenceConfig
from feature_inference.services import InferenceServices

FIXTURE_CONFIG = settings.BASE_DIR / 'config' / 'fixture.yaml'

# only contextual anomalies, so context is what separates them
CONTEXTUAL_CONFIG = """\
seed: 3
synth:
  preset:
    train_videos: 4
    test_videos: 4
    width: 64
    height: 64
    frames: 16
    vehicles: 3
    pedestrians: 3
    anomalies_per_video: 1
    anomaly_types: [pedestrian-on-road, vehicle-off-road]
flow:
  source: ground_truth
autoencoder:
  input_size: 8
  encoder_widths: [4, 8]
  decoder_widths: [4]
  batch_size: 32
  epochs: 1
  max_patches: 60
  augmentation:
    enabled: false
inference:
  k1: 2
  k2: 1
  normal_samples: 200
  anomalous_samples: null
  n_init: 3
evaluation:
  experiments:
    source: dataset
    seeds: [0, 1, 2]
    scatter_samples: 40
"""


class WorkspaceMixin:
    """A temporary directory holding a copy of the fixture config"""

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def workspace(self, name='run', text=None):
        root = self.tmp / name
        root.mkdir()
        path = root / 'config.yaml'
        if text is None:
            shutil.copyfile(FIXTURE_CONFIG, path)
        else:
            path.write_text(text, encoding='utf-8')
        return path


class PipelineRunTests(WorkspaceMixin, TestCase):

    def test_full_pipeline_is_recorded_and_reproducible(self):
        runs = []
        for name in ('first', 'second'):
            config = PipelineServices.load_config(self.workspace(name))
            runs.append((config, PipelineServices.run_pipeline(config)))
        (config, run), (other_config, _) = runs

        self.assertEqual(run.status, 'succeeded')
        self.assertIsNotNone(run.finished_at)
        self.assertEqual(run.stages, ['synth', 'train_ae', 'extract', 'train_infer', 'score', 'evaluate'])
        stage_runs = list(run.stage_runs.values_list('stage', 'status'))
        self.assertEqual(
            [stage for stage, _ in stage_runs],
            ['synth', 'train_ae', 'train_ae', 'extract', 'train_infer', 'score', 'evaluate'],
        )
        self.assertTrue(all(status == 'succeeded' for _, status in stage_runs))

        summary = json.loads((config.paths.evaluation_dir / 'evaluation.json').read_text(encoding='utf-8'))
        self.assertGreaterEqual(summary['auc'], 0.0)
        self.assertLessEqual(summary['auc'], 1.0)
        self.assertGreater(summary['anomalous_frames'], 0)

        manifest = json.loads(config.paths.manifest.read_text(encoding='utf-8'))
        self.assertEqual(manifest['config_hash'], config_hash(config.echo))
        self.assertEqual(manifest['status'], 'succeeded')
        self.assertEqual(len(manifest['artifacts']), 7)
        self.assertTrue(all(not artifact['path'].startswith('/') for artifact in manifest['artifacts']))
        self.assertIn('numpy', manifest['versions'])

        # equal config and seed: byte-identical artifacts and manifest
        for path in (config.paths.scores_csv, config.paths.features_csv):
            self.assertEqual(path.read_bytes(), other_config.paths.outputs.joinpath(path.name).read_bytes())
        for role in ('appearance', 'temporal', 'inference'):
            self.assertEqual(
                sha256_tree(BundleServices.role_path(config.paths.bundles, role)),
                sha256_tree(BundleServices.role_path(other_config.paths.bundles, role)),
            )
        self.assertEqual(config.paths.manifest.read_bytes(), other_config.paths.manifest.read_bytes())

    def test_failed_stage_is_recorded(self):
        config = PipelineServices.load_config(self.workspace())
        with self.assertRaises(StageFailedError) as caught:
            PipelineServices.run_pipeline(config, stages=['score'])
        self.assertEqual(caught.exception.stage, 'score')

        run = PipelineRun.objects.get()
        self.assertEqual(run.status, 'failed')
        failed = StageRun.objects.get(run=run)
        self.assertEqual((failed.stage, failed.status), ('score', 'failed'))
        self.assertIn('inference', failed.message)
        manifest = json.loads(config.paths.manifest.read_text(encoding='utf-8'))
        self.assertEqual((manifest['status'], manifest['artifacts']), ('failed', []))

    def test_unknown_stage(self):
        config = PipelineServices.load_config(self.workspace())
        with self.assertRaises(ConfigError):
            PipelineServices.run_pipeline(config, stages=['synth', 'render'])
        self.assertFalse(PipelineRun.objects.exists())


class StageTests(WorkspaceMixin, SimpleTestCase):

    def test_score_without_bundle_names_the_bundle(self):
        config = PipelineServices.load_config(self.workspace())
        with self.assertRaises(MissingArtifactError) as caught:
            PipelineServices.score(config)
        self.assertEqual(caught.exception.stage, 'score')
        self.assertIn(str(BundleServices.role_path(config.paths.bundles, 'inference')), str(caught.exception))

    def test_command_error_names_the_stage(self):
        path = self.workspace()
        with self.assertRaisesMessage(CommandError, 'score: [score] missing artifact'):
            call_command('score', config=str(path))

    def test_synth_needs_a_synth_section(self):
        config = PipelineServices.load_config(self.workspace(text="seed: 1\n"))
        with self.assertRaises(ConfigError):
            PipelineServices.synth(config)

    def test_experiment_name_is_checked(self):
        config = PipelineServices.load_config(self.workspace())
        with self.assertRaises(ConfigError):
            PipelineServices.experiment(config, 'speed-ablation')

    def test_score_without_a_dataset_lists_frames_with_objects(self):
        config = PipelineServices.load_config(self.workspace())
        rng = np.random.default_rng(0)
        model = InferenceServices.ensemble_fit(
            rng.normal(size=(30, 22)), rng.normal(3.0, 1.0, size=(6, 22)),
            InferenceConfig(k1=2, k2=1, n_init=2), DESCRIPTOR_COLUMNS,
        )
        bundle = BundleServices.role_path(config.paths.bundles, 'inference')
        BundleServices.save(InferenceServices.to_bundle(model), bundle)
        keys = pd.DataFrame([('v', 0, 1), ('v', 0, 2), ('v', 2, 1)], columns=['video', 'frame', 'id'])
        table = pd.concat([keys, pd.DataFrame(rng.normal(size=(3, 22)), columns=list(DESCRIPTOR_COLUMNS))], axis=1)
        RecordIOServices.write_feature_table(config.paths.features_csv, table)

        [path] = PipelineServices.score(config)
        scores = RecordIOServices.load_scores(path)
        self.assertEqual(list(zip(scores['video'], scores['frame'])), [('v', 0), ('v', 2)])
        self.assertTrue(scores['score'].between(0.0, 1.0).all())

        with self.assertRaises(MissingArtifactError):
            PipelineServices.score(config, dataset=self.tmp / 'absent')


class DatasetExperimentTests(WorkspaceMixin, SimpleTestCase):

    def test_context_helps_on_rendered_contextual_anomalies(self):
        config = PipelineServices.load_config(self.workspace(text=CONTEXTUAL_CONFIG))
        PipelineServices.synth(config)
        PipelineServices.train_ae(config)
        PipelineServices.extract(config)
        [out] = PipelineServices.experiment(config, 'context-ablation')

        report = pd.read_csv(out / 'report.csv', dtype={'seed': str})
        means = report[report['seed'] == 'mean'].set_index('variant')['auc']
        self.assertEqual(len(report), 8)
        self.assertGreater(means['with-context'], means['without-context'])
        self.assertTrue((out / 'pca_with_context.svg').is_file())


class ConfigTests(WorkspaceMixin, SimpleTestCase):

    def test_section_seeds_follow_the_global_seed(self):
        config = PipelineServices.load_config(self.workspace())
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.synth.seed, 7)
        self.assertEqual(config.autoencoder.train.seed, 7)
        self.assertEqual(config.inference.seed, 7)

    def test_seed_override(self):
        config = PipelineServices.load_config(self.workspace(), seed=3)
        self.assertEqual(
            (config.seed, config.synth.seed, config.autoencoder.train.seed, config.inference.seed), (3, 3, 3, 3)
        )
        self.assertNotEqual(config_hash(config.echo), config_hash(PipelineServices.load_config(FIXTURE_CONFIG).echo))

    def test_explicit_section_seed_is_kept(self):
        config = PipelineServices.load_config(self.workspace(text="seed: 1\ninference:\n  seed: 5\n"))
        self.assertEqual((config.seed, config.inference.seed, config.autoencoder.train.seed), (1, 5, 1))

    def test_paths_resolve_against_the_config_file(self):
        path = self.workspace()
        config = PipelineServices.load_config(path)
        self.assertEqual(config.paths.dataset, (path.parent / 'dataset').resolve())
        self.assertEqual(config.paths.relative(config.paths.scores_csv), 'outputs/scores.csv')
        moved = PipelineServices.with_outputs(config, self.tmp / 'elsewhere')
        self.assertEqual(moved.paths.manifest, (self.tmp / 'elsewhere' / 'run_manifest.json').resolve())

    def test_invalid_files(self):
        for index, text in enumerate(("seed: [1\n", "- 1\n- 2\n", "inference:\n  mu: 1.5\n", "seed: -1\n")):
            with self.subTest(text=text), self.assertRaises(ConfigError):
                PipelineServices.load_config(self.workspace(name=f'case{index}', text=text))

    def test_section_errors_name_the_section(self):
        with self.assertRaisesMessage(ConfigError, 'inference'):
            PipelineServices.load_config(self.workspace(text="inference:\n  k1: 0\n"))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            PipelineServices.load_config(self.tmp / 'absent.yaml')


class ArtifactTests(WorkspaceMixin, SimpleTestCase):

    def test_tree_checksum_ignores_creation_order(self):
        for name, order in (('a', ('x.txt', 'sub/y.txt')), ('b', ('sub/y.txt', 'x.txt'))):
            for file_name in order:
                atomic_write_text(self.tmp / name / file_name, file_name)
        self.assertEqual(sha256_tree(self.tmp / 'a'), sha256_tree(self.tmp / 'b'))
        atomic_write_text(self.tmp / 'b' / 'x.txt', 'changed')
        self.assertNotEqual(sha256_tree(self.tmp / 'a'), sha256_tree(self.tmp / 'b'))

    def test_failed_directory_write_keeps_the_old_one(self):
        target = self.tmp / 'report'
        atomic_write_text(target / 'old.txt', 'old')
        with self.assertRaises(RuntimeError), atomic_directory(target) as staging:
            atomic_write_text(staging / 'new.txt', 'new')
            raise RuntimeError('interrupted')
        self.assertEqual(sorted(p.name for p in self.tmp.iterdir()), ['report'])
        self.assertEqual([p.name for p in target.iterdir()], ['old.txt'])

    def test_config_hash_ignores_key_order(self):
        self.assertEqual(config_hash({'a': 1, 'b': [1, 2]}), config_hash({'b': [1, 2], 'a': 1}))
