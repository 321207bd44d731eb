import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from core_main.exceptions import ConfigError, DimensionMismatchError, RecordParseError, RecordValidationError
from core_main.validation import build_from
from feature_eval.domain import ExperimentConfig, GridConfig
from feature_eval.serializers import EvaluationConfigSerializer
from feature_eval.services import GRID_COLUMNS, EvaluationServices, ExperimentServices, GridSearchServices
from feature_inference.domain import InferenceConfig
from feature_synth.descriptors import local_anomaly_table
from feature_synth.domain import DescriptorScenarioConfig


def random_instance(rng):
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    # coarse scores so that ties between classes occur
    scores = rng.integers(0, 20, size=n) / 20.0 if rng.random() < 0.5 else rng.random(n)
    return scores, labels


def local_set(seed=3, **sizes):
    cfg = DescriptorScenarioConfig(
        **{'n_train_normal': 80, 'n_train_anomalous': 20, 'n_test_frames': 30, 'seed': seed, **sizes}
    )
    return EvaluationServices.evaluation_set_from_scenario(local_anomaly_table(cfg))


class RocAucTests(SimpleTestCase):

    def test_worked_example(self):
        self.assertAlmostEqual(EvaluationServices.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc, 0.75)

    def test_perfect_and_uninformative_scores(self):
        self.assertEqual(EvaluationServices.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc, 1.0)
        self.assertEqual(EvaluationServices.roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]).auc, 0.5)

    def test_matches_pairwise_count(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            scores, labels = random_instance(rng)
            self.assertAlmostEqual(
                EvaluationServices.roc_auc(scores, labels).auc,
                EvaluationServices.auc_pairwise_oracle(scores, labels),
                delta=1e-9,
            )

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        scores, labels = rng.random(150), rng.integers(0, 2, size=150)
        labels[:2] = (0, 1)
        base = EvaluationServices.roc_auc(scores, labels).auc
        self.assertAlmostEqual(EvaluationServices.roc_auc(np.exp(3.0 * scores) + 2.0, labels).auc, base, delta=1e-12)

    def test_curve_runs_from_origin_to_corner(self):
        rng = np.random.default_rng(2)
        scores, labels = random_instance(rng)
        roc = EvaluationServices.roc_auc(scores, labels)
        self.assertEqual((roc.fpr[0], roc.tpr[0]), (0.0, 0.0))
        self.assertEqual((roc.fpr[-1], roc.tpr[-1]), (1.0, 1.0))
        self.assertTrue((np.diff(roc.fpr) >= 0).all())
        self.assertTrue((np.diff(roc.tpr) >= 0).all())
        self.assertEqual(list(EvaluationServices.roc_table(roc).columns), ['threshold', 'fpr', 'tpr'])

    def test_single_class_is_rejected(self):
        with self.assertRaises(RecordValidationError):
            EvaluationServices.roc_auc([0.2, 0.4, 0.6], [1, 1, 1])
        with self.assertRaises(RecordValidationError):
            EvaluationServices.auc_pairwise_oracle([0.2, 0.4], [0, 0])

    def test_length_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            EvaluationServices.roc_auc([0.2, 0.4, 0.6], [0, 1])


class PcaTests(SimpleTestCase):

    def test_rotation_keeps_total_variance(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(40, 2)) * [3.0, 0.5]
        projection = EvaluationServices.pca_project_2d(data)
        self.assertAlmostEqual(projection.points.var(axis=0, ddof=1).sum(), data.var(axis=0, ddof=1).sum())
        self.assertAlmostEqual(projection.explained_variance.sum(), 1.0)

    def test_points_on_a_line(self):
        t = np.linspace(-1.0, 1.0, 11)
        projection = EvaluationServices.pca_project_2d(np.column_stack([t, 2.0 * t, -t]))
        self.assertAlmostEqual(projection.explained_variance[0], 1.0)
        self.assertAlmostEqual(projection.explained_variance[1], 0.0)

    def test_matches_dense_eigensolver(self):
        data = np.random.default_rng(5).normal(size=(10, 22))
        projection = EvaluationServices.pca_project_2d(data)
        centred = data - data.mean(axis=0)
        eigenvalues, eigenvectors = np.linalg.eigh(np.cov(data, rowvar=False))
        expected = centred @ eigenvectors[:, np.argsort(eigenvalues)[::-1][:2]]
        for axis in range(2):
            got, want = projection.points[:, axis], expected[:, axis]
            self.assertTrue(np.allclose(got, want, atol=1e-9) or np.allclose(got, -want, atol=1e-9))

    def test_explained_fractions(self):
        projection = EvaluationServices.pca_project_2d(np.random.default_rng(6).normal(size=(30, 6)))
        first, second = projection.explained_variance
        self.assertGreaterEqual(first, second)
        self.assertLessEqual(first + second, 1.0 + 1e-12)

    def test_needs_three_samples(self):
        with self.assertRaises(RecordValidationError):
            EvaluationServices.pca_project_2d([[0.0, 1.0], [1.0, 0.0]])


class FrameLabelTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path

    def scores(self, frames):
        return pd.DataFrame(
            {'video': 'v1', 'frame': frames, 'score': np.linspace(0.1, 0.9, len(frames)), 'verdict': 'normal'}
        )

    def test_video_frame_label_table(self):
        labels = EvaluationServices.load_frame_labels(self.write('labels.csv', "video,frame,label\nv1,0,0\nv1,1,1\n"))
        self.assertEqual(labels.values.tolist(), [['v1', 0, 0], ['v1', 1, 1]])

    def test_annotation_file_needs_a_video(self):
        path = self.write('annotations.csv', "frame,label\n1,1\n0,0\n")
        with self.assertRaises(ConfigError):
            EvaluationServices.load_frame_labels(path)
        labels = EvaluationServices.load_frame_labels(path, video_id='v1')
        self.assertEqual(labels.values.tolist(), [['v1', 0, 0], ['v1', 1, 1]])

    def test_unknown_header(self):
        with self.assertRaises(RecordParseError):
            EvaluationServices.load_frame_labels(self.write('bad.csv', "clip,label\n0,1\n"))

    def test_evaluate_scores(self):
        labels = pd.DataFrame({'video': 'v1', 'frame': [0, 1, 2, 3], 'label': [0, 0, 1, 1]})
        roc, merged = EvaluationServices.evaluate_scores(self.scores([0, 1, 2, 3]), labels)
        self.assertEqual(roc.auc, 1.0)
        self.assertEqual(merged['frame'].tolist(), [0, 1, 2, 3])

    def test_labelled_frame_without_score(self):
        labels = pd.DataFrame({'video': 'v1', 'frame': [0, 1, 2, 3], 'label': [0, 0, 1, 1]})
        with self.assertRaises(RecordValidationError):
            EvaluationServices.evaluate_scores(self.scores([0, 1, 2]), labels)

    def test_verdict_rates(self):
        merged = pd.DataFrame({'label': [1, 1, 0, 0], 'verdict': ['anomalous', 'normal', 'unknown', 'anomalous']})
        self.assertEqual(EvaluationServices.verdict_rates(merged), (0.5, 0.5))


class GridSearchTests(SimpleTestCase):
    grid = GridConfig(k1=(4,), k2=(2,), n=(0, 1, 20, 500), mu=(0.5, 0.7), eta=(0.5,))
    base_cfg = InferenceConfig(normal_samples=None, n_init=3)

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.evaluation_set = local_set()
        cls.report = GridSearchServices.grid_search(cls.evaluation_set, cls.grid, cls.base_cfg, seed=11)

    def test_cells(self):
        table = self.report.table
        self.assertEqual(list(table.columns), GRID_COLUMNS)
        # N=0 trains without anomalous clusters; N=1 < K2 and N=500 above the pool are skipped
        self.assertEqual(sorted(set(zip(table['n'], table['k2']))), [(0, 0), (20, 2)])
        self.assertEqual(len(table), 4)
        self.assertEqual(sorted(cell['n'] for cell in self.report.skipped), [1, 500])

    def test_selection(self):
        table = self.report.table
        self.assertEqual(self.report.selected['auc'], table['auc'].max())
        # rows of one cell share the AUC, so the smallest mu wins
        self.assertEqual(self.report.selected['mu'], 0.5)

    def test_higher_mu_raises_more_alarms(self):
        for _, rows in self.report.table.groupby(['n', 'k2']):
            low, high = rows.sort_values('mu').to_dict(orient='records')
            self.assertGreaterEqual(high['verdict_tpr'], low['verdict_tpr'])
            self.assertGreaterEqual(high['verdict_fpr'], low['verdict_fpr'])

    def test_same_seed_same_report(self):
        again = GridSearchServices.grid_search(self.evaluation_set, self.grid, self.base_cfg, seed=11)
        pd.testing.assert_frame_equal(again.table, self.report.table)
        with tempfile.TemporaryDirectory() as tmp:
            first = GridSearchServices.write_report(self.report, Path(tmp) / 'a.csv', Path(tmp) / 'a.json')
            second = GridSearchServices.write_report(again, Path(tmp) / 'b.csv', Path(tmp) / 'b.json')
            self.assertEqual(first[0].read_bytes(), second[0].read_bytes())
            selection = json.loads(first[1].read_text(encoding='utf-8'))
        self.assertEqual(selection['seed'], 11)
        self.assertEqual(len(selection['skipped']), 2)

    def test_every_cell_skipped(self):
        with self.assertRaises(ConfigError):
            GridSearchServices.grid_search(self.evaluation_set, GridConfig(n=(500,)), self.base_cfg, seed=0)


class ExperimentTests(SimpleTestCase):
    five_seeds = (0, 1, 2, 3, 4)

    def test_context_improves_detection_of_contextual_anomalies(self):
        experiment_cfg = ExperimentConfig(
            seeds=self.five_seeds,
            n_values=(0,),
            scenario=DescriptorScenarioConfig(n_train_normal=120, n_train_anomalous=40, n_test_frames=60),
            scatter_samples=40,
        )
        report = ExperimentServices.run_experiment(
            'context-ablation', InferenceConfig(k1=2, k2=2, normal_samples=None, anomalous_samples=None, n_init=3),
            experiment_cfg,
        )
        self.assertEqual(len(report.runs), 10)
        self.assertGreaterEqual(report.mean_auc('with-context') - report.mean_auc('without-context'), 0.05)
        self.assertEqual(
            sorted(report.charts), ['pca_with_context.svg', 'pca_without_context.svg', 'roc.svg', 'timeline.svg']
        )
        self.assertTrue(all(svg.lstrip().startswith(b'<?xml') for svg in report.charts.values()))
        self.assertEqual(set(report.curves['series']), {'roc', 'timeline'})

    def test_anomalous_samples_improve_detection_of_local_anomalies(self):
        experiment_cfg = ExperimentConfig(
            seeds=self.five_seeds,
            n_values=(0, 60),
            scenario=DescriptorScenarioConfig(
                n_train_normal=160, n_train_anomalous=60, n_test_frames=60, anomaly_shift=4.0
            ),
        )
        report = ExperimentServices.run_experiment(
            'fewshot-ablation', InferenceConfig(k1=4, k2=2, normal_samples=None, n_init=3), experiment_cfg
        )
        self.assertGreaterEqual(report.mean_auc('N=60') - report.mean_auc('N=0'), 0.02)
        by_n = report.curves[report.curves['series'] == 'auc_by_n']
        self.assertEqual(by_n['x'].tolist(), [0.0, 60.0])
        self.assertIn('auc_by_n.svg', report.charts)

    def test_feature_subsets_report(self):
        experiment_cfg = ExperimentConfig(
            seeds=(0,),
            scenario=DescriptorScenarioConfig(n_train_normal=60, n_train_anomalous=20, n_test_frames=20),
        )
        report = ExperimentServices.run_experiment(
            'feature-subsets', InferenceConfig(k1=2, k2=2, normal_samples=None, anomalous_samples=None, n_init=3),
            experiment_cfg,
        )
        self.assertEqual(
            list(report.runs['variant']), ['contextual-only', 'temporal-only', 'appearance-only', 'full']
        )
        table = ExperimentServices.report_table(report)
        self.assertEqual(table['seed'].tolist(), ['0'] * 4 + ['mean'] * 4)
        with tempfile.TemporaryDirectory() as tmp:
            out = ExperimentServices.write_report(report, Path(tmp) / 'feature-subsets')
            self.assertEqual(sorted(p.name for p in out.iterdir()), ['curves.csv', 'report.csv', 'roc.svg'])
            written = pd.read_csv(out / 'report.csv')
        self.assertEqual(list(written.columns), ['variant', 'seed', 'auc'])

    def test_baseline_comparison_charts(self):
        experiment_cfg = ExperimentConfig(
            seeds=(0,),
            scenario=DescriptorScenarioConfig(n_train_normal=80, n_train_anomalous=20, n_test_frames=20),
        )
        report = ExperimentServices.run_experiment(
            'baseline-comparison', InferenceConfig(k1=4, k2=2, normal_samples=None, n_init=3), experiment_cfg
        )
        self.assertEqual(list(report.runs['variant']), ['baseline', 'ensemble'])
        self.assertIn('pca_training_set.svg', report.charts)
        self.assertIn('timeline.svg', report.charts)
        self.assertIn('decision_boundaries.svg', report.charts)

    def test_decision_boundaries_separate_local_anomalies(self):
        cfg = InferenceConfig(k1=3, k2=2, n_init=3)
        svg, aucs = ExperimentServices.decision_boundaries(cfg, seed=0, resolution=40)
        self.assertTrue(svg.lstrip().startswith(b'<?xml'))
        self.assertGreater(aucs['ensemble'], aucs['baseline'])
        self.assertGreaterEqual(aucs['ensemble'], 0.9)

    def test_dataset_source_needs_a_dataset(self):
        with self.assertRaises(ConfigError):
            ExperimentServices.evaluation_sets('context-ablation', ExperimentConfig(source='dataset'))

    def test_unknown_experiment(self):
        with self.assertRaises(ConfigError):
            ExperimentServices.run_experiment('speed-ablation', InferenceConfig(), ExperimentConfig(seeds=(0,)))


class ConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = build_from(EvaluationConfigSerializer, {}, 'evaluation')
        self.assertEqual(cfg.grid, GridConfig())
        self.assertEqual(cfg.experiments.seeds, (0, 1, 2, 3, 4))

    def test_partial_sections(self):
        cfg = build_from(
            EvaluationConfigSerializer,
            {'grid': {'mu': [0.6], 'gamma': [None, 0.5]}, 'experiments': {'scenario': {'n_test_frames': 50}}},
            'evaluation',
        )
        self.assertEqual(cfg.grid.mu, (0.6,))
        self.assertEqual(cfg.grid.gamma, (None, 0.5))
        self.assertEqual(cfg.grid.k1, GridConfig().k1)
        self.assertEqual(cfg.experiments.scenario.n_test_frames, 50)
        self.assertEqual(cfg.experiments.scenario.n_train_normal, 300)

    def test_invalid_values(self):
        for data in (
            {'grid': {'mu': [1.0]}},
            {'grid': {'k1': []}},
            {'grid': {'C': [0.0]}},
            {'experiments': {'source': 'video'}},
            {'experiments': {'seeds': [-1]}},
        ):
            with self.subTest(data=data), self.assertRaises(ConfigError):
                build_from(EvaluationConfigSerializer, data, 'evaluation')
