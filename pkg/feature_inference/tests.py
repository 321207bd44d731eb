import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from scipy.optimize import minimize

from core_main.exceptions import ConfigError, ConvergenceError, DimensionMismatchError, RecordValidationError
from core_main.validation import build_from
from feature_data.bundle import BundleServices
from feature_inference.domain import InferenceConfig, SvmParams
from feature_inference.serializers import InferenceConfigSerializer
from feature_inference.services import OBJECT_SCORE_COLUMNS, InferenceServices
from feature_inference.svm import class_weighted_bounds, dual_objective, kernel_matrix, smo_solve

COLUMNS = ('f0', 'f1', 'f2')
NORMAL_CENTERS = ((0, 0, 0), (4, 0, 0), (0, 4, 0), (4, 4, 0))
ANOMALOUS_CENTERS = ((2, 2, 6), (8, 8, 8), (-4, -4, 4))


def blobs(rng, centers, count, spread=0.3):
    return np.vstack([np.asarray(c, dtype=float) + spread * rng.standard_normal((count, len(c))) for c in centers])


def best_two_partition(samples):
    """Exhaustive minimum within-cluster sum of squares over all 2-partitions"""
    n = len(samples)
    best = np.inf
    # the last sample always stays in the second group
    for mask in range(1, 2 ** (n - 1)):
        first = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        sse = sum(((samples[g] - samples[g].mean(axis=0)) ** 2).sum() for g in (first, ~first))
        best = min(best, sse)
    return best


def slsqp_dual(K, y, bounds):
    Q = np.outer(y, y) * K
    result = minimize(
        lambda a: 0.5 * a @ Q @ a - a.sum(),
        np.zeros(len(y)),
        jac=lambda a: Q @ a - 1.0,
        method='SLSQP',
        bounds=[(0.0, c) for c in bounds],
        constraints=[{'type': 'eq', 'fun': lambda a: a @ y, 'jac': lambda a: y}],
        options={'ftol': 1e-12, 'maxiter': 1000},
    )
    return result.fun


class StandardizeTests(SimpleTestCase):

    def test_mean_and_scale(self):
        standardizer = InferenceServices.standardize_fit([[1.0, 2.0], [3.0, 2.0]])
        np.testing.assert_array_equal(standardizer.mean, [2.0, 2.0])
        # constant dimension keeps scale 1
        np.testing.assert_array_equal(standardizer.scale, [1.0, 1.0])
        np.testing.assert_array_equal(standardizer.apply([[1.0, 2.0], [3.0, 2.0]]), [[-1.0, 0.0], [1.0, 0.0]])

    def test_standardized_training_data_has_unit_variance(self):
        samples = np.random.default_rng(0).normal(3.0, 2.0, size=(50, 4))
        standardized = InferenceServices.standardize_fit(samples).apply(samples)
        np.testing.assert_allclose(standardized.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(standardized.std(axis=0), 1.0, atol=1e-5)

    def test_needs_two_samples(self):
        with self.assertRaises(RecordValidationError):
            InferenceServices.standardize_fit([[1.0, 2.0]])

    def test_dimension_mismatch(self):
        standardizer = InferenceServices.standardize_fit([[1.0, 2.0], [3.0, 4.0]])
        with self.assertRaises(DimensionMismatchError):
            standardizer.apply([[1.0, 2.0, 3.0]])


class KMeansTests(SimpleTestCase):

    def test_two_pairs(self):
        samples = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        model = InferenceServices.kmeans_fit(samples, 2, seed=0)
        centers = model.centers[np.argsort(model.centers[:, 0])]
        np.testing.assert_allclose(centers, [[0.0, 0.5], [10.0, 0.5]])
        self.assertAlmostEqual(model.inertia, 1.0)

    def test_k_equals_n_has_zero_inertia(self):
        samples = np.random.default_rng(1).random((5, 3))
        self.assertAlmostEqual(InferenceServices.kmeans_fit(samples, 5, seed=0).inertia, 0.0)

    def test_k_above_sample_count(self):
        with self.assertRaises(ConfigError):
            InferenceServices.kmeans_fit(np.zeros((3, 2)), 4, seed=0)

    def test_same_seed_same_centers(self):
        samples = np.random.default_rng(2).random((40, 3))
        first = InferenceServices.kmeans_fit(samples, 3, seed=5)
        second = InferenceServices.kmeans_fit(samples, 3, seed=5)
        np.testing.assert_array_equal(first.centers, second.centers)

    def test_matches_exhaustive_optimum(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            samples = rng.normal(size=(int(rng.integers(3, 9)), 2))
            model = InferenceServices.kmeans_fit(samples, 2, seed=int(rng.integers(1000)), n_init=50)
            self.assertAlmostEqual(model.inertia, best_two_partition(samples), places=9)


class SvmTests(SimpleTestCase):

    def test_linear_boundary_in_one_dimension(self):
        classifier = InferenceServices.svm_train(
            [[1.0], [2.0]], [[-1.0], [-2.0]], SvmParams(kernel='linear', C=10.0)
        )
        np.testing.assert_allclose(classifier.decision_function([[0.0], [1.0], [-1.0]]), [0.0, 1.0, -1.0], atol=1e-3)

    def assert_matches_dense_qp(self, K, y, bounds):
        alpha, rho, _ = smo_solve(K, y, bounds, tol=1e-5)
        self.assertLess(abs(dual_objective(alpha, y, K) - slsqp_dual(K, y, bounds)), 1e-3)
        self.assertAlmostEqual(float(alpha @ y), 0.0, places=9)
        margins = y * ((alpha * y) @ K - rho)
        for a, c, margin in zip(alpha, bounds, margins):
            self.assertTrue(-1e-12 <= a <= c + 1e-12)
            if a <= 1e-9:
                self.assertGreaterEqual(margin, 1.0 - 1e-3)
            elif a >= c - 1e-9:
                self.assertLessEqual(margin, 1.0 + 1e-3)
            else:
                self.assertAlmostEqual(margin, 1.0, delta=1e-3)

    def test_smo_matches_dense_qp(self):
        rng = np.random.default_rng(4)
        for kernel in ('rbf', 'linear'):
            for _ in range(50):
                n = int(rng.integers(4, 21))
                samples = rng.normal(size=(n, 2))
                y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
                y[0], y[1] = 1.0, -1.0
                with self.subTest(kernel=kernel, n=n):
                    K = kernel_matrix(samples, samples, kernel, 0.5)
                    self.assert_matches_dense_qp(K, y, class_weighted_bounds(y, 1.0))

    def test_linear_kernel_separates_clusters(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            positives = rng.normal((3.0, 3.0), 0.5, size=(int(rng.integers(5, 15)), 2))
            negatives = rng.normal((-3.0, -3.0), 0.5, size=(int(rng.integers(5, 15)), 2))
            samples = np.vstack([positives, negatives])
            y = np.r_[np.ones(len(positives)), -np.ones(len(negatives))]
            self.assert_matches_dense_qp(kernel_matrix(samples, samples, 'linear'), y, class_weighted_bounds(y, 10.0))

            classifier = InferenceServices.svm_train(positives, negatives, SvmParams(kernel='linear', C=10.0))
            self.assertEqual(float(np.mean(np.sign(classifier.decision_function(samples)) == y)), 1.0)

    def test_xor_with_rbf(self):
        positives = np.array([[1.0, 1.0], [-1.0, -1.0]])
        negatives = np.array([[1.0, -1.0], [-1.0, 1.0]])
        classifier = InferenceServices.svm_train(positives, negatives, SvmParams(kernel='rbf', C=10.0, gamma=1.0))
        self.assertTrue((classifier.decision_function(positives) > 0).all())
        self.assertTrue((classifier.decision_function(negatives) < 0).all())

    def test_platt_probabilities(self):
        rng = np.random.default_rng(5)
        positives = rng.normal(1.5, 1.0, size=(30, 2))
        negatives = rng.normal(-1.5, 1.0, size=(30, 2))
        classifier = InferenceServices.svm_train(positives, negatives, SvmParams(gamma=0.5))
        self.assertLess(classifier.platt_a, 0.0)
        probe = rng.normal(0.0, 3.0, size=(100, 2))
        p = classifier.probability(probe)
        self.assertTrue(((p > 0) & (p < 1)).all())
        order = np.argsort(classifier.decision_function(probe))
        self.assertTrue((np.diff(p[order]) >= 0).all())
        self.assertGreater(classifier.probability(positives).mean(), classifier.probability(negatives).mean())

    def test_empty_side(self):
        with self.assertRaises(RecordValidationError):
            InferenceServices.svm_train([[1.0, 2.0]], np.zeros((0, 2)))

    def test_iteration_cap(self):
        positives = np.array([[1.0, 1.0], [-1.0, -1.0]])
        negatives = np.array([[1.0, -1.0], [-1.0, 1.0]])
        with self.assertRaises(ConvergenceError):
            InferenceServices.svm_train(positives, negatives, SvmParams(C=10.0, gamma=1.0, max_iter=1))


class DecisionRuleTests(SimpleTestCase):

    def test_examples(self):
        verdict = InferenceServices.classify_object(0.9, 0.2, 0.5, 0.5)
        self.assertEqual(verdict.label, 'normal')
        self.assertAlmostEqual(verdict.score, 0.15)
        verdict = InferenceServices.classify_object(0.3, 0.8, 0.5, 0.5)
        self.assertEqual(verdict.label, 'anomalous')
        self.assertAlmostEqual(verdict.score, 0.75)
        verdict = InferenceServices.classify_object(0.3, 0.4, 0.5, 0.5)
        self.assertEqual(verdict.label, 'unknown')
        self.assertAlmostEqual(verdict.score, 0.55)
        self.assertTrue(verdict.alarm)

    def test_baseline_score(self):
        verdict = InferenceServices.classify_object(0.8, 0.0, 0.5, 0.5, mode='baseline')
        self.assertEqual(verdict.label, 'normal')
        self.assertAlmostEqual(verdict.score, 0.2)

    def test_full_grid(self):
        grid = np.arange(101) / 100
        scores = np.zeros((101, 101))
        for i, alpha in enumerate(grid):
            for j, beta in enumerate(grid):
                verdict = InferenceServices.classify_object(alpha, beta, 0.5, 0.5)
                normal = alpha > beta and alpha > 0.5
                anomalous = alpha < beta and beta > 0.5
                self.assertFalse(normal and anomalous)
                expected = 'normal' if normal else 'anomalous' if anomalous else 'unknown'
                self.assertEqual(verdict.label, expected)
                self.assertEqual(verdict.alarm, not normal)
                self.assertTrue(0.0 <= verdict.score <= 1.0)
                scores[i, j] = verdict.score
        # strictly increasing in beta, strictly decreasing in alpha
        self.assertTrue((np.diff(scores, axis=1) > 0).all())
        self.assertTrue((np.diff(scores, axis=0) < 0).all())

    def test_frame_takes_max_object_score(self):
        verdicts = [
            InferenceServices.classify_object(0.9, 0.1, 0.5, 0.5),
            InferenceServices.classify_object(0.7, 0.2, 0.5, 0.5),
        ]
        frame = InferenceServices.frame_anomaly_score(verdicts, 'v', 3)
        self.assertAlmostEqual(frame.score, 0.25)
        self.assertEqual(frame.verdict, 'normal')
        self.assertEqual(frame.object_count, 2)

    def test_unknown_object_raises_frame_alarm(self):
        verdicts = [
            InferenceServices.classify_object(0.9, 0.1, 0.5, 0.5),
            InferenceServices.classify_object(0.45, 0.4, 0.5, 0.5),
        ]
        self.assertEqual(InferenceServices.frame_anomaly_score(verdicts).verdict, 'anomalous')

    def test_empty_frame(self):
        frame = InferenceServices.frame_anomaly_score([], 'v', 0)
        self.assertEqual(frame.score, 0.0)
        self.assertEqual(frame.verdict, 'normal')


class EnsembleTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(6)
        cls.normal = blobs(rng, NORMAL_CENTERS, 25)
        cls.anomalous = blobs(rng, ANOMALOUS_CENTERS, 8)
        cls.cfg = InferenceConfig(k1=4, k2=3, seed=3)
        cls.model = InferenceServices.ensemble_fit(cls.normal, cls.anomalous, cls.cfg, columns=COLUMNS)
        cls.probe_normal = blobs(rng, NORMAL_CENTERS, 5)
        cls.probe_anomalous = blobs(rng, ANOMALOUS_CENTERS, 5)

    def test_one_classifier_per_cluster(self):
        self.assertEqual(len(self.model.classifiers), 7)
        self.assertEqual((self.model.k1, self.model.k2), (4, 3))
        self.assertEqual(self.model.mode, 'ensemble')
        self.assertEqual(InferenceServices.classifier_scores(self.model, self.probe_normal).shape, (20, 7))

    def test_anomalous_objects_score_higher(self):
        def scores(samples):
            return [InferenceServices.classify_object(
                *InferenceServices.ensemble_scores(self.model, s)[:2], self.cfg.mu, self.cfg.eta).score
                for s in samples]

        self.assertGreater(np.mean(scores(self.probe_anomalous)), np.mean(scores(self.probe_normal)))

    def test_alpha_beta_are_pool_maxima(self):
        alpha, beta, scores = InferenceServices.ensemble_scores(self.model, self.probe_anomalous[0])
        self.assertEqual(alpha, scores[:4].max())
        self.assertEqual(beta, scores[4:].max())

    def test_same_seed_same_model(self):
        again = InferenceServices.ensemble_fit(self.normal, self.anomalous, self.cfg, columns=COLUMNS)
        np.testing.assert_array_equal(
            InferenceServices.classifier_scores(again, self.probe_anomalous),
            InferenceServices.classifier_scores(self.model, self.probe_anomalous),
        )

    def test_bundle_roundtrip_keeps_scores(self):
        with tempfile.TemporaryDirectory() as tmp:
            bundle = BundleServices.roundtrip(InferenceServices.to_bundle(self.model), Path(tmp) / 'inference')
        restored = InferenceServices.from_bundle(bundle)
        self.assertEqual(restored.columns, COLUMNS)
        self.assertEqual(restored.config, self.cfg)
        probe = np.vstack([self.probe_normal, self.probe_anomalous])
        np.testing.assert_array_equal(
            InferenceServices.classifier_scores(restored, probe), InferenceServices.classifier_scores(self.model, probe)
        )

    def test_baseline_has_no_anomalous_pool(self):
        baseline = InferenceServices.baseline_normal_only(self.normal, replace(self.cfg, baseline_clusters=4))
        self.assertEqual(baseline.mode, 'baseline')
        self.assertIsNone(baseline.anomalous_clusters)
        alpha, beta, _ = InferenceServices.ensemble_scores(baseline, self.probe_normal[0])
        self.assertEqual(beta, 0.0)
        verdict = InferenceServices.classify_object(alpha, beta, 0.5, 0.5, baseline.mode)
        self.assertAlmostEqual(verdict.score, 1.0 - alpha)

    def test_baseline_bundle_roundtrip(self):
        baseline = InferenceServices.baseline_normal_only(self.normal, replace(self.cfg, baseline_clusters=3))
        with tempfile.TemporaryDirectory() as tmp:
            bundle = BundleServices.roundtrip(InferenceServices.to_bundle(baseline), Path(tmp) / 'inference')
        self.assertNotIn('clusters.anomalous', bundle.tensors)
        restored = InferenceServices.from_bundle(bundle)
        np.testing.assert_array_equal(
            InferenceServices.classifier_scores(restored, self.probe_normal),
            InferenceServices.classifier_scores(baseline, self.probe_normal),
        )

    def test_pool_size_checks(self):
        with self.assertRaises(ConfigError):
            InferenceServices.ensemble_fit(self.normal, self.anomalous[:2], self.cfg)
        with self.assertRaises(ConfigError):
            InferenceServices.ensemble_fit(self.normal, self.anomalous, replace(self.cfg, k2=0))
        with self.assertRaises(ConfigError):
            InferenceServices.ensemble_fit(self.normal, None, replace(self.cfg, k1=1, k2=0))
        with self.assertRaises(DimensionMismatchError):
            InferenceServices.ensemble_fit(self.normal, self.anomalous[:, :2], self.cfg)


class TableTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(7)
        normal = blobs(rng, NORMAL_CENTERS[:2], 12)
        anomalous = blobs(rng, ANOMALOUS_CENTERS[:1], 6)
        test = blobs(rng, NORMAL_CENTERS[:1] + ANOMALOUS_CENTERS[:1], 2)
        rows, labels = [], []
        for split, values, label in (('train', normal, 0), ('train', anomalous, 1), ('test', test, None)):
            for index, value in enumerate(values):
                video = 'train-00' if split == 'train' else 'test-00'
                frame = index // 2 if split == 'test' else index
                key = (video, frame, 1 + index % 2 if split == 'test' else label + 1)
                object_label = label if label is not None else int(index >= 2)
                rows.append((*key, *value))
                labels.append((*key, object_label, split))
        cls.features = pd.DataFrame(rows, columns=['video', 'frame', 'id', *COLUMNS])
        cls.labels = pd.DataFrame(labels, columns=['video', 'frame', 'id', 'label', 'split'])

    def test_training_samples_take_the_train_split(self):
        normal, anomalous = InferenceServices.training_samples(self.features, self.labels, None, None, 0, COLUMNS)
        self.assertEqual((len(normal), len(anomalous)), (24, 6))
        normal, anomalous = InferenceServices.training_samples(self.features, self.labels, 10, 3, 0, COLUMNS)
        self.assertEqual((normal.shape, anomalous.shape), ((10, 3), (3, 3)))
        again, _ = InferenceServices.training_samples(self.features, self.labels, 10, 3, 0, COLUMNS)
        np.testing.assert_array_equal(normal, again)

    def test_score_table_lists_empty_frames(self):
        cfg = InferenceConfig(k1=2, k2=1, normal_samples=None, anomalous_samples=None, n_init=3)
        model = InferenceServices.fit_from_tables(self.features, self.labels, cfg, COLUMNS)
        test = self.features[self.features['video'] == 'test-00']
        objects = InferenceServices.score_objects(model, test)
        self.assertEqual(list(objects.columns), OBJECT_SCORE_COLUMNS)
        self.assertEqual(len(objects), 4)

        frames = InferenceServices.score_table(model, test, frames=[('test-00', 0), ('test-00', 1), ('test-00', 2)])
        self.assertEqual([(f.video_id, f.frame_index) for f in frames], [('test-00', 0), ('test-00', 1), ('test-00', 2)])
        self.assertEqual(frames[2].score, 0.0)
        self.assertEqual(frames[2].object_count, 0)
        for frame in frames[:2]:
            rows = objects[objects['frame'] == frame.frame_index]
            self.assertEqual(frame.score, rows['score'].max())
        # the anomalous test pair sits in frame 1
        self.assertGreater(frames[1].score, frames[0].score)

    def test_missing_model_column(self):
        cfg = InferenceConfig(k1=2, k2=1, normal_samples=None, anomalous_samples=None, n_init=3)
        model = InferenceServices.fit_from_tables(self.features, self.labels, cfg, COLUMNS)
        with self.assertRaises(DimensionMismatchError):
            InferenceServices.score_objects(model, self.features.drop(columns=['f2']))


class ConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = build_from(InferenceConfigSerializer, {}, 'inference')
        self.assertEqual((cfg.k1, cfg.k2, cfg.mu, cfg.eta), (4, 3, 0.5, 0.5))
        self.assertEqual(cfg.svm, SvmParams())

    def test_nested_svm_section(self):
        cfg = build_from(InferenceConfigSerializer, {'svm': {'C': 4.0, 'gamma': 0.1}, 'seed': 9}, 'inference')
        self.assertEqual((cfg.svm.C, cfg.svm.gamma, cfg.seed), (4.0, 0.1, 9))

    def test_threshold_bounds(self):
        for bad in ({'mu': 1.0}, {'eta': 0.0}, {'svm': {'C': 0}}, {'k2': -1}):
            with self.assertRaises(ConfigError):
                build_from(InferenceConfigSerializer, bad, 'inference')
