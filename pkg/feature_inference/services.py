import logging
from dataclasses import replace

import numpy as np
import pandas as pd

from core_main.exceptions import ConfigError, DimensionMismatchError, RecordValidationError
from feature_data.bundle import ModelBundle
from feature_data.services import KEY_COLUMNS, SCORE_COLUMNS
from feature_inference.domain import (
    CalibratedSvm,
    ClusterModel,
    InferenceConfig,
    InferenceModel,
    ObjectVerdict,
    ScoredFrame,
    Standardizer,
    SvmParams,
)
from feature_inference.kmeans import kmeans
from feature_inference.svm import class_weighted_bounds, default_gamma, kernel_matrix, platt_fit, smo_solve

logger = logging.getLogger(__name__)

OBJECT_SCORE_COLUMNS = KEY_COLUMNS + ['alpha', 'beta', 'score', 'verdict']
# pools seed their k-means runs from separate streams of the model seed
NORMAL_POOL, ANOMALOUS_POOL = 0, 1
# support vectors keep coefficients above this
SUPPORT_THRESHOLD = 0.0


def _matrix(samples, name):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-D (samples, features) array, got shape {samples.shape}")
    if not np.isfinite(samples).all():
        raise RecordValidationError(f"{name} contain non-finite values")
    return samples


class InferenceServices:

    @staticmethod
    def standardize_fit(descriptors):
        """Per-dimension mean and standard deviation; zero-variance dimensions keep scale 1"""
        descriptors = _matrix(descriptors, 'training descriptors')
        if len(descriptors) < 2:
            raise RecordValidationError(f"standardization needs at least 2 descriptors, got {len(descriptors)}")
        scale = descriptors.std(axis=0)
        scale[scale <= np.finfo(np.float32).tiny] = 1.0
        return Standardizer(mean=descriptors.mean(axis=0), scale=scale)

    @staticmethod
    def standardize_apply(standardizer, descriptors):
        return standardizer.apply(descriptors)

    @staticmethod
    def kmeans_fit(samples, k, seed, n_init=10):
        samples = _matrix(samples, 'clustering samples')
        if not 1 <= k <= len(samples):
            raise ConfigError(f"k-means needs 1 <= k <= {len(samples)} samples, got k={k}")
        centers, labels, inertia = kmeans(samples, k, seed, n_init)
        return ClusterModel(centers=centers, inertia=inertia)

    @staticmethod
    def svm_train(positives, negatives, params=None, gamma=None):
        """
        One calibrated binary classifier, positives against negatives

        PHASE 1: Stack both sides, resolve gamma and the class-weighted box bounds
        PHASE 2: Solve the dual and keep the support vectors (float32)
        PHASE 3: Fit the Platt sigmoid on the stored classifier's training decision values
        """
        params = params or SvmParams()
        positives = _matrix(positives, 'positive samples')
        negatives = _matrix(negatives, 'negative samples')
        if not len(positives) or not len(negatives):
            raise RecordValidationError(
                f"SVM training needs samples on both sides, got {len(positives)} positive and "
                f"{len(negatives)} negative"
            )

        # PHASE 1: Problem
        samples = np.vstack([positives, negatives])
        y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
        if gamma is None:
            gamma = params.gamma if params.gamma is not None else default_gamma(samples)
        gamma = float(np.float32(gamma))
        bounds = class_weighted_bounds(y, params.C)

        # PHASE 2: Dual
        alpha, rho, iterations = smo_solve(
            kernel_matrix(samples, samples, params.kernel, gamma), y, bounds, params.tol, params.max_iter
        )
        support = alpha > SUPPORT_THRESHOLD
        classifier = CalibratedSvm(
            support_vectors=samples[support],
            dual_coef=(alpha * y)[support],
            bias=-rho,
            kernel=params.kernel,
            gamma=gamma,
        )

        # PHASE 3: Calibrate
        platt_a, platt_b = platt_fit(classifier.decision_function(samples), y)
        logger.debug(
            "SVM: %d+/%d- samples, %d support vectors, %d SMO iterations, Platt A=%.4f B=%.4f",
            len(positives), len(negatives), int(support.sum()), iterations, platt_a, platt_b,
        )
        return replace(classifier, platt_a=platt_a, platt_b=platt_b)

    @staticmethod
    def ensemble_fit(normal, anomalous, cfg, columns=None):
        """
        Fit the cluster classifier ensemble

        PHASE 1: Check pool sizes against K1/K2
        PHASE 2: Standardize on all training descriptors
        PHASE 3: k-means per pool
        PHASE 4: One calibrated one-vs-rest SVM per cluster, negatives from every other cluster of both pools
        """
        normal = _matrix(normal, 'normal descriptors')
        if anomalous is None or np.size(anomalous) == 0:
            anomalous = np.zeros((0, normal.shape[1]))
        anomalous = _matrix(anomalous, 'anomalous descriptors')

        # PHASE 1: Sizes
        if anomalous.shape[1] != normal.shape[1]:
            raise DimensionMismatchError(
                f"normal descriptors have {normal.shape[1]} entries, anomalous ones {anomalous.shape[1]}"
            )
        if len(normal) < cfg.k1:
            raise ConfigError(f"K1={cfg.k1} needs at least as many normal samples, got {len(normal)}")
        if len(anomalous) < cfg.k2:
            raise ConfigError(f"K2={cfg.k2} needs at least as many anomalous samples, got {len(anomalous)}")
        if cfg.k2 == 0 and len(anomalous):
            raise ConfigError("K2=0 trains on normal samples only; drop the anomalous samples")
        if cfg.k1 + cfg.k2 < 2:
            raise ConfigError("one-vs-rest training needs at least two clusters in total")
        columns = tuple(columns) if columns is not None else tuple(f'f{i}' for i in range(normal.shape[1]))
        if len(columns) != normal.shape[1]:
            raise DimensionMismatchError(f"{len(columns)} column names for {normal.shape[1]}-dimensional samples")

        # PHASE 2: Standardize
        standardizer = InferenceServices.standardize_fit(np.vstack([normal, anomalous]))
        normal_z = standardizer.apply(normal)
        anomalous_z = standardizer.apply(anomalous)

        # PHASE 3: Cluster
        normal_clusters = InferenceServices.kmeans_fit(
            normal_z, cfg.k1, np.random.SeedSequence(cfg.seed, spawn_key=(NORMAL_POOL,)), cfg.n_init
        )
        anomalous_clusters = None
        groups = [normal_z[normal_clusters.assign(normal_z) == c] for c in range(cfg.k1)]
        if cfg.k2:
            anomalous_clusters = InferenceServices.kmeans_fit(
                anomalous_z, cfg.k2, np.random.SeedSequence(cfg.seed, spawn_key=(ANOMALOUS_POOL,)), cfg.n_init
            )
            groups += [anomalous_z[anomalous_clusters.assign(anomalous_z) == c] for c in range(cfg.k2)]
        empty = [index for index, group in enumerate(groups) if not len(group)]
        if empty:
            raise RecordValidationError(f"clusters {empty} hold no samples; lower K1/K2 or add training data")

        # PHASE 4: Classifiers
        mode = 'baseline' if cfg.is_baseline else 'ensemble'
        training = np.vstack([normal_z, anomalous_z])
        gamma = cfg.svm.gamma if cfg.svm.gamma is not None else default_gamma(training)
        classifiers = []
        for index, positives in enumerate(groups):
            negatives = np.vstack([group for other, group in enumerate(groups) if other != index])
            classifiers.append(InferenceServices.svm_train(positives, negatives, cfg.svm, gamma))
        logger.info(
            "fitted %s model: K1=%d K2=%d on %d normal / %d anomalous samples (%d dims, gamma %.4g)",
            mode, cfg.k1, cfg.k2, len(normal), len(anomalous), normal.shape[1], gamma,
        )
        return InferenceModel(
            config=cfg,
            standardizer=standardizer,
            normal_clusters=normal_clusters,
            anomalous_clusters=anomalous_clusters,
            classifiers=classifiers,
            columns=columns,
            mode=mode,
        )

    @staticmethod
    def baseline_normal_only(normal, cfg, columns=None):
        """Normal-only model: ``cfg.baseline_clusters`` clusters, one-vs-rest among them, anomaly score 1 - alpha"""
        baseline_cfg = replace(cfg, k1=cfg.baseline_clusters, k2=0)
        return InferenceServices.ensemble_fit(normal, None, baseline_cfg, columns=columns)

    @staticmethod
    def classifier_scores(model, descriptors):
        """(n, K1 + K2) calibrated probabilities, normal-cluster classifiers first"""
        standardized = model.standardizer.apply(np.atleast_2d(np.asarray(descriptors, dtype=np.float64)))
        return np.column_stack([classifier.probability(standardized) for classifier in model.classifiers])

    @staticmethod
    def ensemble_scores(model, descriptor):
        """(alpha, beta, per-classifier scores) of one descriptor; beta is 0 without anomalous clusters"""
        scores = InferenceServices.classifier_scores(model, np.asarray(descriptor, dtype=np.float64)[None])[0]
        alpha, beta = InferenceServices.alpha_beta(scores, model.k1)
        return float(alpha[0]), float(beta[0]), scores

    @staticmethod
    def alpha_beta(scores, k1):
        scores = np.atleast_2d(scores)
        alpha = scores[:, :k1].max(axis=1)
        beta = scores[:, k1:].max(axis=1) if scores.shape[1] > k1 else np.zeros(len(scores))
        return alpha, beta

    @staticmethod
    def classify_object(alpha, beta, mu, eta, mode='ensemble'):
        """
        Normal iff alpha > beta and alpha > mu; anomalous iff alpha < beta and
        beta > eta; anything else is unknown and raises an alarm
        """
        if alpha > beta and alpha > mu:
            label = 'normal'
        elif alpha < beta and beta > eta:
            label = 'anomalous'
        else:
            label = 'unknown'
        score = 1.0 - alpha if mode == 'baseline' else (1.0 + beta - alpha) / 2.0
        return ObjectVerdict(alpha=float(alpha), beta=float(beta), label=label, score=float(score))

    @staticmethod
    def frame_anomaly_score(verdicts, video_id='', frame_index=0):
        """Max object score; any anomalous or unknown object flags the frame; an empty frame scores 0"""
        verdicts = list(verdicts)
        if not verdicts:
            return ScoredFrame(video_id=video_id, frame_index=frame_index, score=0.0, verdict='normal')
        return ScoredFrame(
            video_id=video_id,
            frame_index=frame_index,
            score=max(v.score for v in verdicts),
            verdict='anomalous' if any(v.alarm for v in verdicts) else 'normal',
            object_count=len(verdicts),
        )

    @staticmethod
    def score_objects(model, features):
        """Per-object alpha, beta, score and verdict for a feature table"""
        missing = [column for column in model.columns if column not in features.columns]
        if missing:
            raise DimensionMismatchError(f"feature table lacks the model's columns {missing}")
        cfg = model.config
        scores = InferenceServices.classifier_scores(model, features[list(model.columns)].to_numpy(dtype=np.float64))
        alphas, betas = InferenceServices.alpha_beta(scores, model.k1)
        verdicts = [
            InferenceServices.classify_object(a, b, cfg.mu, cfg.eta, model.mode) for a, b in zip(alphas, betas)
        ]
        table = features[KEY_COLUMNS].reset_index(drop=True).copy()
        table['alpha'] = [v.alpha for v in verdicts]
        table['beta'] = [v.beta for v in verdicts]
        table['score'] = [v.score for v in verdicts]
        table['verdict'] = [v.label for v in verdicts]
        return table[OBJECT_SCORE_COLUMNS]

    @staticmethod
    def score_table(model, features, frames=None):
        """Frame rows for a feature table; see ``aggregate_frames`` for ``frames``"""
        return InferenceServices.aggregate_frames(InferenceServices.score_objects(model, features), frames)

    @staticmethod
    def aggregate_frames(objects, frames=None):
        """
        Frame rows for every (video, frame) holding scored objects, plus the
        empty frames listed in ``frames`` (pairs of video id and frame index)

        PHASE 1: Aggregate object verdicts per frame
        PHASE 2: Add empty frames and order by (video, frame)
        """
        # PHASE 1: Frames
        scored = {}
        for (video_id, frame_index), group in objects.groupby(['video', 'frame'], sort=True):
            verdicts = [
                ObjectVerdict(alpha=a, beta=b, label=label, score=s)
                for a, b, s, label in group[['alpha', 'beta', 'score', 'verdict']].itertuples(index=False, name=None)
            ]
            scored[(str(video_id), int(frame_index))] = InferenceServices.frame_anomaly_score(
                verdicts, str(video_id), int(frame_index)
            )

        # PHASE 2: Empty frames
        for video_id, frame_index in (() if frames is None else frames):
            key = (str(video_id), int(frame_index))
            if key not in scored:
                scored[key] = InferenceServices.frame_anomaly_score((), *key)
        return [scored[key] for key in sorted(scored)]

    @staticmethod
    def frames_to_table(frames):
        return pd.DataFrame(
            [(f.video_id, f.frame_index, f.score, f.verdict) for f in frames],
            columns=SCORE_COLUMNS,
        )

    @staticmethod
    def training_samples(features, labels, normal_count, anomalous_count, seed, columns=None):
        """
        (normal, anomalous) descriptor matrices drawn from the train split

        Up to ``normal_count`` label-0 and ``anomalous_count`` label-1 objects
        are sampled without replacement with ``seed``; None takes every object.
        """
        columns = list(columns or [c for c in features.columns if c not in KEY_COLUMNS])
        merged = features.merge(labels, on=KEY_COLUMNS, how='inner', validate='one_to_one')
        merged = merged[merged['split'] == 'train'].sort_values(KEY_COLUMNS, kind='mergesort')
        rng = np.random.default_rng(seed)
        pools = []
        for label, count in ((0, normal_count), (1, anomalous_count)):
            pool = merged[merged['label'] == label][columns].to_numpy(dtype=np.float64)
            if count is not None and count < len(pool):
                pool = pool[np.sort(rng.choice(len(pool), size=count, replace=False))]
            pools.append(pool)
        logger.info("training set: %d normal, %d anomalous objects", len(pools[0]), len(pools[1]))
        return pools[0], pools[1]

    @staticmethod
    def fit_from_tables(features, labels, cfg, columns=None):
        """Sample the training set with the model seed and fit (K2=0 fits the normal-only baseline)"""
        columns = list(columns or [c for c in features.columns if c not in KEY_COLUMNS])
        normal, anomalous = InferenceServices.training_samples(
            features, labels, cfg.normal_samples, 0 if cfg.is_baseline else cfg.anomalous_samples, cfg.seed, columns
        )
        return InferenceServices.ensemble_fit(normal, anomalous, cfg, columns=columns)

    @staticmethod
    def to_bundle(model):
        tensors = {
            'standardizer.mean': model.standardizer.mean,
            'standardizer.scale': model.standardizer.scale,
            'clusters.normal': model.normal_clusters.centers,
        }
        if model.anomalous_clusters is not None:
            tensors['clusters.anomalous'] = model.anomalous_clusters.centers
        classifiers = []
        for index, classifier in enumerate(model.classifiers):
            tensors[f'svm.{index}.support_vectors'] = classifier.support_vectors
            tensors[f'svm.{index}.dual_coef'] = classifier.dual_coef
            classifiers.append({
                'bias': classifier.bias,
                'gamma': classifier.gamma,
                'platt_a': classifier.platt_a,
                'platt_b': classifier.platt_b,
            })
        cfg = model.config
        metadata = {
            'mode': model.mode,
            'columns': list(model.columns),
            'config': {
                'k1': cfg.k1, 'k2': cfg.k2, 'mu': cfg.mu, 'eta': cfg.eta, 'seed': cfg.seed, 'n_init': cfg.n_init,
                'normal_samples': cfg.normal_samples, 'anomalous_samples': cfg.anomalous_samples,
                'baseline_clusters': cfg.baseline_clusters,
                'svm': {
                    'kernel': cfg.svm.kernel, 'C': cfg.svm.C, 'gamma': cfg.svm.gamma,
                    'tol': cfg.svm.tol, 'max_iter': cfg.svm.max_iter,
                },
            },
            'inertia': {
                'normal': model.normal_clusters.inertia,
                'anomalous': None if model.anomalous_clusters is None else model.anomalous_clusters.inertia,
            },
            'classifiers': classifiers,
        }
        return ModelBundle(kind='inference', metadata=metadata, tensors=tensors)

    @staticmethod
    def from_bundle(bundle):
        metadata = bundle.metadata
        stored = dict(metadata['config'])
        cfg = InferenceConfig(svm=SvmParams(**stored.pop('svm')), **stored)
        anomalous = None
        if 'clusters.anomalous' in bundle.tensors:
            anomalous = ClusterModel(
                centers=bundle.tensor('clusters.anomalous'), inertia=metadata['inertia']['anomalous']
            )
        classifiers = [
            CalibratedSvm(
                support_vectors=bundle.tensor(f'svm.{index}.support_vectors'),
                dual_coef=bundle.tensor(f'svm.{index}.dual_coef'),
                kernel=cfg.svm.kernel,
                **params,
            )
            for index, params in enumerate(metadata['classifiers'])
        ]
        return InferenceModel(
            config=cfg,
            standardizer=Standardizer(
                mean=bundle.tensor('standardizer.mean'), scale=bundle.tensor('standardizer.scale')
            ),
            normal_clusters=ClusterModel(
                centers=bundle.tensor('clusters.normal'), inertia=metadata['inertia']['normal']
            ),
            anomalous_clusters=anomalous,
            classifiers=classifiers,
            columns=metadata['columns'],
            mode=metadata['mode'],
        )
