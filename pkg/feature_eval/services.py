import json
import logging
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd

from core_main.artifacts import atomic_directory, atomic_write_bytes, atomic_write_text, json_default
from core_main.exceptions import ConfigError, RecordParseError, RecordValidationError
from feature_data.domain import APPEARANCE_COLUMNS, DESCRIPTOR_COLUMNS, TEMPORAL_COLUMNS
from feature_data.services import KEY_COLUMNS, RecordIOServices
from feature_eval import plots
from feature_eval.domain import (
    EXPERIMENT_SCENARIOS,
    EXPERIMENTS,
    FEATURE_SUBSETS,
    EvaluationSet,
    ExperimentReport,
    GridSearchReport,
    ScoredRun,
)
from feature_eval.metrics import auc_pairwise_oracle, pca_project_2d, roc_auc
from feature_inference.services import InferenceServices
from feature_synth.descriptors import DESCRIPTOR_SCENARIOS, local_anomaly_plane

logger = logging.getLogger(__name__)

FRAME_KEY = ['video', 'frame']
FRAME_LABEL_COLUMNS = FRAME_KEY + ['label']
GRID_COLUMNS = ['k1', 'k2', 'n', 'mu', 'eta', 'C', 'gamma', 'auc', 'verdict_tpr', 'verdict_fpr']
CURVE_COLUMNS = ['variant', 'series', 'x', 'y']


class EvaluationServices:

    @staticmethod
    def roc_auc(scores, labels):
        return roc_auc(scores, labels)

    @staticmethod
    def auc_pairwise_oracle(scores, labels):
        return auc_pairwise_oracle(scores, labels)

    @staticmethod
    def pca_project_2d(descriptors):
        return pca_project_2d(descriptors)

    @staticmethod
    def frame_labels_from_dataset(dataset, split='test'):
        rows = [
            (video.video_id, annotation.frame_index, annotation.label)
            for video in dataset.videos_in_split(split)
            for annotation in dataset.annotations(video.video_id)
        ]
        return pd.DataFrame(rows, columns=FRAME_LABEL_COLUMNS).astype({'frame': np.int64, 'label': np.int64})

    @staticmethod
    def load_frame_labels(path, video_id=None):
        """
        Frame labels from a `video,frame,label` table, or from one video's
        `frame,label` annotations (``video_id`` names the video)
        """
        header = pd.read_csv(path, nrows=0).columns.tolist()
        if header == FRAME_LABEL_COLUMNS:
            table = pd.read_csv(path, dtype={'video': str})
            if not table['label'].isin([0, 1]).all():
                raise RecordValidationError(f"{path}: labels must be 0 or 1")
            return table.astype({'frame': np.int64, 'label': np.int64})
        if header == ['frame', 'label']:
            if video_id is None:
                raise ConfigError(f"{path} holds one video's annotations; name the video it belongs to")
            annotations = RecordIOServices.load_frame_annotations(path)
            return pd.DataFrame(
                [(video_id, a.frame_index, a.label) for a in annotations], columns=FRAME_LABEL_COLUMNS
            )
        raise RecordParseError(f"{path}: expected header 'video,frame,label' or 'frame,label'")

    @staticmethod
    def join_frame_labels(scores, frame_labels):
        """Scores of every labelled frame; a labelled frame without a score row is an error"""
        merged = frame_labels.merge(scores, on=FRAME_KEY, how='left', validate='one_to_one')
        missing = merged['score'].isna()
        if missing.any():
            first = merged[missing].iloc[0]
            raise RecordValidationError(
                f"{int(missing.sum())} labelled frames have no score (first: {first['video']} frame {first['frame']})"
            )
        return merged.sort_values(FRAME_KEY, kind='mergesort').reset_index(drop=True)

    @staticmethod
    def verdict_rates(merged):
        """(TPR, FPR) of the frame verdicts against the frame labels"""
        alarm = merged['verdict'] == 'anomalous'
        positive = merged['label'] == 1
        tpr = float((alarm & positive).sum() / max(positive.sum(), 1))
        fpr = float((alarm & ~positive).sum() / max((~positive).sum(), 1))
        return tpr, fpr

    @staticmethod
    def evaluate_scores(scores, frame_labels):
        """(RocCurve, labelled score table) for a `video,frame,score,verdict` table"""
        merged = EvaluationServices.join_frame_labels(scores, frame_labels)
        return roc_auc(merged['score'], merged['label']), merged

    @staticmethod
    def evaluation_set_from_dataset(features, dataset, name='dataset'):
        return EvaluationSet(
            name=name,
            features=features,
            object_labels=dataset.object_labels,
            frame_labels=EvaluationServices.frame_labels_from_dataset(dataset),
        )

    @staticmethod
    def evaluation_set_from_scenario(scenario):
        test_videos = set(scenario.object_labels.loc[scenario.object_labels['split'] == 'test', 'video'])
        frame_labels = scenario.frame_labels[scenario.frame_labels['video'].isin(test_videos)]
        return EvaluationSet(
            name=scenario.name,
            features=scenario.features,
            object_labels=scenario.object_labels,
            frame_labels=frame_labels.reset_index(drop=True),
        )

    @staticmethod
    def test_features(evaluation_set):
        test_keys = evaluation_set.object_labels.loc[evaluation_set.object_labels['split'] == 'test', KEY_COLUMNS]
        return evaluation_set.features.merge(test_keys, on=KEY_COLUMNS, how='inner')

    @staticmethod
    def fit_and_score(evaluation_set, cfg, columns=DESCRIPTOR_COLUMNS, baseline=False):
        """
        Train on the set's train split and score its test frames

        PHASE 1: Fit the ensemble (or the normal-only baseline)
        PHASE 2: Score test objects and aggregate every labelled frame
        PHASE 3: ROC against the frame labels
        """
        # PHASE 1: Fit
        columns = list(columns)
        if baseline:
            normal, _ = InferenceServices.training_samples(
                evaluation_set.features, evaluation_set.object_labels, cfg.normal_samples, 0, cfg.seed, columns
            )
            model = InferenceServices.baseline_normal_only(normal, cfg, columns=columns)
        else:
            model = InferenceServices.fit_from_tables(evaluation_set.features, evaluation_set.object_labels, cfg, columns)

        # PHASE 2: Score
        objects = InferenceServices.score_objects(model, EvaluationServices.test_features(evaluation_set))
        frame_keys = evaluation_set.frame_labels[FRAME_KEY].itertuples(index=False, name=None)
        frames = InferenceServices.frames_to_table(InferenceServices.aggregate_frames(objects, list(frame_keys)))

        # PHASE 3: Evaluate
        roc, merged = EvaluationServices.evaluate_scores(frames, evaluation_set.frame_labels)
        return ScoredRun(model=model, objects=objects, frames=merged, roc=roc)

    @staticmethod
    def roc_table(roc):
        return pd.DataFrame({'threshold': roc.thresholds, 'fpr': roc.fpr, 'tpr': roc.tpr})


class GridSearchServices:

    @staticmethod
    def _verdict_rates(objects, frame_labels, mu):
        """
        Frame verdict TPR/FPR when the fitted model is re-thresholded at mu

        eta only splits alarms into anomalous and unknown, so it leaves the rates unchanged.
        """
        normal = (objects['alpha'] > objects['beta']) & (objects['alpha'] > mu)
        alarms = objects[FRAME_KEY].assign(alarm=~normal).groupby(FRAME_KEY, as_index=False)['alarm'].any()
        merged = frame_labels.merge(alarms, on=FRAME_KEY, how='left')
        merged['verdict'] = np.where(merged['alarm'].eq(True), 'anomalous', 'normal')
        return EvaluationServices.verdict_rates(merged)

    @staticmethod
    def grid_search(evaluation_set, grid, base_cfg, seed):
        """
        Sweep K1/K2/N/C/gamma, score every cell once and re-threshold it at every (mu, eta)

        PHASE 1: Enumerate cells; N=0 cells train the K2-free baseline, N < K2 or N above the pool are skipped
        PHASE 2: Fit and score each feasible cell
        PHASE 3: Select the best AUC, ties to the smallest K1+K2 then the smallest (mu, eta)
        """
        labels = evaluation_set.object_labels
        pool = int(((labels['split'] == 'train') & (labels['label'] == 1)).sum())
        rows, skipped = [], []

        # PHASE 1: Cells
        for n, k1 in product(grid.n, grid.k1):
            for k2, C, gamma in product((0,) if n == 0 else grid.k2, grid.C, grid.gamma):
                cell = {'k1': k1, 'k2': k2, 'n': n, 'C': C, 'gamma': 'auto' if gamma is None else gamma}
                if n < k2 or n > pool:
                    reason = f"N={n} < K2={k2}" if n < k2 else f"N={n} exceeds the {pool} anomalous training objects"
                    skipped.append({**cell, 'reason': reason})
                    logger.info("grid cell %s skipped: %s", cell, reason)
                    continue

                # PHASE 2: Fit and score
                cfg = replace(
                    base_cfg, k1=k1, k2=k2, anomalous_samples=n, seed=seed, svm=replace(base_cfg.svm, C=C, gamma=gamma)
                )
                try:
                    run = EvaluationServices.fit_and_score(evaluation_set, cfg)
                except (ConfigError, RecordValidationError) as exc:
                    skipped.append({**cell, 'reason': str(exc)})
                    logger.info("grid cell %s skipped: %s", cell, exc)
                    continue
                logger.info("grid cell %s: AUC %.4f", cell, run.roc.auc)
                for mu, eta in product(grid.mu, grid.eta):
                    tpr, fpr = GridSearchServices._verdict_rates(run.objects, evaluation_set.frame_labels, mu)
                    rows.append({**cell, 'mu': mu, 'eta': eta, 'auc': run.roc.auc, 'verdict_tpr': tpr,
                                 'verdict_fpr': fpr})
        if not rows:
            raise ConfigError("every grid cell was skipped; widen the grid or add anomalous training objects")

        # PHASE 3: Select
        table = pd.DataFrame(rows, columns=GRID_COLUMNS)
        ranked = table.assign(size=table['k1'] + table['k2'], neg_auc=-table['auc']).sort_values(
            ['neg_auc', 'size', 'mu', 'eta'], kind='mergesort'
        )
        selected = table.loc[ranked.index[0]].to_dict()
        logger.info("grid search: %d rows, %d cells skipped, selected %s", len(table), len(skipped), selected)
        return GridSearchReport(table=table, selected=selected, seed=seed, skipped=tuple(skipped))

    @staticmethod
    def write_report(report, csv_path, selection_path):
        """Grid table as CSV; selected cell, seed and skipped cells as JSON"""
        atomic_write_text(csv_path, report.table.to_csv(index=False, float_format='%.6f', lineterminator='\n'))
        selection = {'seed': report.seed, 'selected': report.selected, 'skipped': list(report.skipped)}
        atomic_write_text(selection_path, json.dumps(selection, indent=2, sort_keys=True, default=json_default) + '\n')
        return Path(csv_path), Path(selection_path)


class ExperimentServices:

    @staticmethod
    def evaluation_sets(name, experiment_cfg, dataset_set=None):
        """
        (seed, EvaluationSet) per configured seed: a fresh descriptor-level
        table per seed, or the dataset set reused with a different model seed
        """
        if experiment_cfg.source == 'dataset':
            if dataset_set is None:
                raise ConfigError(f"{name}: the dataset source needs extracted features and a dataset")
            return [(seed, dataset_set) for seed in experiment_cfg.seeds]
        build = DESCRIPTOR_SCENARIOS[EXPERIMENT_SCENARIOS[name]]
        return [
            (seed, EvaluationServices.evaluation_set_from_scenario(build(replace(experiment_cfg.scenario, seed=seed))))
            for seed in experiment_cfg.seeds
        ]

    @staticmethod
    def _curve_rows(variant, series, x, y):
        return pd.DataFrame({'variant': variant, 'series': series, 'x': np.asarray(x, float), 'y': np.asarray(y, float)})

    @staticmethod
    def _scatter(evaluation_set, columns, limit, seed, split):
        """Standardized PCA scatter of up to ``limit`` normal and ``limit`` anomalous objects of a split"""
        merged = evaluation_set.features.merge(evaluation_set.object_labels, on=KEY_COLUMNS)
        merged = merged[merged['split'] == split].sort_values(KEY_COLUMNS, kind='mergesort')
        rng = np.random.default_rng(seed)
        picked = []
        for label in (0, 1):
            rows = merged[merged['label'] == label]
            if len(rows) > limit:
                rows = rows.iloc[np.sort(rng.choice(len(rows), size=limit, replace=False))]
            picked.append(rows)
        sample = pd.concat(picked)
        values = sample[list(columns)].to_numpy(dtype=np.float64)
        projection = pca_project_2d(InferenceServices.standardize_fit(values).apply(values))
        return projection, sample['label'].to_numpy()

    @staticmethod
    def _timeline(runs, title):
        """Score timeline of the first test video for each variant's run"""
        first = next(iter(runs.values())).frames
        video = first['video'].iloc[0]
        frames = first[first['video'] == video].reset_index(drop=True)
        series = {
            variant: run.frames.loc[run.frames['video'] == video, 'score'].to_numpy() for variant, run in runs.items()
        }
        curves = [ExperimentServices._curve_rows(v, 'timeline', frames['frame'], s) for v, s in series.items()]
        return plots.score_timeline(frames, series, f"{title}: {video}"), curves

    @staticmethod
    def decision_boundaries(inference_cfg, seed, resolution=120):
        """
        Decision-boundary chart of the ensemble and the normal-only baseline on
        the 2-D local-anomaly set, with each model's AUC of local anomalies
        against the normal samples

        PHASE 1: Draw the 2-D set and fit both models on it
        PHASE 2: Evaluate decision values and scores on a grid
        PHASE 3: Chart the boundaries and separate local anomalies from normal samples
        """
        # PHASE 1: Fit
        points, labels, local = local_anomaly_plane(seed)
        cfg = replace(inference_cfg, seed=seed, k2=max(inference_cfg.k2, 1))
        columns = ('x', 'y')
        ensemble = InferenceServices.ensemble_fit(points[labels == 0], points[labels == 1], cfg, columns)
        baseline = InferenceServices.baseline_normal_only(points[labels == 0], cfg, columns)

        # PHASE 2: Grid
        low, high = points.min(axis=0) - 1.0, points.max(axis=0) + 1.0
        xx, yy = np.meshgrid(np.linspace(low[0], high[0], resolution), np.linspace(low[1], high[1], resolution))
        grid = np.column_stack([xx.ravel(), yy.ravel()])

        def decisions(model):
            standardized = model.standardizer.apply(grid)
            return [c.decision_function(standardized).reshape(xx.shape) for c in model.classifiers]

        def object_scores(model, samples):
            alpha, beta = InferenceServices.alpha_beta(InferenceServices.classifier_scores(model, samples), model.k1)
            return 1.0 - alpha if model.mode == 'baseline' else (1.0 + beta - alpha) / 2.0

        ensemble_decisions = decisions(ensemble)
        pools = ['normal'] * ensemble.k1 + ['anomalous'] * ensemble.k2
        panels = [
            (f'K1={ensemble.k1} + K2={ensemble.k2} classifiers', object_scores(ensemble, grid).reshape(xx.shape),
             list(zip(ensemble_decisions, pools))),
            ('anomalous-pool classifiers', None,
             [(d, pool) for d, pool in zip(ensemble_decisions, pools) if pool == 'anomalous']),
            (f'normal samples only ({baseline.k1} clusters)', object_scores(baseline, grid).reshape(xx.shape),
             [(d, 'normal') for d in decisions(baseline)]),
        ]

        # PHASE 3: Chart and local-anomaly separation
        chart = plots.decision_boundary_chart(points, labels, local, xx, yy, panels, 'decision boundaries')
        subset = (labels == 0) | local
        aucs = {
            name: roc_auc(object_scores(model, points[subset]), labels[subset]).auc
            for name, model in (('ensemble', ensemble), ('baseline', baseline))
        }
        logger.info("local anomalies vs normal samples: ensemble AUC %.4f, baseline AUC %.4f",
                    aucs['ensemble'], aucs['baseline'])
        return chart, aucs

    @staticmethod
    def _variants(name, cfg, experiment_cfg):
        """(variant, inference config, columns, baseline flag) per variant of an experiment"""
        if name == 'context-ablation':
            return [
                ('with-context', cfg, DESCRIPTOR_COLUMNS, False),
                ('without-context', cfg, TEMPORAL_COLUMNS + APPEARANCE_COLUMNS, False),
            ]
        if name == 'fewshot-ablation':
            variants = []
            for n in experiment_cfg.n_values:
                n_cfg = replace(cfg, k2=0, anomalous_samples=0) if n == 0 else replace(
                    cfg, k2=min(cfg.k2, n), anomalous_samples=n
                )
                variants.append((f'N={n}', n_cfg, DESCRIPTOR_COLUMNS, False))
            return variants
        if name == 'baseline-comparison':
            return [('baseline', cfg, DESCRIPTOR_COLUMNS, True), ('ensemble', cfg, DESCRIPTOR_COLUMNS, False)]
        if name == 'feature-subsets':
            return [(subset, cfg, columns, False) for subset, columns in FEATURE_SUBSETS.items()]
        raise ConfigError(f"unknown experiment {name!r}; choose one of {EXPERIMENTS}")

    @staticmethod
    def run_experiment(name, inference_cfg, experiment_cfg, dataset_set=None):
        """
        Run every variant of an experiment for every seed

        PHASE 1: Build the evaluation sets and variants
        PHASE 2: Fit and score each (seed, variant)
        PHASE 3: Plot data and charts from the first seed, AUC summaries over all seeds
        """
        # PHASE 1: Inputs
        variants = ExperimentServices._variants(name, inference_cfg, experiment_cfg)
        sets = ExperimentServices.evaluation_sets(name, experiment_cfg, dataset_set)

        # PHASE 2: Runs
        rows, first_runs = [], {}
        for seed, evaluation_set in sets:
            for variant, cfg, columns, baseline in variants:
                run = EvaluationServices.fit_and_score(evaluation_set, replace(cfg, seed=seed), columns, baseline)
                rows.append({'variant': variant, 'seed': seed, 'auc': run.roc.auc})
                logger.info("%s [%s] seed %d: AUC %.4f", name, variant, seed, run.roc.auc)
                if seed == sets[0][0]:
                    first_runs[variant] = run
        runs = pd.DataFrame(rows, columns=['variant', 'seed', 'auc'])

        # PHASE 3: Plots
        first_seed, first_set = sets[0]
        curves = [
            ExperimentServices._curve_rows(variant, 'roc', run.roc.fpr, run.roc.tpr)
            for variant, run in first_runs.items()
        ]
        charts = {'roc.svg': plots.roc_chart({v: r.roc for v, r in first_runs.items()}, f"{name} (seed {first_seed})")}
        limit = experiment_cfg.scatter_samples
        if name == 'context-ablation':
            for variant, _, columns, _ in variants:
                projection, labels = ExperimentServices._scatter(first_set, columns, limit, first_seed, 'test')
                charts[f'pca_{variant.replace("-", "_")}.svg'] = plots.pca_scatter(projection, labels, variant)
            charts['timeline.svg'], timeline = ExperimentServices._timeline(first_runs, name)
            curves.extend(timeline)
        elif name == 'baseline-comparison':
            projection, labels = ExperimentServices._scatter(first_set, DESCRIPTOR_COLUMNS, limit, first_seed, 'train')
            charts['pca_training_set.svg'] = plots.pca_scatter(projection, labels, 'training set')
            charts['decision_boundaries.svg'], _ = ExperimentServices.decision_boundaries(inference_cfg, first_seed)
            charts['timeline.svg'], timeline = ExperimentServices._timeline(first_runs, name)
            curves.extend(timeline)
        elif name == 'fewshot-ablation':
            means = runs.groupby('variant', sort=False)['auc'].mean()
            n_values = list(experiment_cfg.n_values)
            curves.append(ExperimentServices._curve_rows('ensemble', 'auc_by_n', n_values, means.to_numpy()))
            charts['auc_by_n.svg'] = plots.auc_line_chart(
                n_values, {'mean over seeds': means.to_numpy()}, 'anomalous training samples N', name
            )
        for variant in dict.fromkeys(runs['variant']):
            logger.info("%s [%s]: mean AUC %.4f over %d seeds", name, variant,
                        runs.loc[runs['variant'] == variant, 'auc'].mean(), len(sets))
        return ExperimentReport(name=name, runs=runs, curves=pd.concat(curves, ignore_index=True)[CURVE_COLUMNS],
                                charts=charts)

    @staticmethod
    def report_table(report):
        """Per-seed rows followed by one mean row per variant"""
        means = report.runs.groupby('variant', sort=False, as_index=False)['auc'].mean().assign(seed='mean')
        return pd.concat([report.runs.astype({'seed': str}), means[['variant', 'seed', 'auc']]], ignore_index=True)

    @staticmethod
    def write_report(report, out_dir):
        """Publish report.csv, curves.csv and the charts as one directory"""
        with atomic_directory(out_dir) as staging:
            atomic_write_text(staging / 'report.csv', ExperimentServices.report_table(report).to_csv(
                index=False, float_format='%.6f', lineterminator='\n'))
            atomic_write_text(staging / 'curves.csv', report.curves.to_csv(
                index=False, float_format='%.6f', lineterminator='\n'))
            for file_name, svg in sorted(report.charts.items()):
                atomic_write_bytes(staging / file_name, svg)
        logger.info("experiment %s written to %s", report.name, out_dir)
        return Path(out_dir)
