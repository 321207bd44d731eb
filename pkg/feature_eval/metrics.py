"""ROC/AUC over frame scores and 2-D PCA projections."""
import numpy as np

from core_main.exceptions import DimensionMismatchError, RecordValidationError
from feature_eval.domain import PcaProjection, RocCurve


def _scores_and_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise DimensionMismatchError(f"{len(scores)} scores for {len(labels)} labels")
    if not np.isin(labels, (0, 1)).all():
        raise RecordValidationError("labels must be 0 or 1")
    labels = labels.astype(bool)
    if labels.all() or not labels.any():
        raise RecordValidationError("AUC needs at least one positive and one negative frame")
    if not np.isfinite(scores).all():
        raise RecordValidationError("scores must be finite")
    return scores, labels


def roc_auc(scores, labels):
    """
    Threshold sweep over the distinct scores, highest first

    Tied scores enter the curve together, so the trapezoid area equals
    P(pos > neg) + P(pos == neg) / 2.
    """
    scores, labels = _scores_and_labels(scores, labels)
    order = np.argsort(-scores, kind='mergesort')
    scores, labels = scores[order], labels[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(scores)), len(scores) - 1]
    true_positives = np.cumsum(labels)[last_of_run]
    false_positives = (last_of_run + 1) - true_positives
    tpr = np.r_[0.0, true_positives / labels.sum()]
    fpr = np.r_[0.0, false_positives / (~labels).sum()]
    thresholds = np.r_[np.inf, scores[last_of_run]]
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=float(np.trapezoid(tpr, fpr)))


def auc_pairwise_oracle(scores, labels):
    """Count of correctly ordered (positive, negative) pairs, ties counting half"""
    scores, labels = _scores_and_labels(scores, labels)
    positives, negatives = scores[labels], scores[~labels]
    wins = 0.0
    for p in positives:
        for n in negatives:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(positives) * len(negatives))


def pca_project_2d(descriptors):
    """
    Projection of mean-centred samples onto the two leading eigenvectors of
    their covariance; each axis is signed so its largest loading is positive
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2 or descriptors.shape[0] < 3:
        raise RecordValidationError("PCA needs at least 3 samples")
    if descriptors.shape[1] < 2:
        raise DimensionMismatchError("PCA to 2-D needs at least 2 dimensions")
    mean = descriptors.mean(axis=0)
    centred = descriptors - mean
    covariance = centred.T @ centred / (len(descriptors) - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    components = eigenvectors[:, order[:2]]
    signs = np.sign(components[np.argmax(np.abs(components), axis=0), [0, 1]])
    components = components * np.where(signs == 0, 1.0, signs)
    total = eigenvalues.sum()
    explained = eigenvalues[:2] / total if total > 0 else np.zeros(2)
    return PcaProjection(points=centred @ components, explained_variance=explained, components=components, mean=mean)
