"""k-means++ seeding and Lloyd iterations over (n, d) float64 arrays."""
import logging

import numpy as np
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
# largest centre movement that still counts as converged
CENTER_TOLERANCE = 1e-6


def nearest_center(samples, centers):
    """(index of the nearest centre, squared distance to it) per sample"""
    distances = cdist(samples, centers, 'sqeuclidean')
    labels = np.argmin(distances, axis=1)
    return labels, distances[np.arange(len(samples)), labels]


def kmeans_plus_plus(samples, k, rng):
    """First centre uniform, every further one drawn with probability proportional to D(x)^2"""
    centers = [samples[rng.integers(len(samples))]]
    closest = cdist(samples, centers[:1], 'sqeuclidean')[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = rng.choice(len(samples), p=closest / total)
        else:
            index = rng.integers(len(samples))
        centers.append(samples[index])
        closest = np.minimum(closest, cdist(samples, samples[index][None], 'sqeuclidean')[:, 0])
    return np.array(centers, dtype=np.float64)


def _reseed_empty(samples, centers, labels, distances):
    """Move every empty centre onto the sample farthest from its own centre"""
    counts = np.bincount(labels, minlength=len(centers))
    distances = distances.copy()
    for cluster in np.flatnonzero(counts == 0):
        farthest = int(np.argmax(distances))
        logger.warning("k-means cluster %d became empty, reseeding from sample %d", cluster, farthest)
        centers[cluster] = samples[farthest]
        labels[farthest] = cluster
        distances[farthest] = -1.0
    return centers, labels


def lloyd(samples, centers, max_iterations=MAX_ITERATIONS, tolerance=CENTER_TOLERANCE):
    """
    Alternate assignment and mean updates from ``centers``

    Returns (centers, labels, inertia, iterations).
    """
    centers = np.array(centers, dtype=np.float64)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        labels, distances = nearest_center(samples, centers)
        centers_before = centers.copy()
        centers, labels = _reseed_empty(samples, centers, labels, distances)
        for cluster in range(len(centers)):
            members = samples[labels == cluster]
            if len(members):
                centers[cluster] = members.mean(axis=0)
        if np.max(np.linalg.norm(centers - centers_before, axis=1)) < tolerance:
            break
    labels, distances = nearest_center(samples, centers)
    return centers, labels, float(distances.sum()), iterations


def kmeans(samples, k, seed, n_init=10):
    """
    Best of ``n_init`` seeded k-means++ / Lloyd runs (lowest inertia, first wins ties)

    Returns (centers, labels, inertia).
    """
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(n_init):
        centers, labels, inertia, iterations = lloyd(samples, kmeans_plus_plus(samples, k, rng))
        logger.debug("k-means run %d/%d: inertia %.6f after %d iterations", attempt + 1, n_init, inertia, iterations)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    return best
