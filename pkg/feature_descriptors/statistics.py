"""First-order statistics of single-channel intensity grids in [0, 1]."""
from dataclasses import dataclass

import numpy as np
from scipy.stats import entropy

from core_main.exceptions import RecordValidationError

HISTOGRAM_BINS = 256

# Variances at or below this are treated as exactly zero
DEGENERATE_VARIANCE = 1e-20


@dataclass(frozen=True)
class FirstOrderStats:
    mean: float
    variance: float
    kurtosis: float
    energy: float
    skewness: float
    entropy: float

    def as_array(self):
        """S1..S6 in descriptor order"""
        return np.array([self.mean, self.variance, self.kurtosis, self.energy, self.skewness, self.entropy])


def histogram_bins(values):
    return np.minimum((values * HISTOGRAM_BINS).astype(np.int64), HISTOGRAM_BINS - 1)


def first_order_stats(patch):
    """
    Mean, population variance, non-excess kurtosis, energy (mean of squares),
    skewness and 256-bin entropy in bits. Skewness and kurtosis are 0 for a
    constant patch.
    """
    values = np.asarray(patch, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise RecordValidationError("statistics need at least one pixel")

    mean = values.mean()
    centred = values - mean
    variance = np.mean(centred ** 2)
    if variance <= DEGENERATE_VARIANCE:
        variance = skewness = kurtosis = 0.0
    else:
        skewness = np.mean(centred ** 3) / variance ** 1.5
        kurtosis = np.mean(centred ** 4) / variance ** 2

    counts = np.bincount(histogram_bins(np.clip(values, 0.0, 1.0)), minlength=HISTOGRAM_BINS)
    return FirstOrderStats(
        mean=float(mean),
        variance=float(variance),
        kurtosis=float(kurtosis),
        energy=float(np.mean(values ** 2)),
        skewness=float(skewness),
        entropy=float(entropy(counts, base=2)),
    )
