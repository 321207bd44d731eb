"""
Soft-margin SVM dual solver and Platt calibration.

The dual is

    min_a  1/2 a^T Q a - sum(a),   Q_ij = y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C_i,  y^T a = 0

solved by pairwise coordinate descent on the maximal violating pair.
"""
import logging

import numpy as np
from scipy.optimize import minimize
from sklearn.metrics.pairwise import linear_kernel, rbf_kernel

from core_main.exceptions import ConvergenceError

logger = logging.getLogger(__name__)

# floor for the curvature of a pair direction (non-PSD kernels, duplicate samples)
TAU = 1e-12


def kernel_matrix(a, b, kernel, gamma=None):
    if kernel == 'linear':
        return linear_kernel(a, b)
    return rbf_kernel(a, b, gamma=gamma)


def default_gamma(samples):
    """1 / (d * variance) over every entry of the training matrix"""
    samples = np.asarray(samples, dtype=np.float64)
    variance = samples.var()
    return 1.0 / (samples.shape[1] * variance) if variance > 0 else 1.0


def class_weighted_bounds(y, C):
    """Per-sample box bound with C_pos * n_pos == C_neg * n_neg == C * n / 2"""
    n = len(y)
    n_pos = int(np.sum(y > 0))
    n_neg = n - n_pos
    return np.where(y > 0, C * n / (2.0 * n_pos), C * n / (2.0 * n_neg))


def dual_objective(alpha, y, K):
    ya = alpha * y
    return 0.5 * ya @ K @ ya - alpha.sum()


def _violating_pair(alpha, y, gradient, bounds):
    """(i, j, gap) of the maximal violating pair over the up/low index sets"""
    score = -y * gradient
    up = ((y > 0) & (alpha < bounds)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < bounds))
    up_scores = np.where(up, score, -np.inf)
    low_scores = np.where(low, score, np.inf)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, up_scores[i] - low_scores[j]


def _update_pair(alpha, y, gradient, Q, bounds, i, j):
    """Analytic two-variable step on (i, j), clipped to the box"""
    a_i, a_j = alpha[i], alpha[j]
    c_i, c_j = bounds[i], bounds[j]
    if y[i] != y[j]:
        quad = max(Q[i, i] + Q[j, j] + 2 * Q[i, j], TAU)
        delta = (-gradient[i] - gradient[j]) / quad
        diff = a_i - a_j
        a_i += delta
        a_j += delta
        if diff > 0:
            if a_j < 0:
                a_j, a_i = 0.0, diff
        elif a_i < 0:
            a_i, a_j = 0.0, -diff
        if diff > c_i - c_j:
            if a_i > c_i:
                a_i, a_j = c_i, c_i - diff
        elif a_j > c_j:
            a_j, a_i = c_j, c_j + diff
    else:
        quad = max(Q[i, i] + Q[j, j] - 2 * Q[i, j], TAU)
        delta = (gradient[i] - gradient[j]) / quad
        total = a_i + a_j
        a_i -= delta
        a_j += delta
        if total > c_i:
            if a_i > c_i:
                a_i, a_j = c_i, total - c_i
        elif a_j < 0:
            a_j, a_i = 0.0, total
        if total > c_j:
            if a_j > c_j:
                a_j, a_i = c_j, total - c_j
        elif a_i < 0:
            a_i, a_j = 0.0, total
    gradient += Q[:, i] * (a_i - alpha[i]) + Q[:, j] * (a_j - alpha[j])
    alpha[i], alpha[j] = a_i, a_j


def _offset(alpha, y, gradient, bounds):
    """rho such that f(x) = sum a_i y_i K(x_i, x) - rho; averaged over free vectors"""
    yg = y * gradient
    at_upper = alpha >= bounds
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub = np.concatenate([yg[at_upper & (y < 0)], yg[at_lower & (y > 0)]])
    lb = np.concatenate([yg[at_upper & (y > 0)], yg[at_lower & (y < 0)]])
    upper = ub.min() if len(ub) else np.inf
    lower = lb.max() if len(lb) else -np.inf
    return float((upper + lower) / 2)


def smo_solve(K, y, bounds, tol=1e-3, max_iter=200000):
    """
    Solve the dual for the Gram matrix ``K``, labels ``y`` in {-1, +1} and
    per-sample box ``bounds``

    Stops when the maximal KKT violation gap drops below ``tol``. Returns
    (alpha, rho, iterations).
    """
    y = np.asarray(y, dtype=np.float64)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(len(y))
    gradient = -np.ones(len(y))
    for iteration in range(max_iter):
        i, j, gap = _violating_pair(alpha, y, gradient, bounds)
        if gap < tol:
            break
        _update_pair(alpha, y, gradient, Q, bounds, i, j)
    else:
        raise ConvergenceError(
            f"SMO did not reach KKT gap {tol} within {max_iter} iterations (gap {gap:.3e}, {len(y)} samples)"
        )
    logger.debug("SMO converged after %d iterations on %d samples", iteration, len(y))
    return alpha, _offset(alpha, y, gradient, bounds), iteration


def platt_fit(decision_values, y):
    """
    Sigmoid parameters (A, B) of P(y=1 | f) = 1 / (1 + exp(A f + B)) by BFGS
    on the cross-entropy against regularized targets
    """
    f = np.asarray(decision_values, dtype=np.float64)
    positive = y > 0
    prior1 = float(positive.sum())
    prior0 = float(len(y) - prior1)
    target = np.where(positive, (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0))

    def objective(theta):
        z = theta[0] * f + theta[1]
        return float(np.sum(np.logaddexp(0.0, z) - (1.0 - target) * z))

    def gradient(theta):
        z = theta[0] * f + theta[1]
        # d/dz of the per-sample loss is T - P with P = 1 / (1 + exp(z))
        residual = target - 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
        return np.array([residual @ f, residual.sum()])

    start = np.array([0.0, np.log((prior0 + 1.0) / (prior1 + 1.0))])
    result = minimize(objective, start, jac=gradient, method='BFGS')
    return float(result.x[0]), float(result.x[1])
