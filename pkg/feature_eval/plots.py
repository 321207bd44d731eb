"""Static SVG charts; every function returns the SVG document as bytes."""
import io

import numpy as np
from matplotlib.figure import Figure

NORMAL_COLOR = '#1f77b4'
ANOMALY_COLOR = '#d62728'


def _svg(figure):
    buffer = io.BytesIO()
    # no creation date, so equal data gives byte-equal files
    figure.savefig(buffer, format='svg', metadata={'Date': None})
    return buffer.getvalue()


def roc_chart(curves, title):
    """``curves`` maps a legend label to a RocCurve"""
    figure = Figure(figsize=(5, 5))
    ax = figure.add_subplot()
    for label, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, label=f"{label} (AUC {curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], linestyle=':', color='gray')
    ax.set_xlabel('false positive rate')
    ax.set_ylabel('true positive rate')
    ax.set_title(title)
    ax.legend(loc='lower right')
    return _svg(figure)


def pca_scatter(projection, labels, title):
    labels = np.asarray(labels).astype(bool)
    figure = Figure(figsize=(6, 5))
    ax = figure.add_subplot()
    ax.scatter(*projection.points[~labels].T, s=8, color=NORMAL_COLOR, label='normal')
    ax.scatter(*projection.points[labels].T, s=8, color=ANOMALY_COLOR, label='anomalous')
    first, second = projection.explained_variance
    ax.set_xlabel(f'PC1 ({first:.1%})')
    ax.set_ylabel(f'PC2 ({second:.1%})')
    ax.set_title(title)
    ax.legend(loc='best')
    return _svg(figure)


def score_timeline(frames, series, title):
    """
    Frame scores over time with anomalous frames shaded

    ``frames`` is a table with ``frame`` and ``label``; ``series`` maps a
    legend label to a score array aligned with it.
    """
    figure = Figure(figsize=(9, 3.5))
    ax = figure.add_subplot()
    x = frames['frame'].to_numpy()
    ax.fill_between(x, 0, 1, where=frames['label'].to_numpy() > 0, step='mid', color=ANOMALY_COLOR, alpha=0.15,
                    label='anomalous frames')
    for label, scores in series.items():
        ax.plot(x, scores, linewidth=1, label=label)
    ax.set_ylim(0, 1)
    ax.set_xlabel('frame')
    ax.set_ylabel('anomaly score')
    ax.set_title(title)
    ax.legend(loc='upper right')
    return _svg(figure)


def auc_line_chart(x, series, xlabel, title):
    """``series`` maps a legend label to y values aligned with ``x``"""
    figure = Figure(figsize=(6, 4))
    ax = figure.add_subplot()
    for label, values in series.items():
        ax.plot(x, values, marker='o', label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel('frame AUC')
    ax.set_title(title)
    ax.grid(which='major', linestyle='-', alpha=0.4)
    ax.legend(loc='lower right')
    return _svg(figure)


def decision_boundary_chart(points, labels, local, xx, yy, panels, title):
    """
    2-D samples (local anomalies ringed) followed by one panel per fitted model

    ``panels`` holds (title, score grid or None, boundaries) triples; each
    boundary is a (decision grid, pool) pair drawn at decision value 0, with
    pool 'normal' or 'anomalous'. Score grids share ``xx``/``yy``.
    """
    labels = np.asarray(labels).astype(bool)
    figure = Figure(figsize=(10, 9))
    axes = figure.subplots(2, 2).ravel()

    ax = axes[0]
    ax.scatter(*points[~labels].T, s=8, color=NORMAL_COLOR, label='normal')
    ax.scatter(*points[labels & ~local].T, s=8, color=ANOMALY_COLOR, label='anomalous')
    ax.scatter(*points[local].T, s=36, facecolors=ANOMALY_COLOR, edgecolors='black', label='local anomalies')
    ax.set_title('samples')
    ax.legend(loc='best')

    for ax, (panel_title, scores, boundaries) in zip(axes[1:], panels):
        if scores is not None:
            filled = ax.contourf(xx, yy, scores, levels=np.linspace(0.0, 1.0, 11), cmap='coolwarm', alpha=0.35)
            figure.colorbar(filled, ax=ax, label='anomaly score')
        for decision, pool in boundaries:
            color = ANOMALY_COLOR if pool == 'anomalous' else NORMAL_COLOR
            ax.contour(xx, yy, decision, levels=[0.0], colors=[color], linewidths=1.2)
        ax.scatter(*points[~labels].T, s=4, color=NORMAL_COLOR, alpha=0.5)
        ax.scatter(*points[labels].T, s=4, color=ANOMALY_COLOR, alpha=0.5)
        ax.set_title(panel_title)
    for ax in axes[1 + len(panels):]:
        ax.set_axis_off()
    for ax in axes:
        ax.set_xlim(xx.min(), xx.max())
        ax.set_ylim(yy.min(), yy.max())
    figure.suptitle(title)
    return _svg(figure)
