"""
Descriptor-level scenario sets.

These skip rendering and autoencoders and draw 22-value descriptors directly,
so inference and evaluation can be exercised on anomalies of a known kind:

* local anomalies sit next to normal clusters, shifted along one direction of
  the temporal block
* contextual anomalies share the temporal and appearance distribution of
  their object class and differ only in the contextual histogram

A 2-D point set with local anomalies backs the decision-boundary chart.
"""
import numpy as np
import pandas as pd

from feature_data.domain import CONSTRUCTION, DESCRIPTOR_COLUMNS, GREENERY, ROAD, WATER
from feature_data.services import KEY_COLUMNS, OBJECT_LABEL_COLUMNS
from feature_synth.domain import DescriptorScenario
from feature_synth.motion import rng_stream

STREAM_LOCAL = 20
STREAM_CONTEXTUAL = 21
STREAM_PLANE = 22

CONTEXT = slice(0, 4)
TEMPORAL = slice(4, 13)
APPEARANCE_AND_TEMPORAL = slice(4, 22)

# Dirichlet concentration of contextual histograms around their class profile
CONCENTRATION = 40.0

# normal cluster centres of the 2-D set, and where its far anomalies sit
PLANE_CENTRES = np.array([[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]])
PLANE_FAR_ANOMALIES = np.array([0.0, -6.0])


def _profile(*weights):
    profile = np.zeros(4)
    for index, weight in weights:
        profile[index] = weight
    return profile / profile.sum()


PEDESTRIAN_CONTEXT = _profile((GREENERY, 0.8), (ROAD, 0.1), (CONSTRUCTION, 0.05), (WATER, 0.05))
VEHICLE_CONTEXT = _profile((GREENERY, 0.1), (ROAD, 0.85), (CONSTRUCTION, 0.05))
OFF_ROAD_CONTEXT = _profile((GREENERY, 0.6), (ROAD, 0.1), (CONSTRUCTION, 0.3))
ON_ROAD_CONTEXT = _profile((GREENERY, 0.15), (ROAD, 0.85))


def _context(rng, profile, count):
    return rng.dirichlet(CONCENTRATION * profile + 0.5, size=count)


def _assemble(name, cfg, rng, draw):
    """
    Lay sampled objects out as a train video and a test video

    ``draw(count, anomalous)`` returns a (count, 22) array of descriptors.
    """
    # train video: every training object, shuffled, packed into frames
    train = np.concatenate([draw(cfg.n_train_normal, False), draw(cfg.n_train_anomalous, True)])
    train_labels = np.concatenate([np.zeros(cfg.n_train_normal, int), np.ones(cfg.n_train_anomalous, int)])
    order = rng.permutation(len(train))
    train, train_labels = train[order], train_labels[order]
    per_frame = cfg.objects_per_frame
    train_keys = [(f'train-{name}', i // per_frame, i % per_frame) for i in range(len(train))]

    # test video: normal frames, one anomalous object in a fixed share of them
    count = cfg.n_test_frames * per_frame
    test = draw(count, False)
    test_labels = np.zeros(count, int)
    n_anomalous = max(1, min(cfg.n_test_frames - 1, int(round(cfg.anomalous_frame_fraction * cfg.n_test_frames))))
    frames = np.sort(rng.choice(cfg.n_test_frames, size=n_anomalous, replace=False))
    slots = frames * per_frame + rng.integers(0, per_frame, size=n_anomalous)
    test[slots] = draw(n_anomalous, True)
    test_labels[slots] = 1
    test_keys = [(f'test-{name}', i // per_frame, i % per_frame) for i in range(count)]

    keys = pd.DataFrame(train_keys + test_keys, columns=KEY_COLUMNS)
    features = pd.concat(
        [keys, pd.DataFrame(np.concatenate([train, test]), columns=list(DESCRIPTOR_COLUMNS))], axis=1
    )
    object_labels = keys.assign(
        label=np.concatenate([train_labels, test_labels]),
        split=['train'] * len(train_keys) + ['test'] * len(test_keys),
    )[OBJECT_LABEL_COLUMNS]
    frame_labels = object_labels.groupby(['video', 'frame'], sort=True)['label'].max().reset_index()
    return DescriptorScenario(name=name, features=features, object_labels=object_labels, frame_labels=frame_labels)


def local_anomaly_table(cfg):
    """
    Normal objects from ``clusters`` Gaussian clusters; anomalies drawn from
    the same clusters shifted by ``anomaly_shift`` standard deviations along a
    fixed temporal direction
    """
    rng = rng_stream(cfg.seed, STREAM_LOCAL)
    centres = rng.normal(0.0, 4.0, size=(cfg.clusters, 18))
    profiles = rng.dirichlet(np.ones(4), size=cfg.clusters)
    direction = rng.normal(size=9)
    direction /= np.linalg.norm(direction)

    def draw(count, anomalous):
        members = rng.integers(0, cfg.clusters, size=count)
        samples = np.zeros((count, 22))
        samples[:, APPEARANCE_AND_TEMPORAL] = centres[members] + rng.normal(size=(count, 18))
        for cluster in range(cfg.clusters):
            chosen = members == cluster
            samples[chosen, CONTEXT] = _context(rng, profiles[cluster], int(chosen.sum()))
        if anomalous:
            samples[:, TEMPORAL] += cfg.anomaly_shift * direction
        return samples

    return _assemble('local', cfg, rng, draw)


def contextual_anomaly_table(cfg):
    """
    Pedestrians on greenery and vehicles on road; anomalies are pedestrians
    on road and vehicles off road whose other 18 values follow their class
    """
    rng = rng_stream(cfg.seed, STREAM_CONTEXTUAL)
    centres = {'human': rng.normal(0.0, 3.0, size=18), 'vehicle': rng.normal(0.0, 3.0, size=18)}
    normal_context = {'human': PEDESTRIAN_CONTEXT, 'vehicle': VEHICLE_CONTEXT}
    anomalous_context = {'human': ON_ROAD_CONTEXT, 'vehicle': OFF_ROAD_CONTEXT}

    def draw(count, anomalous):
        is_human = rng.random(count) < 0.5
        samples = np.zeros((count, 22))
        for object_class, chosen in (('human', is_human), ('vehicle', ~is_human)):
            n = int(chosen.sum())
            profile = (anomalous_context if anomalous else normal_context)[object_class]
            samples[chosen, CONTEXT] = _context(rng, profile, n)
            samples[chosen, APPEARANCE_AND_TEMPORAL] = centres[object_class] + rng.normal(size=(n, 18))
        return samples

    return _assemble('contextual', cfg, rng, draw)


def local_anomaly_plane(seed, n_normal=300, n_anomalous=100, local_fraction=0.25, shift=2.5):
    """
    (points, labels, local) of a 2-D set: normal points around three centres,
    anomalies split between a far group and local anomalies sitting ``shift``
    standard deviations from a normal centre along a fixed direction
    """
    rng = rng_stream(seed, STREAM_PLANE)
    direction = rng.normal(size=2)
    direction /= np.linalg.norm(direction)
    n_local = int(round(local_fraction * n_anomalous))

    normal = PLANE_CENTRES[rng.integers(0, len(PLANE_CENTRES), size=n_normal)] + rng.normal(size=(n_normal, 2))
    local = (
        PLANE_CENTRES[rng.integers(0, len(PLANE_CENTRES), size=n_local)]
        + shift * direction
        + 0.5 * rng.normal(size=(n_local, 2))
    )
    far = PLANE_FAR_ANOMALIES + 1.2 * rng.normal(size=(n_anomalous - n_local, 2))

    points = np.vstack([normal, local, far])
    labels = np.repeat([0, 1], [n_normal, n_anomalous])
    is_local = np.zeros(len(points), dtype=bool)
    is_local[n_normal:n_normal + n_local] = True
    return points, labels, is_local


DESCRIPTOR_SCENARIOS = {
    'local': local_anomaly_table,
    'contextual': contextual_anomaly_table,
}
