"""
Scenario description and generated scenario types.

A scene is a static background layout (a base class with rectangles of other
classes painted over it) populated with agents that patrol their waypoint
lists. Anomaly injections override an agent's motion or position over an
inclusive frame interval.
"""
from dataclasses import dataclass, field

import numpy as np

from core_main.exceptions import ConfigError
from feature_data.domain import BACKGROUND_CLASSES, GREENERY, OBJECT_CLASSES, frozen_array

ANOMALY_TYPES = (
    'pedestrian-on-road',
    'vehicle-off-road',
    'over-speed',
    'erratic-trajectory',
    'stopped-on-road',
    'pedestrian-gathering',
    'wrong-zone-parking',
)
AGENT_BEHAVIORS = ('patrol', 'static')
SPLITS = ('train', 'test')
# footprints are rendered into an 8-bit index grid
MAX_AGENTS = 254

# Which object class an injection may target (None: any)
REQUIRED_CLASS = {
    'pedestrian-on-road': 'human',
    'vehicle-off-road': 'vehicle',
    'pedestrian-gathering': 'human',
    'wrong-zone-parking': 'vehicle',
}


@dataclass(frozen=True)
class Region:
    class_index: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if not 0 <= self.class_index < len(BACKGROUND_CLASSES):
            raise ConfigError(f"unknown background class index {self.class_index}")
        if self.w < 1 or self.h < 1:
            raise ConfigError(f"region extents must be >= 1, got {self.w}x{self.h}")


@dataclass(frozen=True)
class SceneLayout:
    background: int = GREENERY
    regions: tuple = ()

    def __post_init__(self):
        if not 0 <= self.background < len(BACKGROUND_CLASSES):
            raise ConfigError(f"unknown background class index {self.background}")
        object.__setattr__(self, 'regions', tuple(self.regions))

    def rasterize(self, width, height):
        """Class-index grid (height x width); later regions paint over earlier ones"""
        labels = np.full((height, width), self.background, dtype=np.uint8)
        for region in self.regions:
            labels[max(region.y, 0):max(region.y + region.h, 0), max(region.x, 0):max(region.x + region.w, 0)] = (
                region.class_index
            )
        return labels


@dataclass(frozen=True)
class AgentSpec:
    """
    One moving (or parked) object

    ``waypoints`` are box centres in pixels; ``size`` is the box (w, h).
    Patrolling agents walk the polyline at ``speed`` px/frame and reverse at
    both ends.
    """

    agent_id: int
    object_class: str
    waypoints: tuple
    speed: float
    size: tuple
    behavior: str = 'patrol'

    def __post_init__(self):
        object.__setattr__(self, 'waypoints', tuple((float(x), float(y)) for x, y in self.waypoints))
        object.__setattr__(self, 'size', tuple(int(s) for s in self.size))
        if self.object_class not in OBJECT_CLASSES:
            raise ConfigError(f"agent {self.agent_id}: unknown object class {self.object_class!r}")
        if self.behavior not in AGENT_BEHAVIORS:
            raise ConfigError(f"agent {self.agent_id}: unknown behavior {self.behavior!r}")
        if not self.waypoints:
            raise ConfigError(f"agent {self.agent_id}: at least one waypoint is required")
        if self.speed < 0:
            raise ConfigError(f"agent {self.agent_id}: speed must be >= 0")
        if len(self.size) != 2 or min(self.size) < 1:
            raise ConfigError(f"agent {self.agent_id}: size must be two extents >= 1")


@dataclass(frozen=True)
class AnomalyInjection:
    """
    One injected anomaly over frames ``start``..``end`` (inclusive)

    ``factor`` scales speed (over-speed), ``max_turn`` bounds the per-frame
    heading change in radians (erratic-trajectory), ``radius`` is the
    gathering radius and ``zone`` the forbidden parking class.
    """

    anomaly_type: str
    start: int
    end: int
    agent_ids: tuple
    factor: float = 3.0
    max_turn: float = np.pi / 4
    radius: float = 12.0
    zone: int = GREENERY

    def __post_init__(self):
        object.__setattr__(self, 'agent_ids', tuple(int(a) for a in self.agent_ids))
        if self.anomaly_type not in ANOMALY_TYPES:
            raise ConfigError(f"unknown anomaly type {self.anomaly_type!r}")
        if not self.agent_ids:
            raise ConfigError(f"{self.anomaly_type}: at least one agent id is required")
        if self.start < 0 or self.end < self.start:
            raise ConfigError(f"{self.anomaly_type}: invalid interval {self.start}..{self.end}")
        if self.anomaly_type == 'pedestrian-gathering' and len(set(self.agent_ids)) < 3:
            raise ConfigError("pedestrian-gathering needs at least 3 agents")
        if self.factor <= 0 or self.radius <= 0 or self.max_turn < 0:
            raise ConfigError(f"{self.anomaly_type}: factor and radius must be > 0, max_turn >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """One synthetic video"""

    video_id: str
    width: int
    height: int
    frame_count: int
    layout: SceneLayout = field(default_factory=SceneLayout)
    agents: tuple = ()
    anomalies: tuple = ()
    seed: int = 0
    split: str = 'train'
    texture_noise: float = 0.06
    frame_noise: float = 0.0
    detection_jitter: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'agents', tuple(self.agents))
        object.__setattr__(self, 'anomalies', tuple(self.anomalies))
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"{self.video_id}: scene size must be positive")
        if self.frame_count < 2:
            raise ConfigError(f"{self.video_id}: frame count must be >= 2, got {self.frame_count}")
        if self.split not in SPLITS:
            raise ConfigError(f"{self.video_id}: split must be one of {SPLITS}")
        if self.texture_noise < 0 or self.frame_noise < 0 or self.detection_jitter < 0:
            raise ConfigError(f"{self.video_id}: noise amplitudes and jitter must be >= 0")
        self.validate()

    def validate(self):
        if len(self.agents) > MAX_AGENTS:
            raise ConfigError(f"{self.video_id}: at most {MAX_AGENTS} agents per scene")
        agents = {}
        for agent in self.agents:
            if agent.agent_id in agents:
                raise ConfigError(f"{self.video_id}: duplicate agent id {agent.agent_id}")
            agents[agent.agent_id] = agent
            half_w, half_h = agent.size[0] / 2, agent.size[1] / 2
            for x, y in agent.waypoints:
                if not (half_w <= x <= self.width - half_w and half_h <= y <= self.height - half_h):
                    raise ConfigError(
                        f"{self.video_id}: agent {agent.agent_id} waypoint ({x}, {y}) puts its box outside the scene"
                    )
        for anomaly in self.anomalies:
            if anomaly.end >= self.frame_count:
                raise ConfigError(
                    f"{self.video_id}: {anomaly.anomaly_type} interval {anomaly.start}..{anomaly.end} "
                    f"exceeds {self.frame_count} frames"
                )
            for agent_id in anomaly.agent_ids:
                if agent_id not in agents:
                    raise ConfigError(f"{self.video_id}: {anomaly.anomaly_type} references unknown agent {agent_id}")
                required = REQUIRED_CLASS.get(anomaly.anomaly_type)
                if required and agents[agent_id].object_class != required:
                    raise ConfigError(
                        f"{self.video_id}: {anomaly.anomaly_type} needs {required} agents, agent {agent_id} is "
                        f"{agents[agent_id].object_class}"
                    )

    def agent(self, agent_id):
        return next(agent for agent in self.agents if agent.agent_id == agent_id)


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """Per-frame box centres of one agent (shape frame_count x 2)"""

    agent: AgentSpec
    centres: np.ndarray
    anomalous: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'centres', frozen_array(self.centres))
        object.__setattr__(self, 'anomalous', frozen_array(self.anomalous, np.bool_))

    def box_origin(self, frame_index):
        """Integer top-left corner of the box at ``frame_index``"""
        cx, cy = self.centres[frame_index]
        w, h = self.agent.size
        return int(np.floor(cx - w / 2 + 0.5)), int(np.floor(cy - h / 2 + 0.5))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Agent states for every frame of one scene"""

    config: ScenarioConfig
    tracks: tuple
    frame_labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'tracks', tuple(self.tracks))
        object.__setattr__(self, 'frame_labels', frozen_array(self.frame_labels, np.int64))

    def track(self, agent_id):
        return next(track for track in self.tracks if track.agent.agent_id == agent_id)


@dataclass(frozen=True, eq=False)
class SynthVideo:
    """Rendered scene: everything the dataset writer emits for one video"""

    scenario: Scenario
    frames: tuple
    class_mask: object
    flows: tuple
    detections: tuple
    annotations: tuple
    object_labels: tuple

    @property
    def video_id(self):
        return self.scenario.config.video_id


@dataclass(frozen=True)
class TownPreset:
    """
    Procedural town scenes: a horizontal road with sidewalks, a construction
    block and a pond; vehicles drive the lanes, pedestrians walk the sidewalks
    """

    train_videos: int = 2
    test_videos: int = 2
    width: int = 128
    height: int = 96
    frame_count: int = 40
    vehicles: int = 3
    pedestrians: int = 4
    anomalies_per_video: int = 2
    anomaly_types: tuple = ANOMALY_TYPES
    texture_noise: float = 0.06
    detection_jitter: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'anomaly_types', tuple(self.anomaly_types))
        if self.width < 64 or self.height < 64:
            raise ConfigError("town scenes need at least 64x64 pixels")
        if self.frame_count < 2:
            raise ConfigError(f"frame count must be >= 2, got {self.frame_count}")
        if min(self.train_videos, self.test_videos, self.vehicles, self.pedestrians, self.anomalies_per_video) < 0:
            raise ConfigError("town preset counts must be >= 0")
        unknown = set(self.anomaly_types) - set(ANOMALY_TYPES)
        if unknown:
            raise ConfigError(f"unknown anomaly types {sorted(unknown)}")


@dataclass(frozen=True)
class SynthConfig:
    """`synth` section: explicit scenes and/or a town preset"""

    scenes: tuple = ()
    seed: int = 0
    preset: TownPreset = None

    def __post_init__(self):
        object.__setattr__(self, 'scenes', tuple(self.scenes))
        ids = [scene.video_id for scene in self.scenes]
        if len(set(ids)) != len(ids):
            raise ConfigError("synth: scene ids must be unique")


@dataclass(frozen=True)
class DescriptorScenarioConfig:
    """
    Size and geometry of a descriptor-level scenario set

    Training objects (normal and anomalous) form the train video; test frames
    hold ``objects_per_frame`` objects, one of which is anomalous in
    ``anomalous_frame_fraction`` of the frames.
    """

    n_train_normal: int = 300
    n_train_anomalous: int = 100
    n_test_frames: int = 200
    objects_per_frame: int = 2
    anomalous_frame_fraction: float = 0.3
    clusters: int = 4
    anomaly_shift: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if self.n_train_normal < 1 or self.n_test_frames < 2 or self.objects_per_frame < 1 or self.clusters < 1:
            raise ConfigError("descriptor scenario sizes must be positive")
        if self.n_train_anomalous < 0:
            raise ConfigError("n_train_anomalous must be >= 0")
        if not 0 < self.anomalous_frame_fraction < 1:
            raise ConfigError("anomalous_frame_fraction must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class DescriptorScenario:
    """Feature table, object labels and frame labels of a descriptor-level scenario"""

    name: str
    features: object
    object_labels: object
    frame_labels: object
