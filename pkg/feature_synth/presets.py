"""Procedural town scenes used when a config asks for a preset instead of listing scenes."""
import numpy as np

from feature_data.domain import CONSTRUCTION, GREENERY, ROAD, WATER
from feature_synth.domain import AgentSpec, AnomalyInjection, Region, ScenarioConfig, SceneLayout
from feature_synth.motion import rng_stream

STREAM_PRESET = 10

VEHICLE_SIZE = (10, 6)
HUMAN_SIZE = (4, 6)
# how far sidewalks sit from the road edge (box centre to edge)
SIDEWALK_GAP = 6


def _layout(rng, width, height):
    road_h = max(16, height // 5)
    road_y = int(rng.integers(height // 3, height // 2 + 1))
    regions = [Region(ROAD, 0, road_y, width, road_h)]
    block_w = width // 4
    block_h = road_y - 2 * SIDEWALK_GAP - 4
    if block_h >= 4:
        regions.append(Region(CONSTRUCTION, int(rng.integers(0, width - block_w)), 0, block_w, block_h))
    pond_y = road_y + road_h + 2 * SIDEWALK_GAP + 4
    if height - pond_y >= 4:
        regions.append(Region(WATER, int(rng.integers(0, width - block_w)), pond_y, block_w, height - pond_y))
    return SceneLayout(background=GREENERY, regions=tuple(regions)), road_y, road_h


def _agents(rng, preset, road_y, road_h):
    agents = []
    lanes = (road_y + road_h / 4, road_y + 3 * road_h / 4)
    margin = VEHICLE_SIZE[0] / 2 + 1
    for index in range(preset.vehicles):
        lane = lanes[index % 2]
        start = float(np.round(rng.uniform(margin, preset.width - margin)))
        ends = (preset.width - margin, margin) if index % 2 == 0 else (margin, preset.width - margin)
        agents.append(AgentSpec(
            agent_id=len(agents) + 1,
            object_class='vehicle',
            waypoints=((start, lane), (ends[0], lane), (ends[1], lane)),
            speed=float(rng.choice([1.5, 2.0, 2.5])),
            size=VEHICLE_SIZE,
        ))
    sidewalks = (road_y - SIDEWALK_GAP, road_y + road_h + SIDEWALK_GAP)
    margin = HUMAN_SIZE[0] / 2 + 1
    for index in range(preset.pedestrians):
        walk = sidewalks[index % 2]
        start = float(np.round(rng.uniform(margin, preset.width - margin)))
        agents.append(AgentSpec(
            agent_id=len(agents) + 1,
            object_class='human',
            waypoints=((start, walk), (preset.width - margin, walk), (margin, walk)),
            speed=float(rng.choice([0.5, 0.75, 1.0])),
            size=HUMAN_SIZE,
        ))
    return agents


def _anomalies(rng, preset, agents):
    """Up to ``anomalies_per_video`` injections on distinct agents, each running to the last frame"""
    free = {'vehicle': [a.agent_id for a in agents if a.object_class == 'vehicle'],
            'human': [a.agent_id for a in agents if a.object_class == 'human']}
    wanted = {
        'pedestrian-on-road': ('human', 1),
        'vehicle-off-road': ('vehicle', 1),
        'over-speed': ('vehicle', 1),
        'erratic-trajectory': (None, 1),
        'stopped-on-road': ('vehicle', 1),
        'pedestrian-gathering': ('human', 3),
        'wrong-zone-parking': ('vehicle', 1),
    }
    injections = []
    types = list(preset.anomaly_types)
    for anomaly_type in rng.permutation(types) if types else []:
        if len(injections) == preset.anomalies_per_video:
            break
        object_class, count = wanted[str(anomaly_type)]
        pool = free['vehicle'] + free['human'] if object_class is None else free[object_class]
        if len(pool) < count:
            continue
        chosen = sorted(int(a) for a in rng.choice(pool, size=count, replace=False))
        for agent_id in chosen:
            for ids in free.values():
                if agent_id in ids:
                    ids.remove(agent_id)
        start = int(rng.integers(preset.frame_count // 4, max(preset.frame_count // 2, preset.frame_count // 4 + 1)))
        injections.append(AnomalyInjection(
            anomaly_type=str(anomaly_type), start=start, end=preset.frame_count - 1, agent_ids=tuple(chosen),
        ))
    return injections


def town_scenes(preset, seed, start_index=0):
    """
    ``train_videos`` + ``test_videos`` town scenes; scene i of the dataset
    uses seed ``seed + i``
    """
    scenes = []
    splits = ['train'] * preset.train_videos + ['test'] * preset.test_videos
    for offset, split in enumerate(splits):
        index = start_index + offset
        rng = rng_stream(seed, STREAM_PRESET, index)
        layout, road_y, road_h = _layout(rng, preset.width, preset.height)
        agents = _agents(rng, preset, road_y, road_h)
        scenes.append(ScenarioConfig(
            video_id=f'{split}-{index:02d}',
            width=preset.width,
            height=preset.height,
            frame_count=preset.frame_count,
            layout=layout,
            agents=tuple(agents),
            anomalies=tuple(_anomalies(rng, preset, agents)),
            seed=seed + index,
            split=split,
            texture_noise=preset.texture_noise,
            detection_jitter=preset.detection_jitter,
        ))
    return scenes
