import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from core_main.artifacts import atomic_directory, atomic_write_text
from feature_data.dataset import DATASET_FORMAT, DatasetLayout, VideoDataset
from feature_data.domain import (
    BACKGROUND_CLASSES,
    ROAD,
    BoundingBox,
    ClassMask,
    DetectionRecord,
    FlowField,
    FrameAnnotation,
    ImagePatch,
)
from feature_data.services import OBJECT_LABEL_COLUMNS, FlowIOServices, RasterIOServices, RecordIOServices
from feature_synth.domain import AgentTrack, Scenario, SynthVideo
from feature_synth.motion import (
    clamp_centre,
    nearest_interior_pixel,
    placement_margin,
    polyline_point,
    rng_stream,
)
from feature_synth.presets import town_scenes
from feature_synth.render import background_texture, draw_objects

logger = logging.getLogger(__name__)

# Named sub-streams of a scene seed
STREAM_TEXTURE = 0
STREAM_ERRATIC = 1
STREAM_FRAME_NOISE = 2
STREAM_JITTER = 3

NON_ROAD = tuple(c for c in range(len(BACKGROUND_CLASSES)) if c != ROAD)

RNG_DESCRIPTION = 'numpy PCG64, seeded by SeedSequence(scene seed, spawn_key=stream)'


class SynthServices:

    @staticmethod
    def scenes(config):
        """Explicit scenes followed by the scenes of the town preset (if any)"""
        scenes = list(config.scenes)
        if config.preset is not None:
            scenes.extend(town_scenes(config.preset, config.seed, start_index=len(scenes)))
        return scenes

    @staticmethod
    def _patrol(agent, config):
        """Waypoint patrol with the speed factors of over-speed and stopped-on-road injections"""
        factors = np.ones(config.frame_count)
        if agent.behavior == 'static':
            factors[:] = 0.0
        for anomaly in config.anomalies:
            if agent.agent_id not in anomaly.agent_ids:
                continue
            interval = slice(anomaly.start, anomaly.end + 1)
            if anomaly.anomaly_type == 'over-speed':
                factors[interval] *= anomaly.factor
            elif anomaly.anomaly_type == 'stopped-on-road':
                factors[interval] = 0.0

        centres = np.zeros((config.frame_count, 2))
        distance = 0.0
        for t in range(config.frame_count):
            if t > 0:
                distance += agent.speed * factors[t]
            centres[t] = polyline_point(agent.waypoints, distance)
        return centres

    @staticmethod
    def _erratic(centres, agent, anomaly, rng, config):
        if anomaly.start >= 1:
            delta = centres[anomaly.start] - centres[anomaly.start - 1]
        else:
            delta = centres[1] - centres[0]
        heading = float(np.arctan2(delta[1], delta[0])) if np.any(delta) else 0.0
        step = max(agent.speed, 1.0)
        for t in range(max(anomaly.start, 1), anomaly.end + 1):
            heading += rng.uniform(-anomaly.max_turn, anomaly.max_turn)
            moved = centres[t - 1] + step * np.array([np.cos(heading), np.sin(heading)])
            centres[t] = clamp_centre(moved, agent.size, config.width, config.height)

    @staticmethod
    def _gathering(positions, anomaly, labels, config):
        agents = [config.agent(agent_id) for agent_id in dict.fromkeys(anomaly.agent_ids)]
        centroid = np.mean([positions[a.agent_id][anomaly.start] for a in agents], axis=0)
        margin = 0.5 * anomaly.radius + max(placement_margin(a.size) for a in agents)
        point = nearest_interior_pixel(labels, [ROAD], centroid, margin)
        for slot_index, agent in enumerate(agents):
            angle = 2 * np.pi * slot_index / len(agents)
            slot = point + 0.5 * anomaly.radius * np.array([np.cos(angle), np.sin(angle)])
            centres = positions[agent.agent_id]
            step = max(agent.speed, 1.0)
            for t in range(anomaly.start, anomaly.end + 1):
                previous = centres[t - 1] if t > 0 else centres[t]
                offset = slot - previous
                distance = float(np.hypot(*offset))
                moved = slot if distance <= step else previous + offset / distance * step
                centres[t] = clamp_centre(moved, agent.size, config.width, config.height)

    @staticmethod
    def generate_scenario(config):
        """
        Agent positions for every frame of one scene

        PHASE 1: Patrol every agent along its waypoints (speed overrides applied)
        PHASE 2: Apply position overrides in injection order
        PHASE 3: Flag anomalous agents and label frames
        """
        config.validate()
        labels = config.layout.rasterize(config.width, config.height)

        # PHASE 1: Normal motion
        positions = {agent.agent_id: SynthServices._patrol(agent, config) for agent in config.agents}

        # PHASE 2: Overrides
        for index, anomaly in enumerate(config.anomalies):
            interval = range(anomaly.start, anomaly.end + 1)
            if anomaly.anomaly_type == 'pedestrian-gathering':
                SynthServices._gathering(positions, anomaly, labels, config)
                continue
            for agent_id in dict.fromkeys(anomaly.agent_ids):
                agent = config.agent(agent_id)
                centres = positions[agent_id]
                if anomaly.anomaly_type == 'erratic-trajectory':
                    rng = rng_stream(config.seed, STREAM_ERRATIC, index, agent_id)
                    SynthServices._erratic(centres, agent, anomaly, rng, config)
                elif anomaly.anomaly_type in ('pedestrian-on-road', 'vehicle-off-road'):
                    classes = [ROAD] if anomaly.anomaly_type == 'pedestrian-on-road' else list(NON_ROAD)
                    target = nearest_interior_pixel(labels, classes, centres[anomaly.start], placement_margin(agent.size))
                    offset = target - centres[anomaly.start]
                    for t in interval:
                        centres[t] = clamp_centre(centres[t] + offset, agent.size, config.width, config.height)
                elif anomaly.anomaly_type == 'wrong-zone-parking':
                    spot = nearest_interior_pixel(
                        labels, [anomaly.zone], centres[anomaly.start], placement_margin(agent.size)
                    )
                    for t in interval:
                        centres[t] = clamp_centre(spot, agent.size, config.width, config.height)

        # PHASE 3: Labels
        frame_labels = np.zeros(config.frame_count, dtype=np.int64)
        for anomaly in config.anomalies:
            frame_labels[anomaly.start:anomaly.end + 1] = 1
        tracks = []
        for agent in config.agents:
            anomalous = np.zeros(config.frame_count, dtype=bool)
            for anomaly in config.anomalies:
                if agent.agent_id in anomaly.agent_ids:
                    anomalous[anomaly.start:anomaly.end + 1] = True
            tracks.append(AgentTrack(agent=agent, centres=positions[agent.agent_id], anomalous=anomalous))

        logger.debug("generated scenario %s: %d agents, %d anomalous frames",
                     config.video_id, len(tracks), int(frame_labels.sum()))
        return Scenario(config=config, tracks=tracks, frame_labels=frame_labels)

    @staticmethod
    def render_dataset(scenario, config=None):
        """
        Frames, class mask, ground-truth flow, detections and labels of a scenario

        PHASE 1: Static class mask and background texture
        PHASE 2: Draw agents per frame, keeping the sprite footprints
        PHASE 3: Ground-truth flow = box displacement of the frame pair inside each footprint
        PHASE 4: Detections (optionally jittered) and labels
        """
        config = config or scenario.config
        count = config.frame_count

        # PHASE 1: Background
        labels = config.layout.rasterize(config.width, config.height)
        texture = background_texture(labels, config.texture_noise, rng_stream(config.seed, STREAM_TEXTURE))

        # PHASE 2: Frames
        frames, footprints = [], []
        for t in range(count):
            background = texture
            if config.frame_noise > 0:
                noise = rng_stream(config.seed, STREAM_FRAME_NOISE, t).uniform(
                    -config.frame_noise, config.frame_noise, size=texture.shape
                )
                background = np.clip(texture + noise, 0.0, 1.0)
            sprites = [
                (track.agent.object_class, *track.box_origin(t), *track.agent.size) for track in scenario.tracks
            ]
            pixels, footprint = draw_objects(background, sprites)
            frames.append(ImagePatch.from_uint8(pixels))
            footprints.append(footprint)

        # PHASE 3: Flow
        flows = []
        for t in range(count):
            first, second = VideoDataset.frame_pair(t, count)
            u = np.zeros((config.height, config.width))
            v = np.zeros((config.height, config.width))
            for index, track in enumerate(scenario.tracks, start=1):
                (x0, y0), (x1, y1) = track.box_origin(first), track.box_origin(second)
                inside = footprints[t] == index
                u[inside] = x1 - x0
                v[inside] = y1 - y0
            flows.append(FlowField(u, v))

        # PHASE 4: Detections and labels
        jitter_rng = rng_stream(config.seed, STREAM_JITTER)
        detections, object_labels = [], []
        for t in range(count):
            for track in scenario.tracks:
                x, y = track.box_origin(t)
                w, h = track.agent.size
                box = BoundingBox(x, y, w, h)
                if config.detection_jitter > 0:
                    dx, dy, dw, dh = (int(n) for n in jitter_rng.integers(
                        -config.detection_jitter, config.detection_jitter + 1, size=4
                    ))
                    jittered = BoundingBox(x + dx, y + dy, max(1, w + dw), max(1, h + dh))
                    box = jittered.clipped(config.width, config.height) or box
                detections.append(DetectionRecord(
                    video_id=config.video_id,
                    frame_index=t,
                    object_id=track.agent.agent_id,
                    object_class=track.agent.object_class,
                    bbox=box,
                ))
                object_labels.append(
                    (config.video_id, t, track.agent.agent_id, int(track.anomalous[t]), config.split)
                )
        annotations = [FrameAnnotation(t, int(label)) for t, label in enumerate(scenario.frame_labels)]

        return SynthVideo(
            scenario=scenario,
            frames=tuple(frames),
            class_mask=ClassMask(labels),
            flows=tuple(flows),
            detections=tuple(detections),
            annotations=tuple(annotations),
            object_labels=tuple(object_labels),
        )

    @staticmethod
    def synthesize(config):
        """Generate and render every scene of a SynthConfig"""
        videos = []
        for scene in SynthServices.scenes(config):
            videos.append(SynthServices.render_dataset(SynthServices.generate_scenario(scene)))
            logger.info("rendered %s (%s): %d frames, %d objects",
                        scene.video_id, scene.split, scene.frame_count, len(scene.agents))
        return videos

    @staticmethod
    def manifest(videos, seed):
        return {
            'format': DATASET_FORMAT,
            'generator': {'rng': RNG_DESCRIPTION, 'seed': seed},
            'videos': [
                {
                    'id': video.video_id,
                    'split': video.scenario.config.split,
                    'width': video.scenario.config.width,
                    'height': video.scenario.config.height,
                    'frames': video.scenario.config.frame_count,
                }
                for video in videos
            ],
            'anomalies': [
                {
                    'video': video.video_id,
                    'type': anomaly.anomaly_type,
                    'start': anomaly.start,
                    'end': anomaly.end,
                    'agents': list(anomaly.agent_ids),
                }
                for video in videos
                for anomaly in video.scenario.config.anomalies
            ],
        }

    @staticmethod
    def write_dataset(videos, root, seed=0):
        """
        Publish rendered videos as a dataset directory

        PHASE 1: Per-video frames, mask, ground-truth flow and annotations
        PHASE 2: Dataset-wide detections, object labels and manifest
        """
        videos = list(videos)
        with atomic_directory(root) as tmp_dir:
            layout = DatasetLayout(tmp_dir)

            # PHASE 1: Videos
            for video in videos:
                for t, frame in enumerate(video.frames):
                    RasterIOServices.write_frame(layout.frame(video.video_id, t), frame)
                for t, flow in enumerate(video.flows):
                    FlowIOServices.write_flow_field(layout.flow(video.video_id, t, 'ground_truth'), flow)
                RasterIOServices.write_class_mask(layout.mask(video.video_id), video.class_mask)
                RecordIOServices.write_frame_annotations(layout.annotations(video.video_id), video.annotations)

            # PHASE 2: Dataset files
            RecordIOServices.write_detections(
                layout.detections, [record for video in videos for record in video.detections]
            )
            RecordIOServices.write_object_labels(
                layout.object_labels,
                pd.DataFrame([row for video in videos for row in video.object_labels], columns=OBJECT_LABEL_COLUMNS),
            )
            atomic_write_text(
                layout.manifest, json.dumps(SynthServices.manifest(videos, seed), indent=2, sort_keys=True) + '\n'
            )
        logger.info("wrote synthetic dataset with %d videos to %s", len(videos), root)
        return Path(root)
