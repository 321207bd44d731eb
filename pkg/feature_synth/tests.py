import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core_main.artifacts import sha256_tree
from core_main.exceptions import ConfigError
from core_main.validation import build_from
from feature_data.dataset import VideoDataset
from feature_data.domain import CONSTRUCTION, ROAD, BoundingBox
from feature_descriptors.services import DescriptorServices
from feature_synth.descriptors import contextual_anomaly_table, local_anomaly_plane, local_anomaly_table
from feature_synth.domain import (
    ANOMALY_TYPES,
    AgentSpec,
    AnomalyInjection,
    DescriptorScenarioConfig,
    Region,
    ScenarioConfig,
    SceneLayout,
    SynthConfig,
    TownPreset,
)
from feature_synth.motion import polyline_point
from feature_synth.serializers import SynthConfigSerializer
from feature_synth.services import SynthServices

ROAD_LAYOUT = SceneLayout(regions=(Region(ROAD, 0, 24, 96, 20), Region(CONSTRUCTION, 60, 50, 30, 14)))


def vehicle(agent_id=1, speed=2.0, y=32.0, behavior='patrol'):
    return AgentSpec(agent_id, 'vehicle', ((8.0, y), (88.0, y)), speed, (8, 6), behavior)


def pedestrian(agent_id, x, y, speed=1.0, behavior='patrol'):
    return AgentSpec(agent_id, 'human', ((x, y), (88.0, y)), speed, (4, 6), behavior)


def scene(agents, anomalies=(), frames=10, **kwargs):
    return ScenarioConfig('s0', 96, 64, frames, ROAD_LAYOUT, tuple(agents), tuple(anomalies), **kwargs)


class MotionTests(SimpleTestCase):

    def test_constant_speed_on_straight_road(self):
        scenario = SynthServices.generate_scenario(scene([vehicle()]))
        steps = np.diff(scenario.track(1).centres, axis=0)
        np.testing.assert_array_equal(steps, np.tile([2.0, 0.0], (9, 1)))
        np.testing.assert_array_equal(scenario.frame_labels, 0)

    def test_over_speed_triples_displacement(self):
        injection = AnomalyInjection('over-speed', 4, 7, (1,), factor=3.0)
        scenario = SynthServices.generate_scenario(scene([vehicle()], [injection]))
        displacement = np.diff(scenario.track(1).centres[:, 0])
        np.testing.assert_array_equal(displacement, [2, 2, 2, 6, 6, 6, 6, 2, 2])
        np.testing.assert_array_equal(scenario.frame_labels, [0, 0, 0, 0, 1, 1, 1, 1, 0, 0])

    def test_patrol_reverses_at_the_end(self):
        points = ((0.0, 0.0), (10.0, 0.0))
        np.testing.assert_array_equal(polyline_point(points, 12.0), [8.0, 0.0])
        np.testing.assert_array_equal(polyline_point(points, 20.0), [0.0, 0.0])

    def test_stopped_on_road_holds_position(self):
        injection = AnomalyInjection('stopped-on-road', 3, 6, (1,))
        centres = SynthServices.generate_scenario(scene([vehicle()], [injection])).track(1).centres
        np.testing.assert_array_equal(centres[3:7, 0], centres[2, 0])

    def test_erratic_trajectory_is_seeded(self):
        injection = AnomalyInjection('erratic-trajectory', 2, 9, (1,), max_turn=1.0)
        first = SynthServices.generate_scenario(scene([vehicle()], [injection], seed=5)).track(1).centres
        second = SynthServices.generate_scenario(scene([vehicle()], [injection], seed=5)).track(1).centres
        other = SynthServices.generate_scenario(scene([vehicle()], [injection], seed=6)).track(1).centres
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.array_equal(first, other))
        self.assertTrue((first[:, 0] >= 4).all() and (first[:, 0] <= 92).all())

    def test_wrong_zone_parking(self):
        injection = AnomalyInjection('wrong-zone-parking', 2, 9, (1,), zone=CONSTRUCTION)
        scenario = SynthServices.generate_scenario(scene([vehicle()], [injection]))
        centres = scenario.track(1).centres
        np.testing.assert_array_equal(centres[2:], np.tile(centres[2], (8, 1)))
        labels = ROAD_LAYOUT.rasterize(96, 64)
        self.assertEqual(labels[int(centres[5, 1]), int(centres[5, 0])], CONSTRUCTION)
        np.testing.assert_array_equal(scenario.track(1).anomalous, [0, 0] + [1] * 8)

    def test_gathering_converges_on_road(self):
        walkers = [pedestrian(i, x, 14.0, speed=2.0, behavior='static') for i, x in ((1, 10.0), (2, 40.0), (3, 70.0))]
        injection = AnomalyInjection('pedestrian-gathering', 2, 39, (1, 2, 3), radius=12.0)
        scenario = SynthServices.generate_scenario(scene(walkers, [injection], frames=40))
        final = np.array([scenario.track(i).centres[-1] for i in (1, 2, 3)])
        centroid = final.mean(axis=0)
        labels = ROAD_LAYOUT.rasterize(96, 64)
        for x, y in final:
            self.assertLessEqual(np.hypot(x - centroid[0], y - centroid[1]), 12.0)
            self.assertEqual(labels[int(y), int(x)], ROAD)

    def test_unknown_agent_rejected(self):
        with self.assertRaises(ConfigError):
            scene([vehicle()], [AnomalyInjection('over-speed', 1, 2, (7,))])

    def test_interval_beyond_last_frame_rejected(self):
        with self.assertRaises(ConfigError):
            scene([vehicle()], [AnomalyInjection('over-speed', 5, 10, (1,))])

    def test_waypoint_outside_scene_rejected(self):
        with self.assertRaises(ConfigError):
            scene([AgentSpec(1, 'vehicle', ((2.0, 32.0),), 1.0, (8, 6))])

    def test_gathering_needs_three_agents(self):
        with self.assertRaises(ConfigError):
            AnomalyInjection('pedestrian-gathering', 0, 1, (1, 2))

    def test_wrong_object_class_rejected(self):
        with self.assertRaises(ConfigError):
            scene([vehicle()], [AnomalyInjection('pedestrian-on-road', 1, 2, (1,))])


class RenderTests(SimpleTestCase):

    def test_moving_footprint_flow_is_exact(self):
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene([vehicle()])))
        x, y = video.scenario.track(1).box_origin(3)
        flow = video.flows[3]
        np.testing.assert_array_equal(flow.u[y:y + 6, x:x + 8], 2.0)
        np.testing.assert_array_equal(flow.v, 0.0)
        self.assertEqual(np.count_nonzero(flow.u), 48)

    def test_static_agent_has_zero_flow(self):
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene([vehicle(behavior='static')])))
        for flow in video.flows:
            np.testing.assert_array_equal(flow.u, 0.0)
            np.testing.assert_array_equal(flow.v, 0.0)

    def test_detections_equal_true_boxes_without_jitter(self):
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene([vehicle()])))
        for record in video.detections:
            x, y = video.scenario.track(1).box_origin(record.frame_index)
            self.assertEqual(record.bbox, BoundingBox(x, y, 8, 6))

    def test_jitter_stays_within_amplitude(self):
        video = SynthServices.render_dataset(
            SynthServices.generate_scenario(scene([vehicle()], detection_jitter=2))
        )
        for record in video.detections:
            x, y = video.scenario.track(1).box_origin(record.frame_index)
            self.assertLessEqual(abs(record.bbox.x - x), 2)
            self.assertLessEqual(abs(record.bbox.y - y), 2)

    def test_frame_labels_cover_injection_intervals(self):
        injections = [AnomalyInjection('over-speed', 1, 2, (1,)), AnomalyInjection('stopped-on-road', 6, 7, (1,))]
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene([vehicle()], injections)))
        self.assertEqual([a.label for a in video.annotations], [0, 1, 1, 0, 0, 0, 1, 1, 0, 0])

    def test_pedestrian_on_road_changes_context(self):
        walkers = [pedestrian(1, 10.0, 14.0), pedestrian(2, 10.0, 54.0)]
        injection = AnomalyInjection('pedestrian-on-road', 5, 9, (1,))
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene(walkers, [injection])))
        by_key = {record.key: record for record in video.detections}
        mask = video.class_mask

        def road_fraction(agent_id):
            box = by_key[('s0', 7, agent_id)].bbox
            region = DescriptorServices.contextual_region(box, mask.width, mask.height)
            return DescriptorServices.contextual_histogram(region, mask)[ROAD]

        self.assertGreater(road_fraction(1), 0.5)
        self.assertLess(road_fraction(2), 0.5)
        labels = {row[:3]: row[3] for row in video.object_labels}
        self.assertEqual(labels[('s0', 7, 1)], 1)
        self.assertEqual(labels[('s0', 7, 2)], 0)

    def test_vehicle_colour_differs_from_road(self):
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scene([vehicle()], texture_noise=0.0)))
        x, y = video.scenario.track(1).box_origin(0)
        frame = video.frames[0].values
        self.assertFalse(np.allclose(frame[y + 5, x], frame[y - 5, x]))


class DatasetWriterTests(SimpleTestCase):

    def config(self, seed=3):
        preset = TownPreset(train_videos=1, test_videos=1, width=64, height=64, frame_count=6,
                            vehicles=2, pedestrians=3, anomalies_per_video=2)
        return SynthConfig(seed=seed, preset=preset)

    def test_written_dataset_loads_back(self):
        videos = SynthServices.synthesize(self.config())
        with tempfile.TemporaryDirectory() as tmp:
            root = SynthServices.write_dataset(videos, Path(tmp) / 'data', seed=3)
            dataset = VideoDataset(root)
            self.assertEqual([v.split for v in dataset.videos], ['train', 'test'])
            video = videos[1]
            np.testing.assert_array_equal(
                dataset.frame(video.video_id, 4).values, video.frames[4].values
            )
            np.testing.assert_array_equal(dataset.mask(video.video_id).labels, video.class_mask.labels)
            stored = dataset.stored_flow(video.video_id, 2, 'ground_truth')
            np.testing.assert_array_equal(stored.u, video.flows[2].u)
            self.assertEqual(len(dataset.detections), sum(len(v.detections) for v in videos))
            self.assertEqual(len(dataset.object_labels), len(dataset.detections))
            self.assertEqual(
                [a.label for a in dataset.annotations(video.video_id)], [a.label for a in video.annotations]
            )

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = SynthServices.write_dataset(SynthServices.synthesize(self.config()), Path(tmp) / 'a', seed=3)
            second = SynthServices.write_dataset(SynthServices.synthesize(self.config()), Path(tmp) / 'b', seed=3)
            other = SynthServices.write_dataset(SynthServices.synthesize(self.config(4)), Path(tmp) / 'c', seed=4)
            self.assertEqual(sha256_tree(first), sha256_tree(second))
            self.assertNotEqual(sha256_tree(first), sha256_tree(other))

    def test_preset_can_inject_every_type(self):
        preset = TownPreset(train_videos=0, test_videos=1, width=96, height=96, frame_count=4,
                            vehicles=6, pedestrians=6, anomalies_per_video=len(ANOMALY_TYPES))
        scenes = SynthServices.scenes(SynthConfig(seed=0, preset=preset))
        self.assertEqual({a.anomaly_type for a in scenes[0].anomalies}, set(ANOMALY_TYPES))
        video = SynthServices.render_dataset(SynthServices.generate_scenario(scenes[0]))
        self.assertEqual(len(video.detections), 4 * 12)

    def test_config_serializer_builds_scenes(self):
        cfg = build_from(SynthConfigSerializer, {
            'seed': 7,
            'scenes': [{
                'id': 'road-1', 'width': 96, 'height': 64, 'frames': 5,
                'layout': {'regions': [{'class': 'road', 'x': 0, 'y': 24, 'w': 96, 'h': 20}]},
                'agents': [{'id': 1, 'class': 'vehicle', 'waypoints': [[8, 32], [88, 32]], 'speed': 2, 'size': [8, 6]}],
                'anomalies': [{'type': 'over-speed', 'start': 1, 'end': 3, 'agents': [1]}],
            }],
        }, 'synth')
        self.assertEqual(cfg.scenes[0].seed, 7)
        self.assertEqual(cfg.scenes[0].layout.regions[0].class_index, ROAD)
        self.assertEqual(cfg.scenes[0].anomalies[0].factor, 3.0)

    def test_config_serializer_reports_unknown_agent(self):
        with self.assertRaises(ConfigError):
            build_from(SynthConfigSerializer, {
                'scenes': [{
                    'id': 'x', 'width': 32, 'height': 32, 'frames': 3,
                    'anomalies': [{'type': 'over-speed', 'start': 0, 'end': 1, 'agents': [4]}],
                }],
            }, 'synth')


class DescriptorScenarioTests(SimpleTestCase):

    def test_local_table_layout(self):
        cfg = DescriptorScenarioConfig(n_train_normal=40, n_train_anomalous=10, n_test_frames=20, seed=1)
        scenario = local_anomaly_table(cfg)
        self.assertEqual(len(scenario.features), 50 + 40)
        self.assertEqual(list(scenario.features.columns[:3]), ['video', 'frame', 'id'])
        train = scenario.object_labels[scenario.object_labels['split'] == 'train']
        self.assertEqual(int(train['label'].sum()), 10)
        test_frames = scenario.frame_labels[scenario.frame_labels['video'] == 'test-local']
        self.assertEqual(int(test_frames['label'].sum()), 6)
        np.testing.assert_allclose(scenario.features[['ctx_greenery', 'ctx_road', 'ctx_construction',
                                                      'ctx_water']].sum(axis=1), 1.0)

    def test_tables_are_seeded(self):
        cfg = DescriptorScenarioConfig(n_train_normal=20, n_train_anomalous=5, n_test_frames=10, seed=2)
        self.assertTrue(contextual_anomaly_table(cfg).features.equals(contextual_anomaly_table(cfg).features))

    def test_contextual_anomalies_differ_only_in_context(self):
        cfg = DescriptorScenarioConfig(n_train_normal=400, n_train_anomalous=400, n_test_frames=10, seed=3)
        scenario = contextual_anomaly_table(cfg)
        train = scenario.features[scenario.object_labels['split'] == 'train']
        labels = scenario.object_labels.loc[train.index, 'label']
        on_road = train['ctx_road'] > 0.5
        block = train.columns[7:]

        def centre(rows):
            return train.loc[rows, block].to_numpy().mean(axis=0)

        # road-heavy anomalies are pedestrians: they look like pedestrians on greenery, not like vehicles
        pedestrians_on_road = centre((labels == 1) & on_road)
        self.assertLess(np.linalg.norm(pedestrians_on_road - centre((labels == 0) & ~on_road)), 2.0)
        self.assertGreater(np.linalg.norm(pedestrians_on_road - centre((labels == 0) & on_road)), 5.0)

    def test_plane_layout(self):
        points, labels, local = local_anomaly_plane(4)
        self.assertEqual(points.shape, (400, 2))
        self.assertEqual((int((labels == 0).sum()), int(labels.sum()), int(local.sum())), (300, 100, 25))
        self.assertTrue(labels[local].all())
        again = local_anomaly_plane(4)
        np.testing.assert_array_equal(again[0], points)
        self.assertFalse(np.array_equal(local_anomaly_plane(5)[0], points))
