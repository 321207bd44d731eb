import math

from rest_framework import serializers

from feature_data.domain import BACKGROUND_CLASSES, OBJECT_CLASSES
from feature_data.serializers import ClassKeywordMixin
from feature_synth.domain import (
    AGENT_BEHAVIORS,
    ANOMALY_TYPES,
    SPLITS,
    AgentSpec,
    AnomalyInjection,
    DescriptorScenarioConfig,
    Region,
    ScenarioConfig,
    SceneLayout,
    SynthConfig,
    TownPreset,
)


class RegionSerializer(ClassKeywordMixin, serializers.Serializer):
    object_class = serializers.ChoiceField(choices=BACKGROUND_CLASSES)
    x = serializers.IntegerField()
    y = serializers.IntegerField()
    w = serializers.IntegerField(min_value=1)
    h = serializers.IntegerField(min_value=1)


class LayoutSerializer(serializers.Serializer):
    background = serializers.ChoiceField(choices=BACKGROUND_CLASSES, default='greenery')
    regions = RegionSerializer(many=True, default=list)


class AgentSerializer(ClassKeywordMixin, serializers.Serializer):
    id = serializers.IntegerField(min_value=0)
    object_class = serializers.ChoiceField(choices=OBJECT_CLASSES)
    waypoints = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2), min_length=1
    )
    speed = serializers.FloatField(min_value=0.0)
    size = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2)
    behavior = serializers.ChoiceField(choices=AGENT_BEHAVIORS, default='patrol')


class AnomalySerializer(serializers.Serializer):
    type = serializers.ChoiceField(choices=ANOMALY_TYPES)
    start = serializers.IntegerField(min_value=0)
    end = serializers.IntegerField(min_value=0)
    agents = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    factor = serializers.FloatField(default=3.0)
    max_turn = serializers.FloatField(min_value=0.0, default=math.pi / 4)
    radius = serializers.FloatField(default=12.0)
    zone = serializers.ChoiceField(choices=BACKGROUND_CLASSES, default='greenery')

    def validate(self, data):
        if data['end'] < data['start']:
            raise serializers.ValidationError("end must not precede start")
        return data


class SceneSerializer(serializers.Serializer):
    id = serializers.RegexField(r'^[A-Za-z0-9_.-]+$', max_length=100)
    split = serializers.ChoiceField(choices=SPLITS, default='train')
    width = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    frames = serializers.IntegerField(min_value=2)
    seed = serializers.IntegerField(min_value=0, required=False)
    texture_noise = serializers.FloatField(min_value=0.0, default=0.06)
    frame_noise = serializers.FloatField(min_value=0.0, default=0.0)
    detection_jitter = serializers.IntegerField(min_value=0, default=0)
    layout = LayoutSerializer(default=dict)
    agents = AgentSerializer(many=True, default=list)
    anomalies = AnomalySerializer(many=True, default=list)


class TownPresetSerializer(serializers.Serializer):
    train_videos = serializers.IntegerField(min_value=0, default=2)
    test_videos = serializers.IntegerField(min_value=0, default=2)
    width = serializers.IntegerField(min_value=64, default=128)
    height = serializers.IntegerField(min_value=64, default=96)
    frames = serializers.IntegerField(min_value=2, default=40)
    vehicles = serializers.IntegerField(min_value=0, default=3)
    pedestrians = serializers.IntegerField(min_value=0, default=4)
    anomalies_per_video = serializers.IntegerField(min_value=0, default=2)
    anomaly_types = serializers.ListField(child=serializers.ChoiceField(choices=ANOMALY_TYPES), default=list(ANOMALY_TYPES))
    texture_noise = serializers.FloatField(min_value=0.0, default=0.06)
    detection_jitter = serializers.IntegerField(min_value=0, default=0)


def _scene(data, seed):
    layout = data['layout']
    return ScenarioConfig(
        video_id=data['id'],
        width=data['width'],
        height=data['height'],
        frame_count=data['frames'],
        layout=SceneLayout(
            background=BACKGROUND_CLASSES.index(layout.get('background', 'greenery')),
            regions=tuple(
                Region(BACKGROUND_CLASSES.index(r['class']), r['x'], r['y'], r['w'], r['h'])
                for r in layout.get('regions', ())
            ),
        ),
        agents=tuple(
            AgentSpec(
                agent_id=a['id'],
                object_class=a['class'],
                waypoints=tuple(tuple(p) for p in a['waypoints']),
                speed=a['speed'],
                size=tuple(a['size']),
                behavior=a['behavior'],
            )
            for a in data['agents']
        ),
        anomalies=tuple(
            AnomalyInjection(
                anomaly_type=x['type'],
                start=x['start'],
                end=x['end'],
                agent_ids=tuple(x['agents']),
                factor=x['factor'],
                max_turn=x['max_turn'],
                radius=x['radius'],
                zone=BACKGROUND_CLASSES.index(x['zone']),
            )
            for x in data['anomalies']
        ),
        seed=data.get('seed', seed),
        split=data['split'],
        texture_noise=data['texture_noise'],
        frame_noise=data['frame_noise'],
        detection_jitter=data['detection_jitter'],
    )


class SynthConfigSerializer(serializers.Serializer):
    """(CONFIG) `synth` section of the pipeline config"""

    seed = serializers.IntegerField(min_value=0, default=0)
    scenes = SceneSerializer(many=True, default=list)
    preset = TownPresetSerializer(required=False, allow_null=True)

    def validate(self, data):
        if not data['scenes'] and not data.get('preset'):
            raise serializers.ValidationError("list scenes or configure a preset")
        return data

    def create(self, validated_data):
        seed = validated_data['seed']
        preset = validated_data.get('preset')
        if preset is not None:
            preset = dict(preset)
            preset['frame_count'] = preset.pop('frames')
            preset = TownPreset(**preset)
        return SynthConfig(
            scenes=tuple(_scene(scene, seed + index) for index, scene in enumerate(validated_data['scenes'])),
            seed=seed,
            preset=preset,
        )


class DescriptorScenarioSerializer(serializers.Serializer):
    """(CONFIG) size of the descriptor-level scenario sets used by experiments"""

    n_train_normal = serializers.IntegerField(min_value=1, default=300)
    n_train_anomalous = serializers.IntegerField(min_value=0, default=100)
    n_test_frames = serializers.IntegerField(min_value=2, default=200)
    objects_per_frame = serializers.IntegerField(min_value=1, default=2)
    anomalous_frame_fraction = serializers.FloatField(min_value=0.01, max_value=0.99, default=0.3)
    clusters = serializers.IntegerField(min_value=1, default=4)
    anomaly_shift = serializers.FloatField(min_value=0.0, default=2.5)

    def create(self, validated_data):
        return DescriptorScenarioConfig(**validated_data)
