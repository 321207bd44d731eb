import copy
from pathlib import Path

from rest_framework import serializers

from core_main.domain import PathsConfig, PipelineConfig
from core_main.validation import build_from
from feature_autoencoder.serializers import AutoencoderConfigSerializer
from feature_descriptors.serializers import FeaturesConfigSerializer
from feature_eval.serializers import EvaluationConfigSerializer
from feature_flow.serializers import FlowConfigSerializer
from feature_inference.serializers import InferenceConfigSerializer
from feature_synth.serializers import SynthConfigSerializer

# sections whose seed defaults to (and is overridden by) the global seed
SEEDED_SECTIONS = ('synth', 'autoencoder', 'inference')

SECTION_SERIALIZERS = {
    'autoencoder': AutoencoderConfigSerializer,
    'flow': FlowConfigSerializer,
    'features': FeaturesConfigSerializer,
    'inference': InferenceConfigSerializer,
    'evaluation': EvaluationConfigSerializer,
}


class PathsSerializer(serializers.Serializer):
    dataset = serializers.CharField(default='data/dataset')
    bundles = serializers.CharField(default='data/bundles')
    outputs = serializers.CharField(default='outputs')


class PipelineConfigSerializer(serializers.Serializer):
    """
    Top level of the pipeline YAML file

    Sections are validated by their own app's serializer in ``create`` so that
    errors name the section. Context keys: ``base_dir`` (relative paths
    resolve against it) and ``seed`` (a CLI override of every seed).
    """

    seed = serializers.IntegerField(min_value=0, default=0)
    paths = PathsSerializer(default=dict)
    synth = serializers.DictField(required=False, allow_null=True)
    autoencoder = serializers.DictField(default=dict)
    flow = serializers.DictField(default=dict)
    features = serializers.DictField(default=dict)
    inference = serializers.DictField(default=dict)
    evaluation = serializers.DictField(default=dict)

    def create(self, validated_data):
        data = copy.deepcopy(dict(validated_data))
        override = self.context.get('seed')
        if override is not None:
            data['seed'] = override
        for section in SEEDED_SECTIONS:
            if data.get(section) is None:
                continue
            data[section] = dict(data[section])
            if override is not None:
                data[section]['seed'] = override
            else:
                data[section].setdefault('seed', data['seed'])

        paths = {name: data['paths'].get(name, default) for name, default in
                 (('dataset', 'data/dataset'), ('bundles', 'data/bundles'), ('outputs', 'outputs'))}
        data['paths'] = paths
        base = Path(self.context.get('base_dir', '.')).resolve()
        sections = {name: build_from(serializer, data[name], name) for name, serializer in SECTION_SERIALIZERS.items()}
        return PipelineConfig(
            seed=data['seed'],
            paths=PathsConfig(base=base, **{name: (base / value).resolve() for name, value in paths.items()}),
            synth=None if data.get('synth') is None else build_from(SynthConfigSerializer, data['synth'], 'synth'),
            echo=data,
            **sections,
        )
