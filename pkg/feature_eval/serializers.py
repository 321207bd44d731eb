from rest_framework import serializers

from feature_eval.domain import EXPERIMENT_SOURCES, EvaluationConfig, ExperimentConfig, GridConfig
from feature_synth.domain import DescriptorScenarioConfig
from feature_synth.serializers import DescriptorScenarioSerializer

GRID_DEFAULTS = GridConfig()
EXPERIMENT_DEFAULTS = ExperimentConfig()


class GridSerializer(serializers.Serializer):
    """(CONFIG) value sets swept by `gridsearch`"""

    k1 = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, default=list(GRID_DEFAULTS.k1))
    k2 = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, default=list(GRID_DEFAULTS.k2))
    n = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, default=list(GRID_DEFAULTS.n))
    mu = serializers.ListField(child=serializers.FloatField(), min_length=1, default=list(GRID_DEFAULTS.mu))
    eta = serializers.ListField(child=serializers.FloatField(), min_length=1, default=list(GRID_DEFAULTS.eta))
    C = serializers.ListField(child=serializers.FloatField(), min_length=1, default=list(GRID_DEFAULTS.C))
    gamma = serializers.ListField(
        child=serializers.FloatField(allow_null=True), min_length=1, default=list(GRID_DEFAULTS.gamma)
    )

    def validate(self, data):
        for name in ('mu', 'eta'):
            if not all(0 < value < 1 for value in data[name]):
                raise serializers.ValidationError({name: "thresholds must lie strictly between 0 and 1"})
        if min(data['C']) <= 0:
            raise serializers.ValidationError({'C': "values must be > 0"})
        if any(value is not None and value <= 0 for value in data['gamma']):
            raise serializers.ValidationError({'gamma': "values must be > 0 (null for the data-driven default)"})
        return data

    def create(self, validated_data):
        return GridConfig(**{name: tuple(values) for name, values in validated_data.items()})


class ExperimentSerializer(serializers.Serializer):
    """(CONFIG) seeds, N sweep and data source of `experiment`"""

    seeds = serializers.ListField(
        child=serializers.IntegerField(min_value=0), min_length=1, default=list(EXPERIMENT_DEFAULTS.seeds)
    )
    n_values = serializers.ListField(
        child=serializers.IntegerField(min_value=0), min_length=1, default=list(EXPERIMENT_DEFAULTS.n_values)
    )
    source = serializers.ChoiceField(choices=EXPERIMENT_SOURCES, default='synthetic')
    scenario = DescriptorScenarioSerializer(default=dict)
    scatter_samples = serializers.IntegerField(min_value=1, default=200)

    def create(self, validated_data):
        data = dict(validated_data)
        scenario = data.pop('scenario') or {}
        return ExperimentConfig(
            seeds=tuple(data.pop('seeds')),
            n_values=tuple(data.pop('n_values')),
            scenario=DescriptorScenarioConfig(**scenario),
            **data,
        )


class EvaluationConfigSerializer(serializers.Serializer):
    """(CONFIG) `evaluation` section of the pipeline config"""

    grid = GridSerializer(default=dict)
    experiments = ExperimentSerializer(default=dict)

    def create(self, validated_data):
        grid = GridSerializer(data=validated_data.get('grid') or {})
        grid.is_valid(raise_exception=True)
        experiments = ExperimentSerializer(data=validated_data.get('experiments') or {})
        experiments.is_valid(raise_exception=True)
        return EvaluationConfig(grid=grid.save(), experiments=experiments.save())
