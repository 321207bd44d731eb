from rest_framework import serializers

from feature_flow.domain import FLOW_SOURCES, FlowColorConfig, FlowConfig, HornSchunckParams


class FlowConfigSerializer(serializers.Serializer):
    """(CONFIG) `flow` section of the pipeline config"""

    source = serializers.ChoiceField(choices=FLOW_SOURCES, default='computed')
    v_max = serializers.FloatField(default=8.0)
    smoothness = serializers.FloatField(default=0.1)
    iterations = serializers.IntegerField(min_value=1, default=100)

    def validate_v_max(self, value):
        if value <= 0:
            raise serializers.ValidationError("v_max must be > 0")
        return value

    def validate_smoothness(self, value):
        if value <= 0:
            raise serializers.ValidationError("smoothness must be > 0")
        return value

    def create(self, validated_data):
        return FlowConfig(
            source=validated_data['source'],
            color=FlowColorConfig(v_max=validated_data['v_max']),
            solver=HornSchunckParams(
                smoothness=validated_data['smoothness'],
                iterations=validated_data['iterations'],
            ),
        )
