from rest_framework import serializers

from feature_descriptors.domain import FeaturesConfig


class FeaturesConfigSerializer(serializers.Serializer):
    """(CONFIG) `features` section of the pipeline config"""

    ring_width = serializers.IntegerField(min_value=1, default=4)
    batch_size = serializers.IntegerField(min_value=1, default=256)

    def create(self, validated_data):
        return FeaturesConfig(**validated_data)
