from rest_framework import serializers

from feature_autoencoder.domain import AugmentationConfig, AutoencoderConfig, AutoencoderSpec, TrainConfig


class AugmentationSerializer(serializers.Serializer):
    enabled = serializers.BooleanField(default=True)
    max_rotation_degrees = serializers.FloatField(min_value=0.0, max_value=45.0, default=10.0)
    max_translation = serializers.IntegerField(min_value=0, default=2)
    shear = serializers.FloatField(min_value=-1.0, max_value=1.0, default=0.2)


class AutoencoderConfigSerializer(serializers.Serializer):
    """(CONFIG) `autoencoder` section of the pipeline config"""

    # Architecture
    input_size = serializers.IntegerField(min_value=1, default=32)
    encoder_widths = serializers.ListField(child=serializers.IntegerField(min_value=1), default=[16, 32, 64, 128])
    decoder_widths = serializers.ListField(child=serializers.IntegerField(min_value=1), default=[64, 32, 16])

    # Training
    learning_rate = serializers.FloatField(default=1e-3)
    beta1 = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.9)
    beta2 = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.999)
    eps = serializers.FloatField(default=1e-8)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    epochs = serializers.IntegerField(min_value=1, default=20)
    seed = serializers.IntegerField(min_value=0, required=False)
    max_patches = serializers.IntegerField(min_value=1, default=2000)
    augmentation = AugmentationSerializer(default=dict)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("learning rate must be > 0")
        return value

    def validate_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError("eps must be > 0")
        return value

    def validate(self, data):
        if len(data['decoder_widths']) != len(data['encoder_widths']) - 1:
            raise serializers.ValidationError("decoder needs one layer per downsampling encoder layer")
        if data['input_size'] % (2 ** len(data['decoder_widths'])):
            raise serializers.ValidationError("input_size must be divisible by the total downsampling factor")
        return data

    def create(self, validated_data):
        augmentation = validated_data['augmentation']
        spec = AutoencoderSpec(
            input_size=validated_data['input_size'],
            encoder_widths=tuple(validated_data['encoder_widths']),
            decoder_widths=tuple(validated_data['decoder_widths']),
        )
        train = TrainConfig(
            learning_rate=validated_data['learning_rate'],
            beta1=validated_data['beta1'],
            beta2=validated_data['beta2'],
            eps=validated_data['eps'],
            batch_size=validated_data['batch_size'],
            epochs=validated_data['epochs'],
            seed=validated_data.get('seed', 0),
            max_patches=validated_data['max_patches'],
            augmentation=AugmentationConfig(**augmentation),
        )
        return AutoencoderConfig(spec=spec, train=train)
