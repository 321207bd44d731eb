from rest_framework import serializers

from feature_inference.domain import KERNELS, InferenceConfig, SvmParams


class SvmParamsSerializer(serializers.Serializer):
    kernel = serializers.ChoiceField(choices=KERNELS, default='rbf')
    C = serializers.FloatField(default=1.0)
    gamma = serializers.FloatField(required=False, allow_null=True, default=None)
    tol = serializers.FloatField(default=1e-3)
    max_iter = serializers.IntegerField(min_value=1, default=200000)

    def validate_C(self, value):
        if value <= 0:
            raise serializers.ValidationError("C must be > 0")
        return value

    def validate_gamma(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("gamma must be > 0")
        return value

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError("tol must be > 0")
        return value


class InferenceConfigSerializer(serializers.Serializer):
    """(CONFIG) `inference` section of the pipeline config"""

    k1 = serializers.IntegerField(min_value=1, default=4)
    k2 = serializers.IntegerField(min_value=0, default=3)
    mu = serializers.FloatField(default=0.5)
    eta = serializers.FloatField(default=0.5)
    svm = SvmParamsSerializer(default=dict)
    seed = serializers.IntegerField(min_value=0, required=False)
    n_init = serializers.IntegerField(min_value=1, default=10)
    normal_samples = serializers.IntegerField(min_value=1, allow_null=True, default=300)
    anomalous_samples = serializers.IntegerField(min_value=0, allow_null=True, default=60)
    baseline_clusters = serializers.IntegerField(min_value=2, default=5)

    def validate(self, data):
        for name in ('mu', 'eta'):
            if not 0 < data[name] < 1:
                raise serializers.ValidationError({name: "must lie strictly between 0 and 1"})
        return data

    def create(self, validated_data):
        data = dict(validated_data)
        svm = data.pop('svm')
        return InferenceConfig(
            svm=SvmParams(
                kernel=svm.get('kernel', 'rbf'),
                C=svm.get('C', 1.0),
                gamma=svm.get('gamma'),
                tol=svm.get('tol', 1e-3),
                max_iter=svm.get('max_iter', 200000),
            ),
            seed=data.pop('seed', 0),
            **data,
        )
