from rest_framework import serializers

from feature_data.domain import OBJECT_CLASSES


class ClassKeywordMixin:
    """Expose the `object_class` field under the key 'class'"""

    def get_fields(self):
        # 'class' is a keyword, so the field is declared under another name
        fields = super().get_fields()
        fields['class'] = fields.pop('object_class')
        return fields


class DetectionRecordSerializer(ClassKeywordMixin, serializers.Serializer):
    """(INPUT) Validates one JSON Lines detection record"""

    video = serializers.CharField(max_length=200)
    frame = serializers.IntegerField(min_value=0)
    id = serializers.IntegerField(min_value=0)
    object_class = serializers.ChoiceField(choices=OBJECT_CLASSES)
    bbox = serializers.ListField(child=serializers.IntegerField(), min_length=4, max_length=4)

    def validate_bbox(self, value):
        if value[2] < 1 or value[3] < 1:
            raise serializers.ValidationError("bbox width and height must be >= 1")
        return value


class FrameAnnotationSerializer(serializers.Serializer):
    """(INPUT) Validates one `frame,label` annotation row"""

    frame = serializers.IntegerField(min_value=0)
    label = serializers.IntegerField(min_value=0, max_value=1)


class ObjectLabelSerializer(serializers.Serializer):
    """(INPUT) Validates one `video,frame,id,label,split` object label row"""

    SPLIT_CHOICES = (
        ('train', 'Train'),
        ('test', 'Test'),
    )

    video = serializers.CharField(max_length=200)
    frame = serializers.IntegerField(min_value=0)
    id = serializers.IntegerField(min_value=0)
    label = serializers.IntegerField(min_value=0, max_value=1)
    split = serializers.ChoiceField(choices=SPLIT_CHOICES)
