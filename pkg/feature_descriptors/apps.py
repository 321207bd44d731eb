from django.apps import AppConfig


class FeatureDescriptorsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_descriptors'
    verbose_name = 'Object descriptors'
