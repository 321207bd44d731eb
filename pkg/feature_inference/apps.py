from django.apps import AppConfig


class FeatureInferenceConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_inference'
    verbose_name = 'Cluster classifier ensemble'
