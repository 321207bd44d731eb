from django.apps import AppConfig


class FeatureFlowConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_flow'
    verbose_name = 'Dense optical flow'
