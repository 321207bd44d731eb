from django.apps import AppConfig


class FeatureSynthConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_synth'
    verbose_name = 'Synthetic scenario generator'
