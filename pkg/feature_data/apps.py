from django.apps import AppConfig


class FeatureDataConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_data'
    verbose_name = 'Domain types and file formats'
