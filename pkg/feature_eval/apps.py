import matplotlib
from django.apps import AppConfig


class FeatureEvalConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_eval'
    verbose_name = 'Evaluation and experiments'

    def ready(self):
        # Charts are written to files only
        matplotlib.use('Agg')
        matplotlib.rcParams['svg.hashsalt'] = 'vad-charts'
