from django.apps import AppConfig


class CoreMainConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core_main'
    verbose_name = 'Pipeline runs'
