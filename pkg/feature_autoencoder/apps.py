import torch
from django.apps import AppConfig
from django.conf import settings


class FeatureAutoencoderConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'feature_autoencoder'
    verbose_name = 'Convolutional autoencoders'

    def ready(self):
        # Training runs must be bit-reproducible
        torch.set_num_threads(settings.TORCH_NUM_THREADS)
        torch.use_deterministic_algorithms(True)
