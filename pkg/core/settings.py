"""
Django settings for the aerial video anomaly detection project.

The project has no web surface: Django provides configuration, logging,
the run ledger database and the management-command CLI.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

LOG_DIR = BASE_DIR / 'logs'
VAR_DIR = BASE_DIR / 'var'
LOG_DIR.mkdir(exist_ok=True)
VAR_DIR.mkdir(exist_ok=True)

# Required by Django even without request handling.
SECRET_KEY = 'django-insecure-offline-pipeline-no-request-handling'

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    #rest_framework
    'rest_framework',
    #local apps
    'core_main',
    'feature_data',
    'feature_synth',
    'feature_flow',
    'feature_autoencoder',
    'feature_descriptors',
    'feature_inference',
    'feature_eval',
]


# Database (run ledger only)
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': VAR_DIR / 'pipeline.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST framework is used for record and config validation only
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Pipeline Settings
BUNDLE_FORMAT_VERSION = 'vad-bundle/1'
DEFAULT_PIPELINE_CONFIG = BASE_DIR / 'config' / 'pipeline.yaml'
TORCH_NUM_THREADS = 1

# Logging
LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {process:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'pipeline.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'matplotlib': {'level': 'WARNING'},
        'PIL': {'level': 'WARNING'},
    },
}
