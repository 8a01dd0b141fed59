"""
Django settings for securekg_project project.

The project hosts a single app, ``securekg``, whose management commands are
the toolkit's command-line surface (``python manage.py merge ...``).

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path

import dj_database_url
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='securekg-local-development-key')
DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',

    # Third-party apps
    'rest_framework',

    # Local apps
    'securekg',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': dj_database_url.parse(
        config('DATABASE_URL', default=f"sqlite:///{BASE_DIR / 'securekg.sqlite3'}"),
        conn_max_age=0,
    )
}


# Django REST Framework Configuration
# Serializers validate run configs and render reports; no views are served.
REST_FRAMEWORK = {
    'COERCE_DECIMAL_TO_STRING': False,
    'DATETIME_FORMAT': '%Y-%m-%d %H:%M:%S',
}


# Secure knowledge-graph toolkit
SECURE_KG = {
    # Fixed-point ring Z_{2^64}
    'FRAC_BITS': config('SECUREKG_FRAC_BITS', default=16, cast=int),
    'MAGNITUDE_BOUND': config('SECUREKG_MAGNITUDE_BOUND', default=2 ** 20, cast=float),

    # Protocol parameters
    'DEFAULT_SEED': config('SECUREKG_SEED', default=2021, cast=int),
    'DIV_ITERATIONS': config('SECUREKG_DIV_ITERATIONS', default=15, cast=int),
    'COMPARE_MASK_BITS': config('SECUREKG_COMPARE_MASK_BITS', default=20, cast=int),
    'PSI_GROUP': config('SECUREKG_PSI_GROUP', default='x25519'),

    # Merging
    'LINK_THRESHOLD': config('SECUREKG_LINK_THRESHOLD', default=0.55, cast=float),
    'FEATURE_DIM': config('SECUREKG_FEATURE_DIM', default=128, cast=int),

    # Output
    'OUTPUT_DIR': Path(config('SECUREKG_OUTPUT_DIR', default=str(BASE_DIR / 'runs'))),
}


# Logging
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'protocol': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'protocol',
        },
    },
    'loggers': {
        'securekg': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
