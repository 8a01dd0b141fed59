from django.apps import AppConfig


class SecureKgConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'securekg'
    verbose_name = 'Secure knowledge-graph toolkit'
