from django.apps import AppConfig


class CoarseConfig(AppConfig):
    name = 'coarse'
    verbose_name = 'Coarse-level solvers'
