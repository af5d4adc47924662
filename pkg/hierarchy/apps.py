from django.apps import AppConfig


class HierarchyConfig(AppConfig):
    name = 'hierarchy'
    verbose_name = 'Two-level hierarchies'
