from django.apps import AppConfig


class TheoryConfig(AppConfig):
    name = 'theory'
    verbose_name = 'Convergence theory checks'
