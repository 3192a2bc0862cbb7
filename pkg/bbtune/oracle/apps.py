from django.apps import AppConfig


class OracleConfig(AppConfig):
    name = 'bbtune.oracle'
    label = 'oracle'
    verbose_name = 'Black-box oracle'
