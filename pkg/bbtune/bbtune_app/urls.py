"""bbtune URL Configuration

Only the oracle app is routed; see bbtune/oracle/urls.py for the endpoints.
"""
import os

from django.urls import include, path

url_prefix = os.getenv("DJANGO_BASE_PATH") if os.getenv("DJANGO_BASE_PATH") is not None else ""

urlpatterns = [
    path(url_prefix, include('bbtune.oracle.urls')),
]
