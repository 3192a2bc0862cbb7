"""
ASGI config for the bbtune oracle service.

It exposes the ASGI callable as a module-level variable named ``application``,
which ``bbtune serve`` hands to uvicorn.
"""
import os

from django.core.asgi import get_asgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "bbtune.bbtune_app.settings")

application = get_asgi_application()
