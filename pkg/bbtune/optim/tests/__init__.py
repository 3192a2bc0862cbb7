import os

import django

# The DJANGO_SETTINGS_MODULE has to be set before any test module imports django code
os.environ.setdefault("DJANGO_SETTINGS_MODULE", "bbtune.bbtune_app.settings")
django.setup()
