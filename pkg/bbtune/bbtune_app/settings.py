"""
Django settings for the bbtune project.

The oracle service and the command line tools share this module. Every value
can be overridden from the environment, the same way a deployed instance is
configured.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""
import os
from pathlib import Path

import sentry_sdk
from sentry_sdk.integrations.django import DjangoIntegration


def traces_sampler(sampling_context):
    scope = sampling_context.get("asgi_scope") or {}
    if scope.get("path") == "/health":
        # Drop this transaction, by setting its sample rate to 0%
        return 0
    else:
        return 0.1


if os.getenv("DEPLOYMENT_ENVIRONMENT") is not None and os.getenv("SENTRY_DSN"):
    sentry_sdk.init(
        dsn=os.getenv("SENTRY_DSN"),
        integrations=[
            DjangoIntegration(),
        ],
        environment=os.getenv("DEPLOYMENT_ENVIRONMENT"),
        traces_sampler=traces_sampler,
        send_default_pii=False
    )

BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', default='bbtune-local-only-8q1m!c0v#r3x7z2k5w')

if os.getenv("BBTUNE_ENVIRONMENT_TAG", "envvar_not_existing") == "dev":
    DEBUG = True
else:
    DEBUG = False

ALLOWED_HOSTS = [os.getenv("DOMAIN_HOSTED", "localhost"), '127.0.0.1', 'localhost', '[::1]', 'testserver',
                 os.environ.get('POD_IP', default='envvar_not_existing')]

INSTALLED_APPS = [
    'bbtune.oracle',
]

MIDDLEWARE = [
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'bbtune.bbtune_app.urls'

ASGI_APPLICATION = 'bbtune.bbtune_app.asgi.application'

# The oracle service is stateless apart from its call counter, no database is used.
DATABASES = {}

USE_I18N = False

USE_TZ = True

TIME_ZONE = 'UTC'

DATA_UPLOAD_MAX_MEMORY_SIZE = None

# ##################################################
# ################ START ORACLE ####################
# ##################################################

# Remote scoring service, e.g. http://127.0.0.1:8765 as started by `bbtune serve`
ORACLE_ENDPOINT = os.getenv("BBTUNE_ENDPOINT")

ORACLE_RETRIES = int(os.getenv("BBTUNE_ORACLE_RETRIES", "3"))

ORACLE_TIMEOUT = float(os.getenv("BBTUNE_ORACLE_TIMEOUT", "30"))

# Seconds, multiplied by the attempt number
ORACLE_BACKOFF = float(os.getenv("BBTUNE_ORACLE_BACKOFF", "0.5"))

# Concurrent candidate evaluations inside one CMA-ES generation
ORACLE_WORKERS = int(os.getenv("BBTUNE_ORACLE_WORKERS", "1"))

PROBABILITY_FLOOR = 1e-12

OUTPUT_DIR = os.getenv("BBTUNE_OUTPUT_DIR", "runs")

# Synthetic task behind `bbtune serve` when no oracle was installed explicitly
SERVE_FIXTURE_SEED = int(os.getenv("BBTUNE_FIXTURE_SEED", "42"))

# ##################################################
# ################# END ORACLE #####################
# ##################################################

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {message}',
            'style': '{'
        }
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv("LOG_LEVEL", "INFO"),
    }
}
