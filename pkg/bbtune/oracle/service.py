"""The oracle answered by the HTTP views.

``bbtune serve`` installs its oracle before uvicorn starts; without one the
first request builds the fixture task named by ``SERVE_FIXTURE_SEED``.
"""
import logging
import threading

from django.conf import settings

from bbtune.oracle.base import SERVED, Oracle
from bbtune.oracle.protocol import WIRE_VERSION, decode_request, encode_response

logger = logging.getLogger(__name__)

_lock = threading.Lock()
_served = None


def install(oracle: Oracle) -> Oracle:
    global _served
    with _lock:
        _served = oracle
    return oracle


def get_oracle() -> Oracle:
    global _served
    with _lock:
        if _served is None:
            from bbtune.oracle.fixture import make_fixture_task
            _served = make_fixture_task(seed=settings.SERVE_FIXTURE_SEED).oracle()
            logger.info(f"Serving the fixture oracle of seed {settings.SERVE_FIXTURE_SEED}")
        return _served


def score(body: bytes) -> bytes:
    """Decode, evaluate and encode one request. Rejected bodies are never counted."""
    request = decode_request(body)
    return encode_response(get_oracle().evaluate(request, SERVED))


def model_document() -> dict:
    card = get_oracle().describe()
    return {
        "version": WIRE_VERSION,
        "layers": card.layers,
        "width": card.width,
        "vocabulary": {"tokens": list(card.vocabulary.tokens), "reserved": sorted(card.vocabulary.reserved)},
        "embeddings": card.embeddings.tolist(),
    }


def health_document() -> dict:
    return {"status": "ok", "calls": get_oracle().counter.count(SERVED)}
