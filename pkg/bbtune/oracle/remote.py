"""Client of a scoring service that speaks the wire protocol over HTTP."""
import json
import logging
import time
from typing import Optional

import numpy as np
import requests
from django.conf import settings

from bbtune.exceptions import OracleUnavailableError, ProtocolError
from bbtune.oracle.base import TUNE, ModelCard, Oracle
from bbtune.oracle.protocol import OracleRequest, OracleResponse, decode_response, encode_request
from bbtune.oracle.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

SCORE_PATH = "/v1/score"
MODEL_PATH = "/v1/model"
HEADERS = {"Content-Type": "application/json"}


class RemoteOracle(Oracle):
    """Posts requests to ``endpoint``; connection errors and 5xx answers are retried.

    ``session`` only needs ``post`` and ``get`` returning objects with
    ``status_code`` and ``content``, a ``requests.Session`` by default.
    """

    def __init__(self, endpoint: str, retries: Optional[int] = None, timeout: Optional[float] = None,
                 backoff: Optional[float] = None, session=None):
        super().__init__()
        if not endpoint:
            raise OracleUnavailableError("no oracle endpoint configured")
        self.endpoint = endpoint.rstrip("/")
        self.retries = settings.ORACLE_RETRIES if retries is None else retries
        self.timeout = settings.ORACLE_TIMEOUT if timeout is None else timeout
        self.backoff = settings.ORACLE_BACKOFF if backoff is None else backoff
        self.session = session or requests.Session()
        self._card = None

    def _send(self, method, path, **kwargs):
        url = f"{self.endpoint}{path}"
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * attempt)
            try:
                response = getattr(self.session, method)(url, timeout=self.timeout, **kwargs)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = str(exc)
                logger.warning(f"Oracle {url} unreachable on attempt {attempt + 1}: {exc}")
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.warning(f"Oracle {url} answered {response.status_code} on attempt {attempt + 1}")
                continue
            if response.status_code >= 400:
                raise ProtocolError(f"oracle rejected the request with HTTP {response.status_code}: "
                                    f"{_error_text(response.content)}")
            return response.content
        raise OracleUnavailableError(f"oracle {url} unavailable after {self.retries + 1} attempts: {last_error}")

    def evaluate(self, request: OracleRequest, kind: str = TUNE) -> OracleResponse:
        body = self._send("post", SCORE_PATH, data=encode_request(request), headers=HEADERS)
        response = decode_response(body, expected_rows=len(request.batch))
        calls = self.counter.increment(kind)
        return OracleResponse(response.probs, response.loss, calls, response.request_id)

    def describe(self) -> ModelCard:
        if self._card is None:
            body = self._send("get", MODEL_PATH)
            try:
                document = json.loads(body)
                vocabulary = Vocabulary(document["vocabulary"]["tokens"], document["vocabulary"]["reserved"])
                embeddings = np.array(document["embeddings"], dtype=float)
                self._card = ModelCard(vocabulary, int(document["layers"]), int(document["width"]), embeddings)
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed model description: {exc}") from exc
        return self._card


def _error_text(content):
    try:
        return json.loads(content).get("error", "")
    except (ValueError, AttributeError):
        return content[:200]
