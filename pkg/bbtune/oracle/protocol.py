"""Wire documents exchanged with a scoring service.

Request::

    {"version": 1, "request_id": "...", "prompts": [[real]],
     "batch": [{"tokens": [int], "mask": int, "label": int}],
     "verbalizers": [[int]]}            # optional

Response::

    {"version": 1, "request_id": "...", "probs": [[real]], "loss": real | null,
     "calls": int}

Reals are written with ``repr`` precision so a decoded document reproduces the
sender's floats exactly. Documents are single-line JSON.
"""
import json
import math
import uuid
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from bbtune.exceptions import InvalidParameterError, ProtocolError

WIRE_VERSION = 1
PROBABILITY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PromptedExample:
    tokens: Tuple[int, ...]
    mask: int
    label: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not 0 <= self.mask < len(self.tokens):
            raise InvalidParameterError(f"mask position {self.mask} outside a sequence of {len(self.tokens)}")
        if self.label < 0:
            raise InvalidParameterError(f"label must be >= 0, got {self.label}")


@dataclass(frozen=True, eq=False)
class OracleRequest:
    prompts: np.ndarray
    batch: Tuple[PromptedExample, ...]
    verbalizers: Optional[Tuple[Tuple[int, ...], ...]] = None
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self):
        prompts = np.array(self.prompts, dtype=float)
        if prompts.ndim != 2:
            raise InvalidParameterError(f"prompts must be an L x D matrix, got shape {prompts.shape}")
        if not np.all(np.isfinite(prompts)):
            raise InvalidParameterError("prompts have non-finite entries")
        prompts.setflags(write=False)
        object.__setattr__(self, "prompts", prompts)
        object.__setattr__(self, "batch", tuple(self.batch))
        if not self.batch:
            raise InvalidParameterError("a request needs at least one example")
        if self.verbalizers is not None:
            object.__setattr__(self, "verbalizers", tuple(tuple(int(t) for t in ids) for ids in self.verbalizers))

    @property
    def labels(self):
        return np.array([example.label for example in self.batch])

    def with_prompts(self, prompts):
        return OracleRequest(prompts, self.batch, self.verbalizers)


@dataclass(frozen=True, eq=False)
class OracleResponse:
    probs: np.ndarray
    loss: Optional[float] = None
    calls: int = 0
    request_id: str = ""

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise InvalidParameterError(f"probs must be a batch x vocabulary matrix, got shape {probs.shape}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


def _dumps(document) -> bytes:
    return json.dumps(document, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _loads(body):
    try:
        document = json.loads(body)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"body is not a JSON document: {exc}") from exc
    if not isinstance(document, dict):
        raise ProtocolError("body must be a JSON object")
    if document.get("version") != WIRE_VERSION:
        raise ProtocolError(f"unsupported wire version {document.get('version')!r}")
    return document


def _matrix(value, name):
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        raise ProtocolError(f"{name} must be a non-empty list of lists")
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"{name} is not a numeric matrix: {exc}") from exc
    if matrix.ndim != 2:
        raise ProtocolError(f"{name} rows have different lengths")
    if not np.all(np.isfinite(matrix)):
        raise ProtocolError(f"{name} has non-finite entries")
    return matrix


def _int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError(f"{name} must be an integer, got {value!r}")
    return value


def encode_request(request: OracleRequest) -> bytes:
    document = {
        "version": WIRE_VERSION,
        "request_id": request.request_id,
        "prompts": request.prompts.tolist(),
        "batch": [{"tokens": list(e.tokens), "mask": e.mask, "label": e.label} for e in request.batch],
    }
    if request.verbalizers is not None:
        document["verbalizers"] = [list(ids) for ids in request.verbalizers]
    return _dumps(document)


def decode_request(body) -> OracleRequest:
    document = _loads(body)
    prompts = _matrix(document.get("prompts"), "prompts")
    batch = document.get("batch")
    if not isinstance(batch, list) or not batch:
        raise ProtocolError("batch must be a non-empty list")
    examples = []
    for position, item in enumerate(batch):
        if not isinstance(item, dict) or not isinstance(item.get("tokens"), list):
            raise ProtocolError(f"batch[{position}] must hold a token list")
        tokens = [_int(t, f"batch[{position}].tokens") for t in item["tokens"]]
        try:
            examples.append(PromptedExample(tokens, _int(item.get("mask"), f"batch[{position}].mask"),
                                            _int(item.get("label", 0), f"batch[{position}].label")))
        except InvalidParameterError as exc:
            raise ProtocolError(f"batch[{position}]: {exc}") from exc
    verbalizers = document.get("verbalizers")
    if verbalizers is not None:
        if not isinstance(verbalizers, list) or not all(isinstance(ids, list) and ids for ids in verbalizers):
            raise ProtocolError("verbalizers must be a list of non-empty token lists")
        verbalizers = [[_int(t, "verbalizers") for t in ids] for ids in verbalizers]
    request_id = document.get("request_id") or uuid.uuid4().hex
    return OracleRequest(prompts, examples, verbalizers, str(request_id))


def encode_response(response: OracleResponse) -> bytes:
    return _dumps({
        "version": WIRE_VERSION,
        "request_id": response.request_id,
        "probs": response.probs.tolist(),
        "loss": response.loss,
        "calls": response.calls,
    })


def decode_response(body, expected_rows: Optional[int] = None) -> OracleResponse:
    document = _loads(body)
    probs = _matrix(document.get("probs"), "probs")
    if expected_rows is not None and probs.shape[0] != expected_rows:
        raise ProtocolError(f"expected {expected_rows} probability rows, got {probs.shape[0]}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROBABILITY_TOLERANCE):
        raise ProtocolError("probability rows must be non-negative and sum to 1")
    loss = document.get("loss")
    if loss is not None:
        if isinstance(loss, bool) or not isinstance(loss, (int, float)) or not math.isfinite(loss):
            raise ProtocolError(f"loss must be a finite number or null, got {loss!r}")
        loss = float(loss)
    calls = document.get("calls", 0)
    return OracleResponse(probs, loss, _int(calls, "calls"), str(document.get("request_id", "")))


def build_request(prompts, sequences: Sequence[Sequence[int]], masks: Sequence[int], labels: Sequence[int],
                  verbalizers=None) -> OracleRequest:
    examples: List[PromptedExample] = [PromptedExample(s, m, y) for s, m, y in zip(sequences, masks, labels)]
    return OracleRequest(prompts, examples, verbalizers)
