"""Oracle interface and the centralized call counter.

Every backend charges its calls to one ``CallCounter``. Budget checks in the
scheduler reconcile against the ``tune`` kind only.
"""
import logging
import threading
from abc import ABC, abstractmethod
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Sequence

import numpy as np

from bbtune.exceptions import InvalidParameterError
from bbtune.oracle.protocol import OracleRequest, OracleResponse
from bbtune.oracle.simulated import SimulatedModelSpec, simulate_forward
from bbtune.oracle.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

TUNE = "tune"
PROBE = "probe"
SEARCH = "search"
SERVED = "served"
CALL_KINDS = (TUNE, PROBE, SEARCH, SERVED)


class CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._counts = Counter()

    def increment(self, kind: str = TUNE) -> int:
        if kind not in CALL_KINDS:
            raise InvalidParameterError(f"unknown call kind {kind!r}, expected one of {CALL_KINDS}")
        with self._lock:
            self._counts[kind] += 1
            return self._counts[kind]

    def count(self, kind: str = TUNE) -> int:
        with self._lock:
            return self._counts[kind]

    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    def snapshot(self) -> dict:
        with self._lock:
            return {kind: self._counts[kind] for kind in CALL_KINDS}


@dataclass(frozen=True, eq=False)
class ModelCard:
    vocabulary: Vocabulary
    layers: int
    width: int
    embeddings: np.ndarray

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        return self.embeddings[self.vocabulary.encode(tokens)]


class Oracle(ABC):
    def __init__(self):
        self.counter = CallCounter()

    @abstractmethod
    def evaluate(self, request: OracleRequest, kind: str = TUNE) -> OracleResponse:
        """One black-box forward pass over the whole batch, charged as one call of ``kind``."""

    @abstractmethod
    def describe(self) -> ModelCard:
        pass

    def iter_evaluate(self, requests: Sequence[OracleRequest], kind: str = TUNE,
                      workers: int = 1) -> Iterator[OracleResponse]:
        """Evaluate independent requests, yielding responses in request order.

        A failure surfaces at its own position, after every earlier response.
        """
        if workers <= 1 or len(requests) <= 1:
            for request in requests:
                yield self.evaluate(request, kind)
            return
        with ThreadPoolExecutor(max_workers=workers) as executor:
            yield from executor.map(lambda request: self.evaluate(request, kind), requests)

    def evaluate_many(self, requests: Sequence[OracleRequest], kind: str = TUNE,
                      workers: int = 1) -> List[OracleResponse]:
        return list(self.iter_evaluate(requests, kind, workers))


class SimulatedOracle(Oracle):
    def __init__(self, spec: SimulatedModelSpec):
        super().__init__()
        self.spec = spec

    def evaluate(self, request: OracleRequest, kind: str = TUNE) -> OracleResponse:
        response = simulate_forward(self.spec, request)
        calls = self.counter.increment(kind)
        return OracleResponse(response.probs, response.loss, calls, response.request_id)

    def describe(self) -> ModelCard:
        return ModelCard(self.spec.vocabulary, self.spec.layers, self.spec.width, self.spec.embeddings)
