"""A small frozen model that stands in for a hosted masked language model.

Forward pass for one example::

    h0 = mean embedding of the example tokens
    h^l = tanh(W^l h^(l-1) + U^l p^l)        l = 1..L
    probs = softmax(E h^L)

The output head is tied to the embedding table ``E``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from bbtune.exceptions import InvalidParameterError
from bbtune.oracle.metrics import batch_loss
from bbtune.oracle.protocol import OracleRequest, OracleResponse
from bbtune.oracle.vocabulary import Vocabulary


def _freeze(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SimulatedModelSpec:
    vocabulary: Vocabulary
    embeddings: np.ndarray
    hidden: np.ndarray
    injection: np.ndarray

    def __post_init__(self):
        for name in ("embeddings", "hidden", "injection"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        V, D = self.embeddings.shape
        if V != len(self.vocabulary):
            raise InvalidParameterError(f"embedding table has {V} rows for {len(self.vocabulary)} tokens")
        if self.hidden.ndim != 3 or self.hidden.shape[1:] != (D, D):
            raise InvalidParameterError(f"hidden transforms must be L x {D} x {D}, got {self.hidden.shape}")
        if self.injection.shape != self.hidden.shape:
            raise InvalidParameterError("prompt injection transforms must match the hidden transforms")

    @property
    def layers(self):
        return self.hidden.shape[0]

    @property
    def width(self):
        return self.embeddings.shape[1]

    @property
    def vocab_size(self):
        return self.embeddings.shape[0]

    def input_states(self, sequences):
        return np.stack([self.embeddings[list(tokens)].mean(axis=0) for tokens in sequences])


def forward_states(spec: SimulatedModelSpec, states, prompts) -> np.ndarray:
    """Run ``batch x D`` input states through every layer."""
    h = states
    for layer in range(spec.layers):
        h = np.tanh(h @ spec.hidden[layer].T + spec.injection[layer] @ prompts[layer])
    return h


def simulate_forward(spec: SimulatedModelSpec, request: OracleRequest) -> OracleResponse:
    prompts = request.prompts
    if prompts.shape != (spec.layers, spec.width):
        raise InvalidParameterError(
            f"request carries prompts of shape {prompts.shape}, model expects ({spec.layers}, {spec.width})")
    sequences = []
    for example in request.batch:
        if min(example.tokens) < 0 or max(example.tokens) >= spec.vocab_size:
            raise InvalidParameterError(f"token id outside a vocabulary of {spec.vocab_size}")
        sequences.append(example.tokens)
    h = forward_states(spec, spec.input_states(sequences), prompts)
    probs = softmax(h @ spec.embeddings.T, axis=1)
    loss = None
    if request.verbalizers is not None:
        if any(t < 0 or t >= spec.vocab_size for ids in request.verbalizers for t in ids):
            raise InvalidParameterError(f"verbalizer token outside a vocabulary of {spec.vocab_size}")
        if request.labels.max() >= len(request.verbalizers):
            raise InvalidParameterError(f"label outside {len(request.verbalizers)} verbalized classes")
        loss = batch_loss(probs, request.verbalizers, request.labels)
    return OracleResponse(probs, loss, request_id=request.request_id)
