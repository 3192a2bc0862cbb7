"""Multi-mixed verbalizers.

A class is represented by several label tokens; its score is the average of
their mask-position probabilities. Tokens come from three routes: a manual
list, TF-IDF search over the class's training texts, and ranking by the
oracle's own predictions. ``assemble_m2`` mixes them.
"""
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from bbtune.exceptions import InvalidParameterError
from bbtune.oracle.base import SEARCH, Oracle
from bbtune.oracle.metrics import average_class_probabilities
from bbtune.oracle.protocol import OracleRequest
from bbtune.oracle.vocabulary import Vocabulary
from bbtune.prompting.corpus import TRAIN, FewShotCorpus
from bbtune.prompting.templates import Template, encode_batch

logger = logging.getLogger(__name__)

DEFAULT_PER_CLASS_CAP = 3


class Provenance(str, Enum):
    MANUAL = "manual"
    TFIDF = "tfidf"
    AUTO = "auto"


@dataclass(frozen=True)
class VerbalizerSet:
    classes: Tuple[Tuple[str, ...], ...]
    provenance: Tuple[Tuple[Provenance, ...], ...]

    def __post_init__(self):
        classes = tuple(tuple(tokens) for tokens in self.classes)
        provenance = tuple(tuple(Provenance(p) for p in tags) for tags in self.provenance)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "provenance", provenance)
        if len(classes) < 2:
            raise InvalidParameterError(f"a verbalizer set needs >= 2 classes, got {len(classes)}")
        if [len(t) for t in classes] != [len(p) for p in provenance]:
            raise InvalidParameterError("every token needs exactly one provenance tag")
        seen = {}
        for c, tokens in enumerate(classes):
            if not tokens:
                raise InvalidParameterError(f"class {c} has no verbalizer tokens")
            for token in tokens:
                if token in seen:
                    raise InvalidParameterError(f"token {token!r} verbalizes both class {seen[token]} and {c}")
                seen[token] = c

    @classmethod
    def manual(cls, token_lists: Sequence[Sequence[str]]) -> "VerbalizerSet":
        return cls(token_lists, [[Provenance.MANUAL] * len(tokens) for tokens in token_lists])

    def __len__(self):
        return len(self.classes)

    def ids(self, vocabulary: Vocabulary) -> List[List[int]]:
        return [vocabulary.encode(tokens) for tokens in self.classes]

    def first_tokens(self) -> "VerbalizerSet":
        """Plain one-token-per-class verbalizer."""
        return VerbalizerSet([tokens[:1] for tokens in self.classes], [tags[:1] for tags in self.provenance])

    def to_document(self) -> dict:
        return {"classes": [
            [{"token": token, "provenance": tag.value} for token, tag in zip(tokens, tags)]
            for tokens, tags in zip(self.classes, self.provenance)
        ]}

    @classmethod
    def from_document(cls, document) -> "VerbalizerSet":
        try:
            entries = document["classes"]
            return cls([[entry["token"] for entry in tokens] for tokens in entries],
                       [[entry["provenance"] for entry in tokens] for tokens in entries])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParameterError(f"malformed verbalizer document: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_document(), indent=2))

    @classmethod
    def load(cls, path) -> "VerbalizerSet":
        try:
            document = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise InvalidParameterError(f"cannot read verbalizer file {path}: {exc}") from exc
        return cls.from_document(document)


@dataclass(frozen=True, eq=False)
class ClassScores:
    probabilities: np.ndarray
    normalized: bool

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.probabilities))


def score_classes(mask_token_probs, verbalizer_ids: Sequence[Sequence[int]], normalize: bool = True) -> ClassScores:
    probs = np.asarray(mask_token_probs, dtype=float)
    if probs.ndim != 1:
        raise InvalidParameterError("score_classes takes one probability vector, use score_batch for batches")
    if np.any(probs < 0):
        raise InvalidParameterError("probabilities must be non-negative")
    _check_ids(verbalizer_ids, probs.shape[0])
    return ClassScores(average_class_probabilities(probs, verbalizer_ids, normalize)[0], normalize)


def score_batch(probs, verbalizer_ids: Sequence[Sequence[int]], normalize: bool = True) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    _check_ids(verbalizer_ids, probs.shape[-1])
    return average_class_probabilities(probs, verbalizer_ids, normalize)


def _check_ids(verbalizer_ids, vocab_size):
    for c, ids in enumerate(verbalizer_ids):
        if len(ids) == 0:
            raise InvalidParameterError(f"class {c} has no verbalizer tokens")
        if any(not 0 <= i < vocab_size for i in ids):
            raise InvalidParameterError(f"class {c} has a token id outside a vocabulary of {vocab_size}")


def tfidf_candidates(corpus: FewShotCorpus, k_per_class: int, exclude: Iterable[str] = ()) -> List[List[str]]:
    """Rank tokens per class by ``tf * log((1 + C) / (1 + df))``.

    Each class is one document made of all its training texts; ``df`` counts
    the classes whose document holds the token. Ties go to the
    lexicographically smaller token.
    """
    if k_per_class < 1:
        raise InvalidParameterError(f"k_per_class must be >= 1, got {k_per_class}")
    excluded = set(exclude)
    documents = []
    for c in range(corpus.classes):
        counts = Counter(token for example in corpus.of_class(c, TRAIN) for token in example.tokens)
        if not counts:
            raise InvalidParameterError(f"class {c} has no training text")
        documents.append(counts)
    document_frequency = Counter(token for counts in documents for token in counts)
    ranked = []
    for counts in documents:
        scores = {token: tf * math.log((1 + corpus.classes) / (1 + document_frequency[token]))
                  for token, tf in counts.items() if token not in excluded}
        ranked.append([token for token, _ in sorted(scores.items(), key=lambda item: (-item[1], item[0]))]
                      [:k_per_class])
    return ranked


def auto_candidates(corpus: FewShotCorpus, oracle: Oracle, template: Template, k_per_class: int,
                    prefix: Sequence[str] = ()) -> List[List[str]]:
    """Rank unreserved tokens by mean predicted probability over each class's examples.

    Runs with a zero prompt, one search call per class. Classes claim tokens in
    ascending order, a claimed token is skipped by later classes.
    """
    if k_per_class < 1:
        raise InvalidParameterError(f"k_per_class must be >= 1, got {k_per_class}")
    card = oracle.describe()
    vocabulary = card.vocabulary
    reserved = set(vocabulary.reserved_ids())
    prompts = np.zeros((card.layers, card.width))
    claimed = set()
    ranked = []
    for c in range(corpus.classes):
        batch = encode_batch(template, corpus.of_class(c, TRAIN), vocabulary, prefix)
        response = oracle.evaluate(OracleRequest(prompts, batch), SEARCH)
        mean = response.probs.mean(axis=0)
        order = np.argsort(-mean, kind="stable")
        picks = [int(i) for i in order if int(i) not in reserved and int(i) not in claimed][:k_per_class]
        claimed.update(picks)
        ranked.append(vocabulary.decode(picks))
    return ranked


def assemble_m2(manual: Sequence[Sequence[str]], tfidf: Optional[Sequence[Sequence[str]]] = None,
                auto: Optional[Sequence[Sequence[str]]] = None,
                per_class_cap: int = DEFAULT_PER_CLASS_CAP) -> VerbalizerSet:
    """Manual, then TF-IDF, then auto tokens per class, first occurrence wins.

    A token already taken by a lower class index is skipped.
    """
    if per_class_cap < 1:
        raise InvalidParameterError(f"per_class_cap must be >= 1, got {per_class_cap}")
    classes = len(manual)
    routes = [(Provenance.MANUAL, manual), (Provenance.TFIDF, tfidf), (Provenance.AUTO, auto)]
    for tag, lists in routes:
        if lists is not None and len(lists) != classes:
            raise InvalidParameterError(f"{tag.value} lists cover {len(lists)} classes, expected {classes}")
    claimed = set()
    tokens, tags = [], []
    for c in range(classes):
        kept, kept_tags = [], []
        for tag, lists in routes:
            for token in (lists[c] if lists is not None else ()):
                if len(kept) == per_class_cap:
                    break
                if token in kept or token in claimed:
                    continue
                kept.append(token)
                kept_tags.append(tag)
        if not kept:
            raise InvalidParameterError(f"class {c} ends up without verbalizer tokens")
        claimed.update(kept)
        tokens.append(kept)
        tags.append(kept_tags)
    verbalizers = VerbalizerSet(tokens, tags)
    logger.info(f"Assembled verbalizers {[list(t) for t in verbalizers.classes]}")
    return verbalizers
