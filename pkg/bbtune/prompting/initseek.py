"""Instruction plus demonstration initialization.

The initial prompt is built from a manual task instruction followed by the
single training example that, used as a demonstration, gives the best
validation accuracy before any tuning. Both are placed at the ``<P>`` slot of
every rendered input, and their mean embedding becomes the input layer's
``p0``.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from bbtune.exceptions import BBTuneError, InvalidParameterError, StageAborted
from bbtune.optim.subspace import PromptVector
from bbtune.oracle.base import SEARCH, Oracle
from bbtune.oracle.metrics import accuracy, mean_cross_entropy
from bbtune.oracle.protocol import OracleRequest
from bbtune.prompting.corpus import TRAIN, VALIDATION, FewShotCorpus, LabeledExample
from bbtune.prompting.templates import Template, encode_batch
from bbtune.prompting.verbalizer import VerbalizerSet, score_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instruction:
    tokens: Tuple[str, ...]
    template: Template

    @classmethod
    def from_text(cls, text: str, template: str) -> "Instruction":
        return cls(tuple(text.split()), Template.parse(template))


@dataclass(frozen=True)
class Demonstration:
    index: int
    tokens: Tuple[str, ...]


@dataclass(frozen=True)
class DemonstrationScore:
    index: int
    accuracy: float
    loss: float


@dataclass(frozen=True)
class DemonstrationSearch:
    demonstration: Demonstration
    scores: Tuple[DemonstrationScore, ...]

    def table(self) -> List[dict]:
        return [{"index": s.index, "accuracy": s.accuracy, "loss": s.loss} for s in self.scores]


def prompt_prefix(instruction: Instruction, demonstration: Optional[Demonstration]) -> Tuple[str, ...]:
    return instruction.tokens + (demonstration.tokens if demonstration is not None else ())


def render_prompt_text(instruction: Instruction, demonstration: Optional[Demonstration],
                       example: LabeledExample) -> Tuple[Tuple[str, ...], int]:
    """Instruction, then demonstration, then the templated input; returns tokens and mask index."""
    return instruction.template.render(example.segments, prompt_prefix(instruction, demonstration))


def make_demonstration(corpus: FewShotCorpus, index: int, template: Template,
                       verbalizers: VerbalizerSet) -> Demonstration:
    if not 0 <= index < len(corpus.train):
        raise InvalidParameterError(f"demonstration index {index} outside {len(corpus.train)} training examples")
    example = corpus.train[index]
    tokens, _ = template.render(example.segments, fill_mask=verbalizers.classes[example.label][0])
    return Demonstration(index, tokens)


def embed_initial_prompt(tokens: Sequence[str], oracle: Oracle) -> PromptVector:
    if not tokens:
        raise InvalidParameterError("cannot embed an empty token sequence")
    return PromptVector(oracle.describe().embed(tokens).mean(axis=0), 0)


def initial_prompts(tokens: Sequence[str], oracle: Oracle) -> List[PromptVector]:
    """Input layer gets the mean embedding of ``tokens``, deeper layers start at zero."""
    card = oracle.describe()
    prompts = [embed_initial_prompt(tokens, oracle)]
    prompts += [PromptVector.zeros(card.width, layer) for layer in range(1, card.layers)]
    return prompts


def select_demonstration(corpus: FewShotCorpus, instruction: Instruction, oracle: Oracle,
                         verbalizers: VerbalizerSet, workers: int = 1) -> DemonstrationSearch:
    """Try every training example as the demonstration, one search call each.

    Selection maximizes validation accuracy, ties going to the lowest index.
    """
    if not corpus.train:
        raise InvalidParameterError("no training examples to search")
    card = oracle.describe()
    ids = verbalizers.ids(card.vocabulary)
    labels = np.array(corpus.labels(VALIDATION))
    prompts = np.zeros((card.layers, card.width))
    demonstrations = [make_demonstration(corpus, i, instruction.template, verbalizers)
                      for i in range(len(corpus.split(TRAIN)))]
    requests = [
        OracleRequest(prompts, encode_batch(instruction.template, corpus.validation, card.vocabulary,
                                            prompt_prefix(instruction, demonstration)))
        for demonstration in demonstrations
    ]
    scores = []
    try:
        for demonstration, response in zip(demonstrations, oracle.iter_evaluate(requests, SEARCH, workers)):
            class_probs = score_batch(response.probs, ids)
            scores.append(DemonstrationScore(demonstration.index,
                                             accuracy(class_probs.argmax(axis=1), labels),
                                             mean_cross_entropy(class_probs, labels)))
    except BBTuneError as exc:
        raise StageAborted(f"demonstration search stopped after {len(scores)} candidates: {exc}",
                           tuple(scores)) from exc
    best = int(np.argmax([score.accuracy for score in scores]))
    logger.info(f"Selected demonstration {best} with validation accuracy {scores[best].accuracy:.4f}")
    return DemonstrationSearch(demonstrations[best], tuple(scores))
