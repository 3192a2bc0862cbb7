"""Synthetic few-shot classification task served by a simulated model.

The task is built so that a zero prompt scores around chance while a prompt
that cancels the template offset separates the classes:

* a few key coordinates carry all class information; each class has a
  balanced sign pattern over them (antipodal for two classes)
* signal words of a class point along its pattern, and every example holds
  one to three of them among neutral filler
* template words share a large offset on the key coordinates that saturates
  the tanh layers, instruction words pull the opposite way
* label words are small vectors along their class pattern, and class 0's
  label words also lean on the template offset, a prior the prompt must undo
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from bbtune.exceptions import InvalidParameterError
from bbtune.oracle.base import SimulatedOracle
from bbtune.oracle.simulated import SimulatedModelSpec
from bbtune.oracle.vocabulary import Vocabulary
from bbtune.prompting.corpus import FewShotCorpus, LabeledExample
from bbtune.prompting.templates import DEFAULT_INSTRUCTION, DEFAULT_TEMPLATE, Template

logger = logging.getLogger(__name__)

KEY_DIMS = 16
WORD_NOISE = 0.4
LABEL_NOISE = 0.05
TEMPLATE_OFFSET = 2.5
INSTRUCTION_OFFSET = -3.0
SIGNAL_STRENGTH = 1.5
LABEL_STRENGTH = 0.5
LABEL_DECAY = (1.0, 0.8, 0.6, 0.4)
CLASS0_PRIOR = 0.3
LAYER_MIXING = 0.1
DEEP_LAYER_GAIN = 2.0
SIGNAL_WORDS = 8
CONTENT_TOKENS = 6
MIN_NEUTRAL = 32
MANUAL_PER_CLASS = 2

DEFAULT_LABEL_WORDS = (("boring", "worse", "ugly", "awful"), ("addictive", "sensational", "classic", "great"))


@dataclass(frozen=True, eq=False)
class FixtureTask:
    corpus: FewShotCorpus
    spec: SimulatedModelSpec
    label_words: Tuple[Tuple[str, ...], ...]
    signal_words: Tuple[Tuple[str, ...], ...]
    template: Template
    instruction: Tuple[str, ...]
    seed: int

    @property
    def vocabulary(self) -> Vocabulary:
        return self.spec.vocabulary

    @property
    def manual_verbalizers(self):
        return [list(words[:MANUAL_PER_CLASS]) for words in self.label_words]

    def oracle(self) -> SimulatedOracle:
        return SimulatedOracle(self.spec)

    def centering_prompts(self) -> np.ndarray:
        """Prompts that move the mean first-layer input of the training split to zero."""
        sequences = [self.vocabulary.encode(self.template.render(example.segments)[0])
                     for example in self.corpus.train]
        mean_state = self.spec.input_states(sequences).mean(axis=0)
        prompts = np.zeros((self.spec.layers, self.spec.width))
        prompts[0] = -linalg.solve(self.spec.injection[0], self.spec.hidden[0] @ mean_state)
        return prompts


def _label_words(classes, label_words):
    if label_words is None:
        if classes == 2:
            return DEFAULT_LABEL_WORDS
        label_words = [()] * classes
    if len(label_words) != classes:
        raise InvalidParameterError(f"got label words for {len(label_words)} classes, expected {classes}")
    padded = []
    for c, words in enumerate(label_words):
        words = list(words)[:len(LABEL_DECAY)]
        words += [f"label{c}_{j}" for j in range(len(words), len(LABEL_DECAY))]
        padded.append(tuple(words))
    return tuple(padded)


def _class_directions(rng, classes, size):
    base = np.array([1.0] * (size // 2) + [-1.0] * (size - size // 2))
    if classes == 2:
        first = rng.permutation(base)
        return np.stack([first, -first])
    return np.stack([rng.permutation(base) for _ in range(classes)])


def _perturbed_identity(rng, width, layers):
    noise = rng.standard_normal((layers, width, width)) / np.sqrt(width)
    return np.eye(width)[None, :, :] + LAYER_MIXING * noise


def _examples(rng, classes, shots, signal_words, neutral, pairs):
    examples = []
    for c in range(classes):
        for _ in range(shots):
            n_signal = int(rng.integers(1, 4))
            words = list(rng.choice(signal_words[c], size=n_signal)) + \
                list(rng.choice(neutral, size=CONTENT_TOKENS - n_signal))
            words = [str(word) for word in rng.permutation(words)]
            half = CONTENT_TOKENS // 2
            segments = (words[:half], words[half:]) if pairs else (words,)
            examples.append(LabeledExample(segments, c))
    order = rng.permutation(len(examples))
    return [examples[i] for i in order]


def make_fixture_task(seed: int = 42, classes: int = 2, shots: int = 16, layers: int = 3, width: int = 128,
                      vocab_size: int = 256, label_words: Optional[Sequence[Sequence[str]]] = None,
                      template: Optional[str] = None, instruction: Optional[str] = None) -> FixtureTask:
    if classes < 2 or shots < 1 or layers < 1:
        raise InvalidParameterError(f"need classes >= 2, shots >= 1 and layers >= 1, "
                                    f"got {classes}, {shots}, {layers}")
    if width < 2:
        raise InvalidParameterError(f"width must be >= 2, got {width}")
    rng = np.random.default_rng(seed)
    parsed = Template.parse(template or DEFAULT_TEMPLATE)
    instruction_tokens = tuple((DEFAULT_INSTRUCTION if instruction is None else instruction).split())
    template_words = tuple(dict.fromkeys(parsed.literal_tokens))
    instruction_words = tuple(w for w in dict.fromkeys(instruction_tokens) if w not in template_words)
    labels = _label_words(classes, label_words)
    signals = tuple(tuple(f"cue{c}_{j}" for j in range(SIGNAL_WORDS)) for c in range(classes))
    fixed = template_words + instruction_words + sum(labels, ()) + sum(signals, ())
    if len(set(fixed)) != len(fixed):
        raise InvalidParameterError("label words clash with template, instruction or signal words")
    neutral = tuple(f"tok{i}" for i in range(max(vocab_size - len(fixed), MIN_NEUTRAL)))
    vocabulary = Vocabulary(fixed + neutral, reserved=template_words + instruction_words)

    key = rng.choice(width, size=min(KEY_DIMS, width), replace=False)
    directions = _class_directions(rng, classes, key.size)
    embeddings = rng.normal(0.0, WORD_NOISE, size=(len(vocabulary), width))
    for word in template_words:
        embeddings[vocabulary.index(word), key] += TEMPLATE_OFFSET
    for word in instruction_words:
        embeddings[vocabulary.index(word), key] += INSTRUCTION_OFFSET
    for c in range(classes):
        for word in signals[c]:
            embeddings[vocabulary.index(word), key] += SIGNAL_STRENGTH * directions[c]
        for j, word in enumerate(labels[c]):
            row = vocabulary.index(word)
            embeddings[row] = rng.normal(0.0, LABEL_NOISE, size=width)
            embeddings[row, key] = LABEL_STRENGTH * LABEL_DECAY[j] * directions[c]
            if c == 0:
                embeddings[row, key] += CLASS0_PRIOR

    hidden = _perturbed_identity(rng, width, layers)
    hidden[1:] *= DEEP_LAYER_GAIN
    injection = _perturbed_identity(rng, width, layers)
    spec = SimulatedModelSpec(vocabulary, embeddings, hidden, injection)

    pairs = parsed.arity == 2
    train = _examples(rng, classes, shots, signals, neutral, pairs)
    validation = _examples(rng, classes, shots, signals, neutral, pairs)
    corpus = FewShotCorpus(train, validation, classes, shots)
    logger.info(f"Fixture task seed={seed}: {classes} classes, {shots} shots, V={len(vocabulary)}, "
                f"L={layers}, D={width}")
    return FixtureTask(corpus, spec, labels, signals, parsed, instruction_tokens, seed)

