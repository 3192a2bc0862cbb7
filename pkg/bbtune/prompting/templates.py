"""Prompt templates and per-task presets.

A template is a whitespace separated pattern such as ``<P> <S> . It was [MASK]``.
``<P>`` marks where the instruction and demonstration go, ``<S>`` (or
``<S1>`` and ``<S2>`` for sentence pairs) the input text, and ``[MASK]`` the
position whose prediction is verbalized.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from bbtune.exceptions import InvalidParameterError
from bbtune.oracle.protocol import PromptedExample
from bbtune.oracle.vocabulary import MASK_TOKEN

PROMPT_SLOT = "<P>"
TEXT_SLOT = "<S>"
PAIR_SLOTS = ("<S1>", "<S2>")
SLOTS = (PROMPT_SLOT, TEXT_SLOT) + PAIR_SLOTS

DEFAULT_TEMPLATE = "<P> <S> . It was [MASK]"
PAIR_TEMPLATE = "<P> <S1> ? [MASK] , <S2>"
DEFAULT_INSTRUCTION = "Classify the sentiment of this review ."


@dataclass(frozen=True)
class Template:
    tokens: Tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "Template":
        tokens = tuple(text.split())
        if tokens.count(MASK_TOKEN) != 1:
            raise InvalidParameterError(f"template {text!r} must contain exactly one {MASK_TOKEN}")
        for slot in SLOTS:
            if tokens.count(slot) > 1:
                raise InvalidParameterError(f"slot {slot} appears more than once in {text!r}")
        has_text = TEXT_SLOT in tokens
        pair = [slot in tokens for slot in PAIR_SLOTS]
        if has_text == any(pair) or any(pair) != all(pair):
            raise InvalidParameterError(f"template {text!r} needs either {TEXT_SLOT} or both of {PAIR_SLOTS}")
        if PAIR_SLOTS[0] in tokens and tokens.index(PAIR_SLOTS[0]) > tokens.index(PAIR_SLOTS[1]):
            raise InvalidParameterError(f"{PAIR_SLOTS[0]} must come before {PAIR_SLOTS[1]} in {text!r}")
        if PROMPT_SLOT not in tokens:
            tokens = (PROMPT_SLOT,) + tokens
        return cls(tokens)

    def __str__(self):
        return " ".join(self.tokens)

    @property
    def arity(self) -> int:
        return 1 if TEXT_SLOT in self.tokens else 2

    @property
    def literal_tokens(self) -> Tuple[str, ...]:
        return tuple(token for token in self.tokens if token not in SLOTS)

    def render(self, segments: Sequence[Sequence[str]], prefix: Sequence[str] = (),
               fill_mask: Optional[str] = None) -> Tuple[Tuple[str, ...], int]:
        """Fill the slots; returns the tokens and the index of the mask token.

        With ``fill_mask`` the mask is replaced by that word, which is how a
        demonstration is written, and the returned index still points at it.
        """
        if len(segments) != self.arity:
            raise InvalidParameterError(f"template {self} expects {self.arity} segment(s), got {len(segments)}")
        fills = {PROMPT_SLOT: tuple(prefix)}
        if self.arity == 1:
            fills[TEXT_SLOT] = tuple(segments[0])
        else:
            fills.update(zip(PAIR_SLOTS, (tuple(segment) for segment in segments)))
        rendered = []
        mask = -1
        for token in self.tokens:
            if token in fills:
                rendered.extend(fills[token])
            elif token == MASK_TOKEN:
                mask = len(rendered)
                rendered.append(fill_mask or MASK_TOKEN)
            else:
                rendered.append(token)
        return tuple(rendered), mask


def encode_batch(template: Template, examples, vocabulary, prefix: Sequence[str] = ()) -> List[PromptedExample]:
    """Render and encode labeled examples into oracle batch items."""
    batch = []
    for example in examples:
        tokens, mask = template.render(example.segments, prefix)
        batch.append(PromptedExample(vocabulary.encode(tokens), mask, example.label))
    return batch


@dataclass(frozen=True)
class TaskPreset:
    name: str
    classes: int
    template: str
    instruction: str
    label_words: Tuple[Tuple[str, ...], ...]
    budget1: int
    budget2: int
    alpha: float
    sigma1: float
    sigma2: float
    two_stage: bool
    m2_verbalizers: bool
    in2_init: bool

    def config_values(self):
        """Task configuration keys this preset fixes."""
        return {
            "Budget1": self.budget1, "Budget2": self.budget2, "Alpha": self.alpha,
            "Sigma1": self.sigma1, "Sigma2": self.sigma2,
            "TwoStage": self.two_stage, "M2Verbalizers": self.m2_verbalizers, "In2Init": self.in2_init,
            "Classes": self.classes, "Template": self.template, "Instruction": self.instruction,
            "LabelWords": [list(words) for words in self.label_words],
        }


_SENTIMENT = "Classify the sentiment of this review ."
_TOPIC = "Classify the topic of this article ."
_ENTAILMENT = "Does the first sentence entail the second ?"
_PARAPHRASE = "Do the two sentences mean the same ?"

PRESETS = {preset.name: preset for preset in (
    TaskPreset("sst2", 2, DEFAULT_TEMPLATE, _SENTIMENT,
               (("ridiculous", "worse", "stupid"), ("exciting", "all", "indeed")),
               7000, 6000, 0.5, 0.7, 0.7, True, False, True),
    TaskPreset("yelp", 2, DEFAULT_TEMPLATE, _SENTIMENT,
               (("boring", "worse", "ugly"), ("addictive", "sensational", "classic")),
               8000, 6000, 0.9, 0.4, 0.2, True, True, True),
    TaskPreset("agnews", 4, "<P> [MASK] News : <S>", _TOPIC,
               (("South", "China", "Africa"), ("Athletics", "SPORTS", "Sporting"),
                ("Banking", "Manufacturing", "Trade"), ("Digital", "Internet", "Tech")),
               8000, 6000, 0.1, 0.6, 0.2, True, False, True),
    TaskPreset("dbpedia", 14, "<P> [ Category : [MASK] ] <S>", _TOPIC,
               (("Business", "Products"), ("Education", "Schools"), ("Artists",), ("Profile",),
                ("Politics",), ("Vehicles",), ("Architecture",), ("Lakes",), ("Rural",),
                ("Animals", "Birds"), ("Plants", "plants", "Flowers"), ("Album", "Records"),
                ("Movies", "Films"), ("Books", "Fiction")),
               8000, 6000, 0.3, 0.2, 0.2, True, True, True),
    TaskPreset("snli", 3, PAIR_TEMPLATE, _ENTAILMENT,
               (("Whatever", "YES", "Regardless"), ("Imagine", "Usually", "Typically"),
                ("Besides", "Unfortunately", "Surprisingly")),
               8000, 6000, 0.5, 0.45, 0.2, True, False, True),
    TaskPreset("rte", 2, PAIR_TEMPLATE, _ENTAILMENT,
               (("Indeed", "So", "Wordwide"), ("Also", "Now", "meanwhile")),
               8000, 6000, 0.5, 1.0, 0.2, True, True, True),
    TaskPreset("mrpc", 2, PAIR_TEMPLATE, _PARAPHRASE,
               (("Instead", "Although", "That"), ("Finally", "Notably", "Next")),
               8000, 0, 0.3, 0.3, 0.2, False, True, False),
)}


def get_preset(name: str) -> TaskPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}") from None
