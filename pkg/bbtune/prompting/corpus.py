from collections import Counter
from dataclasses import dataclass
from typing import List, Tuple

from bbtune.exceptions import InvalidParameterError

TRAIN = "train"
VALIDATION = "validation"


@dataclass(frozen=True)
class LabeledExample:
    """One or two text segments of opaque tokens and a class label."""
    segments: Tuple[Tuple[str, ...], ...]
    label: int

    def __post_init__(self):
        segments = tuple(tuple(segment) for segment in self.segments)
        if not 1 <= len(segments) <= 2:
            raise InvalidParameterError(f"an example has one or two segments, got {len(segments)}")
        object.__setattr__(self, "segments", segments)

    @property
    def tokens(self) -> Tuple[str, ...]:
        return tuple(token for segment in self.segments for token in segment)


@dataclass(frozen=True)
class FewShotCorpus:
    train: Tuple[LabeledExample, ...]
    validation: Tuple[LabeledExample, ...]
    classes: int
    shots: int

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "validation", tuple(self.validation))
        if self.classes < 2:
            raise InvalidParameterError(f"a classification corpus needs >= 2 classes, got {self.classes}")
        for name in (TRAIN, VALIDATION):
            examples = getattr(self, name)
            counts = Counter(example.label for example in examples)
            if set(counts) - set(range(self.classes)):
                raise InvalidParameterError(f"{name} split has labels outside [0, {self.classes})")
            for c in range(self.classes):
                if counts[c] != self.shots:
                    raise InvalidParameterError(
                        f"{name} split has {counts[c]} examples of class {c}, expected {self.shots}")

    def split(self, name: str) -> Tuple[LabeledExample, ...]:
        if name not in (TRAIN, VALIDATION):
            raise InvalidParameterError(f"unknown split {name!r}")
        return getattr(self, name)

    def of_class(self, c: int, split: str = TRAIN) -> List[LabeledExample]:
        return [example for example in self.split(split) if example.label == c]

    def labels(self, split: str = TRAIN) -> List[int]:
        return [example.label for example in self.split(split)]
