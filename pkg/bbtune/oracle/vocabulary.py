from typing import Iterable, List, Sequence

from bbtune.exceptions import InvalidParameterError

MASK_TOKEN = "[MASK]"


class Vocabulary:
    """Opaque string tokens keyed by their integer position.

    Reserved tokens are template and instruction words. They can be scored
    like any other token but are never proposed as label words.
    """

    def __init__(self, tokens: Sequence[str], reserved: Iterable[str] = ()):
        self.tokens = tuple(tokens)
        self._index = {}
        for position, token in enumerate(self.tokens):
            if token in self._index:
                raise InvalidParameterError(f"duplicate token {token!r} in vocabulary")
            self._index[token] = position
        self.reserved = frozenset(reserved)
        unknown = self.reserved - set(self._index)
        if unknown:
            raise InvalidParameterError(f"reserved tokens missing from vocabulary: {sorted(unknown)}")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise InvalidParameterError(f"unknown token {token!r}") from None

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index(token) for token in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]

    def reserved_ids(self):
        return sorted(self._index[token] for token in self.reserved)

    @property
    def mask_id(self):
        return self.index(MASK_TOKEN)
