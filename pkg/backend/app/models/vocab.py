"""
Vocabulary Model — token/id tables and the old→new overlap correspondence.

Layout:
  - ids 0..3 are reserved: <pad>, <unk>, <bos>, <eos>
  - one <lang:xxx> tag token per language of the building corpora
  - whitespace tokens fill the remaining ids

A Vocab is immutable after construction and safe for concurrent reads.
"""

import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from app.exceptions import VocabError

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

_TAG_RE = re.compile(r"^<lang:([a-z_0-9]+)>$")


def tag_token(language: str) -> str:
    return f"<lang:{language}>"


def tag_language(token: str) -> Optional[str]:
    """Language code of a tag token, or None for ordinary tokens."""
    match = _TAG_RE.match(token)
    return match.group(1) if match else None


class Vocab:
    """Dense token table with fixed reserved ids."""

    __slots__ = ("_tokens", "_index")

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if tokens[: len(RESERVED)] != RESERVED:
            raise VocabError(f"vocabulary must start with reserved tokens {RESERVED}")
        index: Dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise VocabError(f"duplicate token {tok!r} at ids {index[tok]} and {i}")
            index[tok] = i
        self._tokens = tokens
        self._index = index

    # ------- Lookup -------

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def size(self) -> int:
        return len(self._tokens)

    @property
    def tokens(self) -> Tuple[str, ...]:
        return self._tokens

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        """Id of a token; unknown tokens map to <unk>."""
        return self._index.get(token, UNK_ID)

    def lookup(self, token: str) -> Optional[int]:
        return self._index.get(token)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise VocabError(f"id {token_id} out of range for vocabulary of size {len(self._tokens)}")
        return self._tokens[token_id]

    # ------- Language tags -------

    @property
    def languages(self) -> List[str]:
        return [lang for lang in (tag_language(t) for t in self._tokens) if lang]

    def tag_id(self, language: str) -> int:
        token_id = self._index.get(tag_token(language))
        if token_id is None:
            raise VocabError(f"language tag {tag_token(language)} missing from vocabulary")
        return token_id

    def is_special(self, token_id: int) -> bool:
        """Reserved ids other than <unk>, and language tags."""
        if token_id in (PAD_ID, BOS_ID, EOS_ID):
            return True
        return tag_language(self._tokens[token_id]) is not None

    # ------- Comparison -------

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(self._tokens)

    def __repr__(self) -> str:
        return f"Vocab(size={len(self._tokens)}, languages={self.languages})"


class VocabMapping:
    """
    (old_id, new_id) pairs for tokens with identical surface strings.

    Each old id and each new id appears at most once.
    """

    __slots__ = ("pairs", "new_size", "old_size")

    def __init__(self, pairs: Iterable[Tuple[int, int]], old_size: int, new_size: int):
        pairs = tuple(sorted((int(o), int(n)) for o, n in pairs))
        olds = [o for o, _ in pairs]
        news = [n for _, n in pairs]
        if len(set(olds)) != len(olds) or len(set(news)) != len(news):
            raise VocabError("vocabulary mapping must be one-to-one")
        for o, n in pairs:
            if not (0 <= o < old_size and 0 <= n < new_size):
                raise VocabError(f"mapping pair ({o}, {n}) out of range for sizes ({old_size}, {new_size})")
        self.pairs = pairs
        self.old_size = old_size
        self.new_size = new_size

    @property
    def coverage(self) -> float:
        return len(self.pairs) / self.new_size if self.new_size else 0.0

    def new_to_old(self) -> Dict[int, int]:
        return {n: o for o, n in self.pairs}

    def old_to_new(self) -> Dict[int, int]:
        return {o: n for o, n in self.pairs}

    def unmapped_new_ids(self) -> List[int]:
        mapped = {n for _, n in self.pairs}
        return [i for i in range(self.new_size) if i not in mapped]

    def is_bijection(self) -> bool:
        return len(self.pairs) == self.old_size == self.new_size

    def transpose(self) -> "VocabMapping":
        return VocabMapping(((n, o) for o, n in self.pairs), self.new_size, self.old_size)

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VocabMapping)
            and self.pairs == other.pairs
            and self.old_size == other.old_size
            and self.new_size == other.new_size
        )
