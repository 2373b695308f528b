"""Phone symbol table and pronunciation lexicon with a spelling-prefix index."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

from .errors import OovError, ParseError

EPS_SYM = "<eps>"
BLANK_SYM = "<blk>"
EPS_ID = 0
BLANK_ID = 1


@dataclass(frozen=True)
class SymbolTable:
    """Bidirectional symbol/id map; id 0 is epsilon and id 1 is blank."""

    symbols: Tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 2 or self.symbols[0] != EPS_SYM or self.symbols[1] != BLANK_SYM:
            raise ParseError(f"symbol table must start with {EPS_SYM} 0 and {BLANK_SYM} 1")
        if len(set(self.symbols)) != len(self.symbols):
            raise ParseError("duplicate symbols in table")

    @classmethod
    def from_phones(cls, phones: Iterable[str]) -> "SymbolTable":
        return cls((EPS_SYM, BLANK_SYM) + tuple(phones))

    @property
    def _index(self) -> Dict[str, int]:
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {s: i for i, s in enumerate(self.symbols)}
            self.__dict__["_index_cache"] = idx
        return idx

    def id_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ParseError(f"unknown symbol: {symbol!r}") from None

    def symbol_of(self, sym_id: int) -> str:
        return self.symbols[sym_id]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    @property
    def phones(self) -> Tuple[str, ...]:
        """All real symbols (epsilon and blank excluded)."""
        return self.symbols[2:]


def save_symbol_table(table: SymbolTable, path) -> None:
    with open(path, "w") as fh:
        for i, s in enumerate(table.symbols):
            fh.write(f"{s} {i}\n")


def load_symbol_table(path) -> SymbolTable:
    entries: List[Tuple[int, str]] = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(f"bad symbol line {ln} in {path}: {line!r}")
            try:
                entries.append((int(parts[1]), parts[0]))
            except ValueError:
                raise ParseError(f"bad symbol id on line {ln} in {path}") from None
    entries.sort()
    if [i for i, _ in entries] != list(range(len(entries))):
        raise ParseError(f"symbol ids in {path} are not dense from 0")
    return SymbolTable(tuple(s for _, s in entries))


class _TrieNode:
    __slots__ = ("children", "words")

    def __init__(self):
        self.children: Dict[str, "_TrieNode"] = {}
        self.words: List[str] = []


@dataclass(frozen=True)
class Lexicon:
    """Word -> phone-id-sequence map with character-prefix lookup."""

    entries: Dict[str, Tuple[int, ...]]
    phone_table: SymbolTable
    _trie: _TrieNode = field(repr=False, default=None)

    def __post_init__(self):
        for word, phones in self.entries.items():
            if not phones:
                raise ParseError(f"word {word!r} maps to an empty phone sequence")
            for p in phones:
                if not (2 <= p < len(self.phone_table)):
                    raise ParseError(f"word {word!r} references invalid phone id {p}")
        root = _TrieNode()
        for word in self.entries:
            node = root
            node.words.append(word)
            for ch in word:
                node = node.children.setdefault(ch, _TrieNode())
                node.words.append(word)
        object.__setattr__(self, "_trie", root)

    def phones_of(self, word: str) -> Tuple[int, ...]:
        try:
            return self.entries[word]
        except KeyError:
            raise OovError(word) from None

    def phones_of_tokens(self, tokens: Iterable[str]) -> Tuple[int, ...]:
        out: List[int] = []
        for tok in tokens:
            out.extend(self.phones_of(tok))
        return tuple(out)

    def words_with_prefix(self, prefix: str) -> Tuple[str, ...]:
        """All lexicon words whose spelling starts with ``prefix``, sorted."""
        node = self._trie
        for ch in prefix:
            node = node.children.get(ch)
            if node is None:
                return ()
        return tuple(sorted(node.words))

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    @property
    def words(self) -> Tuple[str, ...]:
        return tuple(sorted(self.entries))


def save_lexicon(lex: Lexicon, path) -> None:
    with open(path, "w") as fh:
        for word in sorted(lex.entries):
            phones = " ".join(lex.phone_table.symbol_of(p) for p in lex.entries[word])
            fh.write(f"{word} {phones}\n")


def load_lexicon(path, phone_table: SymbolTable) -> Lexicon:
    entries: Dict[str, Tuple[int, ...]] = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ParseError(f"lexicon line {ln} has no pronunciation: {line!r}")
            word = parts[0]
            if word in entries:
                raise ParseError(f"duplicate lexicon entry on line {ln}: {word!r}")
            entries[word] = tuple(phone_table.id_of(p) for p in parts[1:])
    return Lexicon(entries, phone_table)
