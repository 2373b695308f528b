"""Add-k smoothed bigram language model over phones.

Contexts are the sentence-start marker plus every phone; each conditional
distribution ranges over every phone plus the sentence-end marker and is
exactly normalized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

from .errors import ParseError
from .lexicon import Lexicon
from .semiring import logsumexp

BOS = "<s>"
EOS = "</s>"

NORM_TOL = 1e-9


@dataclass(frozen=True)
class PhoneBigramLm:
    """logp[context][next] over context in {BOS} | phones, next in phones | {EOS}."""

    logp: Dict[str, Dict[str, float]]
    smoothing: float

    order = 2

    def __post_init__(self):
        if self.smoothing <= 0:
            raise ValueError("smoothing constant must be > 0")
        for ctx, dist in self.logp.items():
            norm = logsumexp(dist.values())
            if abs(norm) > NORM_TOL:
                raise ParseError(f"conditional for context {ctx!r} not normalized ({norm:.3g})")

    def cond(self, context: str, nxt: str) -> float:
        return self.logp[context][nxt]

    @property
    def phones(self) -> List[str]:
        return sorted(c for c in self.logp if c != BOS)


def estimate_phone_bigram(
    transcripts: Iterable[Sequence[str]], lex: Lexicon, k: float = 1.0
) -> PhoneBigramLm:
    """Estimate an add-k bigram over the lexicon-expanded transcripts.

    Sentence-start and sentence-end events are counted per utterance.
    Raises :class:`OovError` for any transcript token missing from the
    lexicon.
    """
    if k <= 0:
        raise ValueError("smoothing constant must be > 0")
    phones = [lex.phone_table.symbol_of(i) for i in range(2, len(lex.phone_table))]
    counts: Dict[str, Dict[str, float]] = {c: {} for c in [BOS] + phones}
    for tokens in transcripts:
        ids = lex.phones_of_tokens(tokens)
        seq = [BOS] + [lex.phone_table.symbol_of(i) for i in ids] + [EOS]
        for prev, nxt in zip(seq, seq[1:]):
            counts[prev][nxt] = counts[prev].get(nxt, 0.0) + 1.0
    events = phones + [EOS]
    logp: Dict[str, Dict[str, float]] = {}
    for ctx, ctx_counts in counts.items():
        total = sum(ctx_counts.values()) + k * len(events)
        logp[ctx] = {
            ev: math.log((ctx_counts.get(ev, 0.0) + k) / total) for ev in events
        }
    return PhoneBigramLm(logp=logp, smoothing=k)


def save_phone_lm(lm: PhoneBigramLm, path) -> None:
    with open(path, "w") as fh:
        json.dump({"smoothing": lm.smoothing, "logp": lm.logp}, fh, indent=1, sort_keys=True)


def load_phone_lm(path) -> PhoneBigramLm:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad LM JSON in {path}: {exc}") from None
    if not isinstance(data, dict) or "logp" not in data:
        raise ParseError(f"LM file {path} missing 'logp' object")
    return PhoneBigramLm(logp=data["logp"], smoothing=float(data.get("smoothing", 1.0)))
