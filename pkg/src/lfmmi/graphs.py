"""Alignment-graph compilers.

Numerator graphs accept exactly the frame-level alignment strings of a
transcript (or of a spelling prefix via parallel look-ahead branches)
under a CTC-style topology: every phone has a self-loop, optional blanks
sit at every boundary, and a blank is mandatory between identical
adjacent phones. The denominator graph is a phone-loop acceptor carrying
bigram language-model weights on phone-entry arcs; it is independent of
any utterance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import DeadPrefixError
from .fsa import Arc, Fsa
from .lexicon import BLANK_ID, Lexicon, SymbolTable
from .lm import BOS, EOS, PhoneBigramLm
from .semiring import ZERO


@dataclass(frozen=True)
class TopologyConfig:
    """CTC-style HMM topology knobs. Blank must sit at emission index 1."""

    blank_id: int = BLANK_ID
    allow_repeat_collapse: bool = True

    def __post_init__(self):
        if self.blank_id != BLANK_ID:
            raise ValueError("blank must be emission symbol 1")
        if not self.allow_repeat_collapse:
            raise ValueError("repeat-collapsing topology is the only supported one")


@dataclass(frozen=True)
class PrefixSplit:
    """Word context plus a dangling spelling prefix and its expansion set.

    ``expansion`` holds every lexicon word the prefix may complete to.
    When the prefix is itself a finished word (``complete=True``) the
    expansion is exactly that word.
    """

    context: Tuple[str, ...]
    prefix: str
    expansion: Tuple[str, ...]
    complete: bool = False

    def __post_init__(self):
        for w in self.expansion:
            if not w.startswith(self.prefix):
                raise ValueError(f"expansion word {w!r} does not start with {self.prefix!r}")
        if self.complete and self.expansion != (self.prefix,):
            raise ValueError("a complete prefix must expand to exactly itself")

    @property
    def tokens(self) -> Tuple[str, ...]:
        return self.context + (self.prefix,)


def make_split(
    context: Sequence[str], prefix: str, lex: Lexicon, complete: bool = False
) -> PrefixSplit:
    """Build a split against the lexicon; raises on a dead prefix."""
    if complete:
        if prefix not in lex:
            raise DeadPrefixError(prefix)
        expansion: Tuple[str, ...] = (prefix,)
    else:
        expansion = lex.words_with_prefix(prefix)
        if not expansion:
            raise DeadPrefixError(prefix)
    return PrefixSplit(tuple(context), prefix, expansion, complete=complete)


class _TopologyBuilder:
    """Accumulates the two-states-per-phone CTC pattern with appended ids.

    State 0 is the start and doubles as the blank region before the first
    phone. Appending a phone adds its emitting state (self-loop on the
    phone) and the blank state after it; entry arcs come from the previous
    blank state always and from the previous emitting state only when the
    labels differ, which forces the separating blank between repeats.
    """

    def __init__(self, blank_id: int):
        self.blank_id = blank_id
        self.arcs: List[Arc] = [Arc(0, 0, blank_id, 0.0)]
        self.num_states = 1

    def append_phone(
        self, attach: Tuple[Optional[int], int, Optional[int]], phone: int, weight: float = 0.0
    ) -> Tuple[int, int, int]:
        """Extend from ``attach`` = (emit_state, blank_state, label); returns the new triple."""
        prev_emit, prev_blank, prev_label = attach
        emit = self.num_states
        blank = emit + 1
        self.num_states += 2
        self.arcs.append(Arc(prev_blank, emit, phone, weight))
        if prev_emit is not None and prev_label != phone:
            self.arcs.append(Arc(prev_emit, emit, phone, weight))
        self.arcs.append(Arc(emit, emit, phone, 0.0))
        self.arcs.append(Arc(emit, blank, self.blank_id, 0.0))
        self.arcs.append(Arc(blank, blank, self.blank_id, 0.0))
        return emit, blank, phone

    def build(self, finals: Dict[int, float], num_labels: Optional[int]) -> Fsa:
        return Fsa(self.num_states, tuple(self.arcs), finals, start=0, num_labels=num_labels)


_START_ATTACH = (None, 0, None)


def compile_numerator(tokens: Sequence[str], lex: Lexicon, topo: TopologyConfig) -> Fsa:
    """Alignment graph of a full transcript; all arc weights are uniform.

    An empty transcript yields the blank-only acceptor. State numbering
    is append-only in u, so the graph for a longer transcript extends the
    one for each of its prefixes state-for-state.
    """
    phones = lex.phones_of_tokens(tokens)
    b = _TopologyBuilder(topo.blank_id)
    attach = _START_ATTACH
    for p in phones:
        attach = b.append_phone(attach, p)
    if attach is _START_ATTACH:
        finals = {0: 0.0}
    else:
        finals = {attach[0]: 0.0, attach[1]: 0.0}
    return b.build(finals, num_labels=len(lex.phone_table))


def compile_prefix_numerator(split: PrefixSplit, lex: Lexicon, topo: TopologyConfig) -> Fsa:
    """Alignment graph of a context followed by one word of the expansion set.

    The context phones form a single chain; each expansion word hangs off
    its end as a parallel branch, one branch per word (words sharing a
    pronunciation stay distinct branches and therefore contribute their
    mass once each).
    """
    if not split.expansion:
        raise DeadPrefixError(split.prefix)
    b = _TopologyBuilder(topo.blank_id)
    attach = _START_ATTACH
    for p in lex.phones_of_tokens(split.context):
        attach = b.append_phone(attach, p)
    finals: Dict[int, float] = {}
    for word in split.expansion:
        branch = attach
        for p in lex.phones_of(word):
            branch = b.append_phone(branch, p)
        finals[branch[0]] = 0.0
        finals[branch[1]] = 0.0
    if not finals:
        finals = {0: 0.0}
    return b.build(finals, num_labels=len(lex.phone_table))


def extend_numerator(parent: Fsa, phones: Sequence[int], topo: TopologyConfig) -> Fsa:
    """Append phones to a numerator graph built by :func:`compile_numerator`.

    The parent's states and arcs are reused verbatim (its final pair is
    always the last two states), so this is the cheap path for one-token
    prefix extensions.
    """
    b = _TopologyBuilder(topo.blank_id)
    b.arcs = list(parent.arcs)
    b.num_states = parent.num_states
    if parent.num_states == 1:
        attach = _START_ATTACH
    else:
        emit = parent.num_states - 2
        label = next(
            a.label for a in parent.arcs_from(emit) if a.src == a.dst == emit
        )
        attach = (emit, parent.num_states - 1, label)
    for p in phones:
        attach = b.append_phone(attach, p)
    if attach is _START_ATTACH:
        finals = {0: 0.0}
    else:
        finals = {attach[0]: 0.0, attach[1]: 0.0}
    return b.build(finals, num_labels=parent.num_labels)


def compile_denominator(
    lm: PhoneBigramLm, topo: TopologyConfig, phone_table: SymbolTable
) -> Fsa:
    """Phone-loop acceptor over a bigram LM with the CTC topology applied.

    One emitting state and one blank state per phone context; bigram
    scores sit on phone-entry arcs, blank arcs are free, and every state
    whose context gives sentence-end mass is final with that log
    probability. The graph is identical for all utterances.
    """
    phones = [(phone_table.id_of(p), p) for p in lm.phones]
    emit_state = {pid: 1 + 2 * i for i, (pid, _) in enumerate(phones)}
    blank_state = {pid: 2 + 2 * i for i, (pid, _) in enumerate(phones)}
    arcs: List[Arc] = [Arc(0, 0, topo.blank_id, 0.0)]
    finals: Dict[int, float] = {}
    end_from_start = lm.cond(BOS, EOS)
    if end_from_start != ZERO:
        finals[0] = end_from_start
    for pid, sym in phones:
        arcs.append(Arc(0, emit_state[pid], pid, lm.cond(BOS, sym)))
    for pid, sym in phones:
        se, sb = emit_state[pid], blank_state[pid]
        arcs.append(Arc(se, se, pid, 0.0))
        arcs.append(Arc(se, sb, topo.blank_id, 0.0))
        arcs.append(Arc(sb, sb, topo.blank_id, 0.0))
        end_w = lm.cond(sym, EOS)
        if end_w != ZERO:
            finals[se] = end_w
            finals[sb] = end_w
        for nid, nsym in phones:
            w = lm.cond(sym, nsym)
            arcs.append(Arc(sb, emit_state[nid], nid, w))
            if nid != pid:
                arcs.append(Arc(se, emit_state[nid], nid, w))
    return Fsa(1 + 2 * len(phones), tuple(arcs), finals, start=0, num_labels=len(phone_table))


def min_alignment_frames(tokens: Sequence[str], lex: Lexicon) -> int:
    """Shortest alignment length: one frame per phone plus one mandatory
    blank per identical adjacent phone pair."""
    phones = lex.phones_of_tokens(tokens)
    repeats = sum(1 for a, b in zip(phones, phones[1:]) if a == b)
    return len(phones) + repeats
