"""Synthetic desk-scale corpora with known ground truth.

Words are spelled with one letter per phone, so spelling-prefix overlap
(which drives the look-ahead machinery) coincides with phone-prefix
overlap (which drives acoustic confusability). Emissions are produced by
softmax-corrupting the one-hot ground-truth alignment at a configurable
temperature; phone-level and token-level matrices come from the same
alignment so every scorer sees a consistent acoustic story.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .emissions import Emissions, save_emissions
from .errors import ToolkitError
from .graphs import TopologyConfig
from .lexicon import (
    BLANK_ID,
    Lexicon,
    SymbolTable,
    load_lexicon,
    load_symbol_table,
    save_lexicon,
    save_symbol_table,
)


@dataclass(frozen=True)
class CorpusSpec:
    """Reproducible corpus description; identical spec + seed, identical corpus."""

    num_words: int = 6
    phones_per_word: Tuple[int, int] = (2, 3)
    utt_len: Tuple[int, int] = (2, 4)
    num_utterances: int = 20
    tau: float = 0.4
    confusion_overlap: int = 0
    num_phones: int = 5
    seed: int = 0
    duration_mean: float = 2.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("noise temperature must be >= 0")
        if not (1 <= self.phones_per_word[0] <= self.phones_per_word[1]):
            raise ValueError("bad phones_per_word range")
        if not (1 <= self.utt_len[0] <= self.utt_len[1]):
            raise ValueError("bad utterance length range")
        if not (1 <= self.num_phones <= 26):
            raise ValueError("num_phones must be in 1..26")


@dataclass(frozen=True)
class AlignedUtterance:
    """Ground truth for one utterance: tokens, frame alignment, emissions."""

    tokens: Tuple[str, ...]
    alignment: Tuple[int, ...]  # phone id or blank per frame
    phone_emissions: Emissions
    token_emissions: Emissions


def _collapse(labels: Sequence[int]) -> Tuple[int, ...]:
    out: List[int] = []
    for lab in labels:
        if out and out[-1] == lab:
            continue
        out.append(lab)
    return tuple(l for l in out if l != BLANK_ID)


def generate_corpus(spec: CorpusSpec) -> Tuple[Lexicon, List[List[str]]]:
    """Random lexicon with controlled prefix overlap plus i.i.d. transcripts."""
    rng = np.random.default_rng(spec.seed)
    letters = string.ascii_lowercase[: spec.num_phones]
    pmin, pmax = spec.phones_per_word
    capacity = sum(spec.num_phones ** L for L in range(pmin, pmax + 1))
    if spec.num_words > capacity:
        raise ToolkitError(
            f"cannot draw {spec.num_words} distinct words of length {pmin}..{pmax} "
            f"over {spec.num_phones} phones"
        )
    words: List[Tuple[int, ...]] = []
    seen = set()

    def admit(seq: Tuple[int, ...]) -> bool:
        if seq in seen or not (pmin <= len(seq) <= pmax):
            return False
        seen.add(seq)
        words.append(seq)
        return True

    def draw(length: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in rng.integers(0, spec.num_phones, size=length))

    if spec.confusion_overlap > 0:
        # one guaranteed pair sharing `overlap` leading phones; when the
        # range allows it the short member is a spelling prefix of the long one
        k = min(spec.confusion_overlap, pmax)
        head = draw(max(k, pmin))
        admit(head)
        for _ in range(200):
            tail_len = int(rng.integers(1, pmax - k + 1)) if pmax > k else 0
            if len(head) + tail_len <= pmax and tail_len > 0:
                cand = head + draw(tail_len)
            else:
                cand = head[:k] + draw(max(pmin - k, 1))
            if admit(cand):
                break
    attempts = 0
    while len(words) < spec.num_words:
        attempts += 1
        if attempts > 10000:
            raise ToolkitError("could not populate lexicon; spec too tight")
        admit(draw(int(rng.integers(pmin, pmax + 1))))
    table = SymbolTable.from_phones(tuple(letters))
    entries: Dict[str, Tuple[int, ...]] = {}
    for seq in words:
        spelling = "".join(letters[p] for p in seq)
        entries[spelling] = tuple(p + 2 for p in seq)
    lex = Lexicon(entries, table)
    vocab = lex.words
    lo, hi = spec.utt_len
    transcripts = [
        [vocab[int(i)] for i in rng.integers(0, len(vocab), size=int(rng.integers(lo, hi + 1)))]
        for _ in range(spec.num_utterances)
    ]
    return lex, transcripts


def _soft_rows(rng, true_ids: Sequence[int], alphabet_size: int, tau: float) -> Emissions:
    inv = 1.0 / max(tau, 1e-3)
    logits = rng.normal(size=(len(true_ids), alphabet_size)) * tau
    for t, lab in enumerate(true_ids):
        logits[t, lab] += inv
    logits[:, 0] = -np.inf
    m = np.max(logits, axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return Emissions(logits - lse[:, None])


def synthesize_emissions(
    tokens: Sequence[str],
    lex: Lexicon,
    topo: TopologyConfig,
    tau: float,
    seed: int,
    duration_mean: float = 2.0,
) -> AlignedUtterance:
    """Sample a valid alignment with geometric durations, then noisy rows.

    Blanks are optional at every boundary but forced where the collapse
    rules need them: between identical adjacent phones, and between
    repeated word tokens.
    """
    rng = np.random.default_rng(seed)
    tokens = tuple(tokens)
    per_word = [lex.phones_of(w) for w in tokens]
    word_of_token = {w: i + 2 for i, w in enumerate(sorted(set(tokens)))}
    p_dur = 1.0 / max(duration_mean, 1.0)

    def blank_run(mandatory: bool) -> int:
        n = int(rng.geometric(0.5)) - 1
        return max(n, 1) if mandatory else n

    phone_frames: List[int] = []
    token_frames: List[int] = []
    prev_phone = None
    prev_word_idx = None
    flat: List[Tuple[int, int]] = []  # (phone id, word index)
    for wi, phones in enumerate(per_word):
        for p in phones:
            flat.append((p, wi))
    for idx, (phone, wi) in enumerate(flat):
        word_boundary = prev_word_idx is not None and wi != prev_word_idx
        mandatory = prev_phone == phone or (
            word_boundary and tokens[wi] == tokens[prev_word_idx]
        )
        gap = blank_run(mandatory) if idx > 0 else blank_run(False)
        within_word = idx > 0 and not word_boundary
        for _ in range(gap):
            phone_frames.append(BLANK_ID)
            # blanks inside a word keep the token active so token-level
            # collapse still yields one token per word
            token_frames.append(_token_id(tokens, wi, word_of_token) if within_word else BLANK_ID)
        dur = int(rng.geometric(p_dur))
        for _ in range(dur):
            phone_frames.append(phone)
            token_frames.append(_token_id(tokens, wi, word_of_token))
        prev_phone, prev_word_idx = phone, wi
    for _ in range(blank_run(False)):
        phone_frames.append(BLANK_ID)
        token_frames.append(BLANK_ID)
    if not phone_frames:  # empty transcript: at least one blank frame
        phone_frames = [BLANK_ID]
        token_frames = [BLANK_ID]
    expected = lex.phones_of_tokens(tokens)
    if _collapse(phone_frames) != expected:
        raise AssertionError("sampled alignment does not collapse to the transcript")
    token_table = _token_table(tokens)
    phone_e = _soft_rows(rng, phone_frames, len(lex.phone_table), tau)
    token_e = _soft_rows(rng, token_frames, 2 + len(word_of_token), tau)
    return AlignedUtterance(
        tokens=tokens,
        alignment=tuple(phone_frames),
        phone_emissions=phone_e,
        token_emissions=Emissions(token_e.logp, symbols=token_table),
    )


def _token_id(tokens, wi, word_of_token) -> int:
    return word_of_token[tokens[wi]]


def _token_table(tokens: Sequence[str]) -> Tuple[str, ...]:
    return ("<eps>", "<blk>") + tuple(sorted(set(tokens)))


def token_emissions_for_vocab(
    utt: AlignedUtterance, vocab: Sequence[str]
) -> Emissions:
    """Re-index the utterance's token emissions onto a full decode vocabulary.

    Symbols absent from the utterance get the mass the sampler put in the
    noise floor: their columns are filled at the utterance's minimum
    observed log-probability, then rows are renormalized.
    """
    old_syms = utt.token_emissions.symbols
    logp = utt.token_emissions.logp
    T = logp.shape[0]
    out = np.full((T, 2 + len(vocab)), np.min(logp[:, 1:]))
    out[:, 0] = -np.inf
    out[:, 1] = logp[:, 1]
    col = {s: i + 2 for i, s in enumerate(vocab)}
    for j, sym in enumerate(old_syms[2:], start=2):
        out[:, col[sym]] = logp[:, j]
    m = np.max(out, axis=1)
    lse = m + np.log(np.exp(out - m[:, None]).sum(axis=1))
    return Emissions(out - lse[:, None], symbols=("<eps>", "<blk>") + tuple(vocab))


def repetitive_utterance(word: str, repeats: int) -> List[str]:
    """Stress transcript of one token repeated; prefix scoring is known to
    struggle to separate such hypotheses once probabilities accumulate
    along the time axis."""
    return [word] * repeats


@dataclass(frozen=True)
class ErrorRateReport:
    substitutions: int
    insertions: int
    deletions: int
    ref_tokens: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def token_error_rate(self) -> float:
        if self.ref_tokens == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_tokens


def evaluate_error_rate(
    hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]
) -> ErrorRateReport:
    """Aggregate minimal-edit-distance error counts over paired utterances."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    subs = ins = dels = ref_total = 0
    for hyp, ref in zip(hyps, refs):
        s, i, d = _edit_counts(list(hyp), list(ref))
        subs, ins, dels = subs + s, ins + i, dels + d
        ref_total += len(ref)
    return ErrorRateReport(subs, ins, dels, ref_total)


def _edit_counts(hyp: List[str], ref: List[str]) -> Tuple[int, int, int]:
    n, m = len(hyp), len(ref)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dist[i, j] = min(
                dist[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]),
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
            )
    i, j = n, m
    subs = ins = dels = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1]):
            subs += hyp[i - 1] != ref[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            ins += 1
            i -= 1
        else:
            dels += 1
            j -= 1
    return subs, ins, dels


def write_corpus_dir(
    out_dir,
    lex: Lexicon,
    train: Sequence[Sequence[str]],
    test_utts: Sequence[Tuple[str, AlignedUtterance]],
) -> None:
    """Token emission files are written over the full lexicon vocabulary
    (column order = sorted words) so any utterance file plugs straight
    into a decoder built from lexicon.txt."""
    out = Path(out_dir)
    (out / "emissions").mkdir(parents=True, exist_ok=True)
    save_symbol_table(lex.phone_table, out / "phones.txt")
    save_lexicon(lex, out / "lexicon.txt")
    with open(out / "train.txt", "w") as fh:
        for t in train:
            fh.write(" ".join(t) + "\n")
    with open(out / "test.txt", "w") as fh:
        for _, utt in test_utts:
            fh.write(" ".join(utt.tokens) + "\n")
    with open(out / "refs.txt", "w") as fh:
        for utt_id, utt in test_utts:
            fh.write(utt_id + " " + " ".join(utt.tokens) + "\n")
    for utt_id, utt in test_utts:
        save_emissions(utt.phone_emissions, out / "emissions" / f"{utt_id}.mat")
        save_emissions(
            token_emissions_for_vocab(utt, lex.words),
            out / "emissions" / f"{utt_id}.tok.mat",
        )


def read_transcripts(path) -> List[List[str]]:
    with open(path) as fh:
        return [line.split() for line in fh if line.strip()]


def read_refs(path) -> List[Tuple[str, List[str]]]:
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append((parts[0], parts[1:]))
    return out


def load_corpus_dir(corpus_dir):
    """(lexicon, train transcripts, refs) from a corpus directory layout."""
    corpus_dir = Path(corpus_dir)
    table = load_symbol_table(corpus_dir / "phones.txt")
    lex = load_lexicon(corpus_dir / "lexicon.txt", table)
    train = read_transcripts(corpus_dir / "train.txt")
    refs = read_refs(corpus_dir / "refs.txt")
    return lex, train, refs
