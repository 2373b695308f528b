"""Pluggable base scorers standing in for neural models during decoding.

Label-synchronous scorers expose ``score_next(tokens) -> {symbol: logp}``
over the next token plus end-of-sentence; time-synchronous scorers expose
``score_joint(t, u, state) -> (logprob row, state)`` over tokens plus
blank. Returned distributions are exactly normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Protocol, Sequence, Tuple

import numpy as np

from .emissions import Emissions
from .errors import ParseError
from .lexicon import BLANK_ID
from .semiring import ZERO, logadd, logsumexp

EOS_TOKEN = "<eos>"


class LabelSyncScorer(Protocol):
    vocab: Tuple[str, ...]

    def score_next(self, tokens: Tuple[str, ...]) -> Dict[str, float]:
        """Log distribution over vocab plus EOS_TOKEN given the prefix."""
        ...


class TimeSyncScorer(Protocol):
    vocab: Tuple[str, ...]
    num_frames: int

    def initial_state(self): ...

    def score_joint(self, t: int, u: int, state) -> Tuple[np.ndarray, object]:
        """Log distribution over the emission alphabet (blank at index 1)."""
        ...


class CtcPrefixScorer:
    """Label-synchronous scorer from token-level emissions.

    ``score_next`` returns the log ratio of prefix probabilities: the mass
    of full-length alignment paths whose collapsed output extends the
    prefix by each token, relative to the mass of paths extending the
    prefix at all. End-of-sentence receives the mass of paths whose
    output equals the prefix exactly, so the distribution sums to one.
    """

    def __init__(self, e_tokens: Emissions, token_symbols: Sequence[str]):
        if len(token_symbols) != e_tokens.alphabet_size - 2:
            raise ValueError("token symbols must cover emission ids 2..V-1")
        self.emissions = e_tokens
        self.vocab = tuple(token_symbols)
        self._id_of = {s: i + 2 for i, s in enumerate(token_symbols)}
        T = e_tokens.num_frames
        pb = np.empty(T + 1)
        pb[0] = 0.0
        np.cumsum(e_tokens.logp[:, BLANK_ID], out=pb[1:])
        pnb = np.full(T + 1, ZERO)
        # cache: prefix -> (pb, pnb, phi) with phi the prefix mass
        self._cache: Dict[Tuple[str, ...], Tuple[np.ndarray, np.ndarray, float]] = {
            (): (pb, pnb, 0.0)
        }

    def _tables(self, tokens: Tuple[str, ...]) -> Tuple[np.ndarray, np.ndarray, float]:
        hit = self._cache.get(tokens)
        if hit is not None:
            return hit
        pb_par, pnb_par, _ = self._tables(tokens[:-1])
        cid = self._id_of[tokens[-1]]
        repeat = len(tokens) >= 2 and tokens[-1] == tokens[-2]
        T = self.emissions.num_frames
        logp = self.emissions.logp
        pb = np.full(T + 1, ZERO)
        pnb = np.full(T + 1, ZERO)
        phi_terms = []
        for t in range(1, T + 1):
            ext = pb_par[t - 1] if repeat else logadd(float(pb_par[t - 1]), float(pnb_par[t - 1]))
            emit = float(logp[t - 1, cid])
            pnb[t] = emit + logadd(float(pnb[t - 1]), float(ext))
            pb[t] = float(logp[t - 1, BLANK_ID]) + logadd(float(pb[t - 1]), float(pnb[t - 1]))
            if ext != ZERO:
                phi_terms.append(emit + float(ext))
        entry = (pb, pnb, logsumexp(phi_terms))
        self._cache[tokens] = entry
        return entry

    def score_next(self, tokens: Tuple[str, ...]) -> Dict[str, float]:
        tokens = tuple(tokens)
        pb, pnb, phi = self._tables(tokens)
        if phi == ZERO:
            # prefix impossible: dead uniform over continuations
            flat = -math.log(len(self.vocab) + 1)
            out = {s: flat for s in self.vocab}
            out[EOS_TOKEN] = flat
            return out
        out = {}
        for sym in self.vocab:
            child_phi = self._tables(tokens + (sym,))[2]
            out[sym] = child_phi - phi if child_phi != ZERO else ZERO
        eq = logadd(float(pb[-1]), float(pnb[-1]))
        out[EOS_TOKEN] = eq - phi if eq != ZERO else ZERO
        return out


class TokenNgramScorer:
    """Add-k n-gram over decoder tokens; acoustics-free."""

    def __init__(
        self,
        transcripts: Iterable[Sequence[str]],
        order: int = 2,
        k: float = 1.0,
        vocab: Optional[Sequence[str]] = None,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if k <= 0:
            raise ValueError("smoothing constant must be > 0")
        self.order = order
        self.k = k
        transcripts = [list(t) for t in transcripts]
        seen = sorted({tok for t in transcripts for tok in t})
        self.vocab = tuple(vocab) if vocab is not None else tuple(seen)
        self._counts: Dict[Tuple[str, ...], Dict[str, float]] = {}
        bos = ("<s>",) * (order - 1)
        for t in transcripts:
            seq = list(bos) + list(t) + [EOS_TOKEN]
            for i in range(order - 1, len(seq)):
                ctx = tuple(seq[i - order + 1 : i])
                d = self._counts.setdefault(ctx, {})
                d[seq[i]] = d.get(seq[i], 0.0) + 1.0

    def score_next(self, tokens: Tuple[str, ...]) -> Dict[str, float]:
        if self.order > 1:
            padded = ("<s>",) * (self.order - 1) + tuple(tokens)
            ctx = padded[-(self.order - 1):]
        else:
            ctx = ()
        counts = self._counts.get(ctx, {})
        events = len(self.vocab) + 1
        total = sum(counts.values()) + self.k * events
        out = {
            s: math.log((counts.get(s, 0.0) + self.k) / total) for s in self.vocab
        }
        out[EOS_TOKEN] = math.log((counts.get(EOS_TOKEN, 0.0) + self.k) / total)
        return out


@dataclass(frozen=True)
class JointTableScorer:
    """Time-synchronous scorer reading a (T, U+1, V) table of log-probs.

    Row (t, u) is the joint output after t frames and u emitted tokens;
    requests beyond the table's u extent clamp to the last row, so a
    plain token emission matrix broadcast to shape (T, 1, V) behaves like
    a CTC-style u-independent transducer.
    """

    table: np.ndarray
    token_symbols: Tuple[str, ...]

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        object.__setattr__(self, "table", table)
        if table.ndim != 3:
            raise ParseError("joint table must have shape (T, U+1, V)")
        if table.shape[2] != len(self.token_symbols) + 2:
            raise ParseError("joint table width must match token symbols plus eps/blank")
        flat = table.reshape(-1, table.shape[2])
        m = np.max(flat, axis=1)
        norms = m + np.log(np.exp(flat - m[:, None]).sum(axis=1))
        if np.max(np.abs(norms)) >= 1e-6:
            raise ParseError("joint table rows not normalized")

    @property
    def vocab(self) -> Tuple[str, ...]:
        return self.token_symbols

    @property
    def num_frames(self) -> int:
        return self.table.shape[0]

    def initial_state(self):
        return None

    def score_joint(self, t: int, u: int, state) -> Tuple[np.ndarray, object]:
        return self.table[t, min(u, self.table.shape[1] - 1)], None


def joint_table_from_token_emissions(e_tokens: Emissions, token_symbols: Sequence[str]) -> JointTableScorer:
    return JointTableScorer(e_tokens.logp[:, None, :], tuple(token_symbols))


def save_joint_table(scorer: JointTableScorer, path) -> None:
    """Header ``T U+1 V`` then one row of V log-probs per (t, u)."""
    t, u1, v = scorer.table.shape
    with open(path, "w") as fh:
        fh.write(f"{t} {u1} {v}\n")
        for row in scorer.table.reshape(-1, v):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_joint_table(path, token_symbols: Sequence[str]) -> JointTableScorer:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParseError(f"bad joint table header in {path}")
        try:
            t, u1, v = (int(x) for x in header)
            rows = [[float(x) for x in fh.readline().split()] for _ in range(t * u1)]
        except ValueError as exc:
            raise ParseError(f"bad joint table data in {path}: {exc}") from None
    for row in rows:
        if len(row) != v:
            raise ParseError(f"joint table row width mismatch in {path}")
    table = np.array(rows).reshape(t, u1, v)
    return JointTableScorer(table, tuple(token_symbols))
