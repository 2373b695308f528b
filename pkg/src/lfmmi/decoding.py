"""Beam search decoding with MMI score fusion, plus N-best rescoring.

Label-synchronous search expands token prefixes and fuses the first-order
difference of the MMI prefix score into each expansion; time-synchronous
search expands hypotheses frame by frame (token or blank) and carries the
MMI alignment score of the exact (tokens, frames) pair. Rescoring
re-ranks a finished N-best list by interpolating the recorded base
posterior with the numerator-graph likelihood, the shared denominator
being constant across hypotheses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Tuple

from .base_scorers import EOS_TOKEN, LabelSyncScorer, TimeSyncScorer
from .emissions import Emissions
from .errors import ParseError
from .fsa import Fsa
from .forward import forward_trellis, frame_scores_from_trellis
from .graphs import TopologyConfig, compile_numerator, make_split
from .lexicon import BLANK_ID, Lexicon
from .scorer import (
    DEFAULT_MMI_FLOOR,
    PrefixScoreCache,
    extend_prefix_cache,
    guarded_score_delta,
    mmi_prefix_delta,
    mmi_prefix_score,
    precompute_denominator,
    root_prefix_cache,
)
from .semiring import ZERO, logadd

WORD_SEP = "_"


@dataclass(frozen=True)
class DecodeConfig:
    """Search and fusion weights; defaults follow the reference setup
    (beam 10, prefix/alignment/rescoring weights 0.3/0.2/0.2)."""

    beam: int = 10
    mmi_prefix_weight: float = 0.3
    mmi_align_weight: float = 0.2
    rescore_weight: float = 0.2  # weight of the MMI term in rescoring; lambda = 1 - this
    lm_weight: float = 0.0
    max_output_per_frame: int = 3
    mmi_floor: float = DEFAULT_MMI_FLOOR
    length_normalize: bool = False
    lookahead: bool = False
    word_sep: str = WORD_SEP
    max_len: Optional[int] = None

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        for name in ("mmi_prefix_weight", "mmi_align_weight", "rescore_weight", "lm_weight"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.max_output_per_frame < 1:
            raise ValueError("max_output_per_frame must be >= 1")

    @property
    def rescore_lambda(self) -> float:
        return 1.0 - self.rescore_weight


@dataclass(frozen=True)
class NBestEntry:
    tokens: Tuple[str, ...]
    fused: float
    base: float
    mmi: float
    lm: float
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class NBestList:
    utt_id: str
    entries: Tuple[NBestEntry, ...]


def write_nbest_jsonl(lists: Iterable[NBestList], path) -> None:
    with open(path, "w") as fh:
        for nb in lists:
            fh.write(nbest_to_json(nb) + "\n")


def nbest_to_json(nb: NBestList) -> str:
    hyps = []
    for h in nb.entries:
        obj = {
            "tokens": list(h.tokens),
            "fused": h.fused,
            "base": h.base,
            "mmi": h.mmi,
            "lm": h.lm,
        }
        for flag in h.flags:
            obj[flag] = True
        hyps.append(obj)
    return json.dumps({"id": nb.utt_id, "hyps": hyps})


def read_nbest_jsonl(path) -> List[NBestList]:
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries = tuple(
                    NBestEntry(
                        tokens=tuple(h["tokens"]),
                        fused=float(h["fused"]),
                        base=float(h["base"]),
                        mmi=float(h["mmi"]),
                        lm=float(h.get("lm", 0.0)),
                        flags=tuple(
                            k for k in ("unfinished", "unalignable") if h.get(k)
                        ),
                    )
                    for h in obj["hyps"]
                )
                out.append(NBestList(utt_id=str(obj["id"]), entries=entries))
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad n-best line {ln} in {path}: {exc}") from None
    return out


@dataclass(frozen=True)
class AedHypothesis:
    """Label-synchronous partial hypothesis with per-source score parts.

    ``mmi`` is the accumulated fused MMI component (sum of guarded prefix
    score deltas); ``mmi_raw`` is the current prefix score itself, kept
    separately because it can be ZERO while the component stays floored.
    """

    tokens: Tuple[str, ...]
    base: float
    lm: float
    mmi: float
    mmi_raw: float
    cache: Optional[PrefixScoreCache]
    context: Tuple[str, ...] = ()
    prefix: str = ""
    finished: bool = False
    flags: Tuple[str, ...] = ()

    def fused(self, cfg: DecodeConfig) -> float:
        return self.base + cfg.lm_weight * self.lm + cfg.mmi_prefix_weight * self.mmi


def _rank_key(cfg: DecodeConfig):
    def key(h: AedHypothesis):
        score = h.fused(cfg)
        if cfg.length_normalize:
            score = score / (len(h.tokens) + 1)
        return (-score, h.tokens)

    return key


def aed_beam_search(
    e_tokens: Optional[Emissions],
    e_phones: Emissions,
    base: LabelSyncScorer,
    lm: Optional[LabelSyncScorer],
    lex: Lexicon,
    topo: TopologyConfig,
    g_den: Fsa,
    cfg: DecodeConfig,
    utt_id: str = "",
) -> NBestList:
    """Label-synchronous beam search over token prefixes.

    Each expansion adds the base scorer's log-probability, the weighted
    token-LM log-probability and the weighted MMI prefix-score delta.
    Hypotheses that emit end-of-sentence move to the finished set; the
    top finished hypotheses are returned with the base posterior recorded
    free of MMI terms. With ``cfg.lookahead`` tokens are characters, the
    designated separator closes words, and prefix scores sum over all
    lexicon words compatible with the dangling spelling.
    """
    mmi_on = cfg.mmi_prefix_weight != 0.0
    den = precompute_denominator(e_phones, g_den) if mmi_on else None
    root_cache = root_prefix_cache(e_phones, lex, topo, den) if mmi_on else None
    max_len = cfg.max_len
    if max_len is None:
        max_len = e_tokens.num_frames if e_tokens is not None else e_phones.num_frames
    root = AedHypothesis(
        tokens=(), base=0.0, lm=0.0, mmi=0.0, mmi_raw=0.0, cache=root_cache
    )
    beam: List[AedHypothesis] = [root]
    finished: List[AedHypothesis] = []
    for step in range(max_len + 1):
        if not beam:
            break
        expanding = step < max_len
        candidates: List[AedHypothesis] = []
        for hyp in beam:
            dist = base.score_next(hyp.tokens)
            lm_dist = lm.score_next(hyp.tokens) if lm is not None else None
            eos = dist.get(EOS_TOKEN, ZERO)
            if eos != ZERO and _may_finish(hyp, lex, cfg):
                lw = lm_dist.get(EOS_TOKEN, ZERO) if lm_dist is not None else 0.0
                finished.append(_finish(hyp, eos, lw, e_phones, lex, topo, den, cfg, mmi_on))
            if not expanding:
                continue
            for sym in base.vocab:
                b = dist.get(sym, ZERO)
                if b == ZERO:
                    continue
                lw = lm_dist.get(sym, ZERO) if lm_dist is not None else 0.0
                if cfg.lookahead:
                    child = _expand_lookahead(
                        hyp, sym, b, lw, e_phones, lex, topo, den, cfg, mmi_on
                    )
                    if child is None:
                        continue
                else:
                    child = _expand_word(hyp, sym, b, lw, e_phones, lex, topo, den, cfg, mmi_on)
                candidates.append(child)
        if not expanding:
            break
        candidates.sort(key=_rank_key(cfg))
        beam = candidates[: cfg.beam]
    finished.sort(key=_rank_key(cfg))
    flags: Tuple[str, ...] = ()
    if not finished:
        flags = ("unfinished",)
        finished = sorted(beam, key=_rank_key(cfg))
    entries = tuple(
        NBestEntry(
            tokens=h.tokens,
            fused=h.fused(cfg),
            base=h.base,
            mmi=h.mmi,
            lm=h.lm,
            flags=h.flags + flags,
        )
        for h in finished[: cfg.beam]
    )
    return NBestList(utt_id=utt_id, entries=entries)


def _expand_word(hyp, sym, b, lw, e_phones, lex, topo, den, cfg, mmi_on) -> AedHypothesis:
    cache = hyp.cache
    mmi = hyp.mmi
    raw = hyp.mmi_raw
    if mmi_on:
        cache = extend_prefix_cache(hyp.cache, sym, e_phones, lex, topo, den)
        mmi = hyp.mmi + mmi_prefix_delta(hyp.cache, cache, floor=cfg.mmi_floor)
        raw = cache.score
    return replace(
        hyp, tokens=hyp.tokens + (sym,), base=hyp.base + b, lm=hyp.lm + lw,
        mmi=mmi, mmi_raw=raw, cache=cache,
    )


def _expand_lookahead(
    hyp, sym, b, lw, e_phones, lex, topo, den, cfg, mmi_on
) -> Optional[AedHypothesis]:
    if sym == cfg.word_sep:
        if not hyp.prefix or hyp.prefix not in lex:
            return None
        context = hyp.context + (hyp.prefix,)
        prefix = ""
        split = make_split(hyp.context, hyp.prefix, lex, complete=True)
    else:
        prefix = hyp.prefix + sym
        if not lex.words_with_prefix(prefix):
            return None  # dead spelling, no lexicon word can complete it
        context = hyp.context
        split = make_split(context, prefix, lex)
    mmi, raw, cache = hyp.mmi, hyp.mmi_raw, hyp.cache
    if mmi_on:
        cache = mmi_prefix_score(e_phones, (), lex, topo, den, split=split)
        mmi = hyp.mmi + guarded_score_delta(hyp.mmi_raw, cache.score, floor=cfg.mmi_floor)
        raw = cache.score
    return replace(
        hyp, tokens=hyp.tokens + (sym,), base=hyp.base + b, lm=hyp.lm + lw,
        mmi=mmi, mmi_raw=raw, cache=cache, context=context, prefix=prefix,
    )


def _may_finish(hyp: AedHypothesis, lex: Lexicon, cfg: DecodeConfig) -> bool:
    if not cfg.lookahead:
        return True
    return hyp.prefix == "" or hyp.prefix in lex


def _finish(hyp, eos, lw, e_phones, lex, topo, den, cfg, mmi_on) -> AedHypothesis:
    mmi, raw = hyp.mmi, hyp.mmi_raw
    if cfg.lookahead and hyp.prefix and mmi_on:
        # close the dangling word: drop the mass of its strict extensions
        split = make_split(hyp.context, hyp.prefix, lex, complete=True)
        cache = mmi_prefix_score(e_phones, (), lex, topo, den, split=split)
        mmi = hyp.mmi + guarded_score_delta(hyp.mmi_raw, cache.score, floor=cfg.mmi_floor)
        raw = cache.score
    return replace(hyp, base=hyp.base + eos, lm=hyp.lm + lw, mmi=mmi, mmi_raw=raw, finished=True)


@dataclass(frozen=True)
class NtHypothesis:
    """Time-synchronous hypothesis: tokens aligned to the first t frames.

    ``mmi_raw`` is the alignment score of exactly (tokens, t); ``mmi`` is
    the floored component entering the fused score. ``state`` is the base
    scorer's decoder state handle.
    """

    tokens: Tuple[str, ...]
    t: int
    base: float
    mmi_raw: float
    mmi: float
    cache: Optional[PrefixScoreCache]
    state: object = None

    def fused(self, cfg: DecodeConfig) -> float:
        return self.base + cfg.mmi_align_weight * self.mmi


def merge_nt_hypotheses(hyps: Iterable[NtHypothesis]) -> List[NtHypothesis]:
    """Merge hypotheses with identical token sequences at the same frame.

    Base components combine by log-sum-exp over alignment paths; the MMI
    component already sums over all alignments of the pair (tokens, t),
    so it is taken once, never added.
    """
    merged: Dict[Tuple[Tuple[str, ...], int], NtHypothesis] = {}
    for h in hyps:
        key = (h.tokens, h.t)
        prev = merged.get(key)
        if prev is None:
            merged[key] = h
        else:
            merged[key] = replace(prev, base=logadd(prev.base, h.base))
    return list(merged.values())


def _nt_rank_key(cfg: DecodeConfig):
    return lambda h: (-h.fused(cfg), h.tokens)


def _nt_alignment_component(cache, t, den, floor, tokens) -> Tuple[float, float]:
    if not tokens and t == 0:
        return 0.0, 0.0
    raw = ZERO
    if cache.frame_finals[t] != ZERO:
        raw = float(cache.frame_finals[t]) - float(den.values[t])
    return raw, (floor if raw == ZERO else raw)


def nt_alsd_beam_search(
    e_phones: Emissions,
    base: TimeSyncScorer,
    lex: Lexicon,
    topo: TopologyConfig,
    g_den: Fsa,
    cfg: DecodeConfig,
    utt_id: str = "",
) -> NBestList:
    """Frame-synchronous transducer-style search with MMI alignment scores.

    Per frame, hypotheses expand through up to ``cfg.max_output_per_frame``
    token generations (frame index fixed) and then a blank step (frame
    index advances). After every step, hypotheses with identical token
    sequences at the same frame are merged. Token ids outside the blank
    column of the base scorer's alphabet must match the decode vocabulary.
    """
    T = e_phones.num_frames
    if base.num_frames != T:
        raise ValueError(
            f"base scorer covers {base.num_frames} frames, emissions have {T}"
        )
    mmi_on = cfg.mmi_align_weight != 0.0
    den = precompute_denominator(e_phones, g_den) if mmi_on else None
    root_cache = root_prefix_cache(e_phones, lex, topo, den) if mmi_on else None
    root = NtHypothesis(
        tokens=(), t=0, base=0.0, mmi_raw=0.0, mmi=0.0,
        cache=root_cache, state=base.initial_state(),
    )
    hyps = [root]
    vocab = base.vocab
    for t in range(T):
        pool: Dict[Tuple[str, ...], NtHypothesis] = {h.tokens: h for h in hyps}
        gen = hyps
        for _ in range(cfg.max_output_per_frame):
            children: List[NtHypothesis] = []
            for h in gen:
                row, new_state = base.score_joint(t, len(h.tokens), h.state)
                for i, sym in enumerate(vocab):
                    b = float(row[i + 2])
                    if b == ZERO:
                        continue
                    tokens = h.tokens + (sym,)
                    cache = h.cache
                    raw = comp = 0.0
                    if mmi_on:
                        cache = extend_prefix_cache(h.cache, sym, e_phones, lex, topo, den)
                        raw, comp = _nt_alignment_component(cache, t, den, cfg.mmi_floor, tokens)
                    children.append(
                        NtHypothesis(
                            tokens=tokens, t=t, base=h.base + b,
                            mmi_raw=raw, mmi=comp, cache=cache, state=new_state,
                        )
                    )
            gen = merge_nt_hypotheses(children)
            gen.sort(key=_nt_rank_key(cfg))
            gen = gen[: cfg.beam]
            if not gen:
                break
            for h in gen:
                prev = pool.get(h.tokens)
                pool[h.tokens] = (
                    h if prev is None else replace(prev, base=logadd(prev.base, h.base))
                )
        stay = sorted(pool.values(), key=_nt_rank_key(cfg))[: cfg.beam]
        advanced: List[NtHypothesis] = []
        for h in stay:
            row, _ = base.score_joint(t, len(h.tokens), h.state)
            b = float(row[BLANK_ID])
            if b == ZERO:
                continue
            raw = comp = 0.0
            if mmi_on:
                raw, comp = _nt_alignment_component(
                    h.cache, t + 1, den, cfg.mmi_floor, h.tokens
                )
            advanced.append(replace(h, t=t + 1, base=h.base + b, mmi_raw=raw, mmi=comp))
        hyps = merge_nt_hypotheses(advanced)
        hyps.sort(key=_nt_rank_key(cfg))
        hyps = hyps[: cfg.beam]
    entries = tuple(
        NBestEntry(
            tokens=h.tokens, fused=h.fused(cfg), base=h.base, mmi=h.mmi, lm=0.0
        )
        for h in hyps
    )
    return NBestList(utt_id=utt_id, entries=entries)


def rescore_nbest(
    nbest: NBestList,
    e_phones: Emissions,
    lex: Lexicon,
    topo: TopologyConfig,
    cfg: DecodeConfig,
    lam: Optional[float] = None,
) -> NBestList:
    """Re-rank by interpolating base posteriors with numerator likelihoods.

    The denominator likelihood is shared by every hypothesis of the
    utterance, so only the numerator score enters; an unalignable
    hypothesis takes the configured floor and is flagged. Ties break by
    base score, then lexicographic tokens.
    """
    if lam is None:
        lam = cfg.rescore_lambda
    T = e_phones.num_frames
    rescored = []
    for entry in nbest.entries:
        g_num = compile_numerator(entry.tokens, lex, topo)
        trellis = forward_trellis(g_num, e_phones)
        num = float(frame_scores_from_trellis(g_num, trellis).values[T])
        flags = tuple(f for f in entry.flags if f != "unalignable")
        if num == ZERO:
            num = cfg.mmi_floor
            flags = flags + ("unalignable",)
        fused = lam * entry.base + (1.0 - lam) * num
        rescored.append(
            NBestEntry(
                tokens=entry.tokens, fused=fused, base=entry.base,
                mmi=num, lm=entry.lm, flags=flags,
            )
        )
    rescored.sort(key=lambda h: (-h.fused, -h.base, h.tokens))
    return NBestList(utt_id=nbest.utt_id, entries=tuple(rescored))
