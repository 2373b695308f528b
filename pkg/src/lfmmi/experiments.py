"""Seeded decoding experiments measuring the directional effect of MMI
fusion: baseline beam search, prefix-score-fused search at the default
weights, and rescoring of the baseline N-best list, each evaluated by
token error rate over a synthetic test set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Tuple

from .base_scorers import CtcPrefixScorer
from .corpus import (
    CorpusSpec,
    evaluate_error_rate,
    generate_corpus,
    synthesize_emissions,
    token_emissions_for_vocab,
)
from .decoding import DecodeConfig, aed_beam_search, rescore_nbest
from .graphs import TopologyConfig, compile_denominator
from .lm import estimate_phone_bigram


@dataclass(frozen=True)
class TrendSpec:
    """Corpus and decoding knobs for one trend run."""

    seeds: Tuple[int, ...] = tuple(range(10))
    num_test: int = 25
    num_train: int = 40
    num_words: int = 6
    phones_per_word: Tuple[int, int] = (2, 3)
    utt_len: Tuple[int, int] = (2, 4)
    num_phones: int = 5
    confusion_overlap: int = 2
    tau: float = 0.34
    beam: int = 10
    mmi_prefix_weight: float = 0.3
    rescore_weight: float = 0.2
    lm_smoothing: float = 1.0


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    baseline_ter: float
    fused_ter: float
    rescored_ter: float


@dataclass(frozen=True)
class TrendResult:
    outcomes: Tuple[SeedOutcome, ...]

    def mean(self, attr: str) -> float:
        return sum(getattr(o, attr) for o in self.outcomes) / len(self.outcomes)

    def wins(self, attr: str) -> int:
        """Seeds where the system strictly beats the baseline."""
        return sum(1 for o in self.outcomes if getattr(o, attr) < o.baseline_ter)

    def summary(self) -> str:
        lines = ["seed  baseline  fused  rescored"]
        for o in self.outcomes:
            lines.append(
                f"{o.seed:4d}  {o.baseline_ter:8.3f}  {o.fused_ter:5.3f}  {o.rescored_ter:8.3f}"
            )
        lines.append(
            f"mean  {self.mean('baseline_ter'):8.3f}  {self.mean('fused_ter'):5.3f}  "
            f"{self.mean('rescored_ter'):8.3f}"
        )
        lines.append(
            f"strict wins over baseline: fused {self.wins('fused_ter')}/{len(self.outcomes)}, "
            f"rescored {self.wins('rescored_ter')}/{len(self.outcomes)}"
        )
        return "\n".join(lines)


def run_seed(spec: TrendSpec, seed: int) -> SeedOutcome:
    corpus_spec = CorpusSpec(
        num_words=spec.num_words,
        phones_per_word=spec.phones_per_word,
        utt_len=spec.utt_len,
        num_utterances=spec.num_train + spec.num_test,
        tau=spec.tau,
        confusion_overlap=spec.confusion_overlap,
        num_phones=spec.num_phones,
        seed=seed,
    )
    lex, transcripts = generate_corpus(corpus_spec)
    train, test = transcripts[: spec.num_train], transcripts[spec.num_train :]
    topo = TopologyConfig()
    lm = estimate_phone_bigram(train, lex, k=spec.lm_smoothing)
    g_den = compile_denominator(lm, topo, lex.phone_table)
    base_cfg = DecodeConfig(
        beam=spec.beam,
        mmi_prefix_weight=0.0,
        rescore_weight=spec.rescore_weight,
        max_len=spec.utt_len[1] + 3,
    )
    fused_cfg = replace(base_cfg, mmi_prefix_weight=spec.mmi_prefix_weight)
    refs: List[List[str]] = []
    hyp_base: List[List[str]] = []
    hyp_fused: List[List[str]] = []
    hyp_resc: List[List[str]] = []
    for i, tokens in enumerate(test):
        utt = synthesize_emissions(tokens, lex, topo, corpus_spec.tau, seed=seed * 100003 + i)
        e_tok = token_emissions_for_vocab(utt, lex.words)
        e_phones = utt.phone_emissions
        base = CtcPrefixScorer(e_tok, lex.words)
        nb_base = aed_beam_search(e_tok, e_phones, base, None, lex, topo, g_den, base_cfg)
        base2 = CtcPrefixScorer(e_tok, lex.words)
        nb_fused = aed_beam_search(e_tok, e_phones, base2, None, lex, topo, g_den, fused_cfg)
        nb_resc = rescore_nbest(nb_base, e_phones, lex, topo, base_cfg)
        refs.append(list(tokens))
        hyp_base.append(list(nb_base.entries[0].tokens) if nb_base.entries else [])
        hyp_fused.append(list(nb_fused.entries[0].tokens) if nb_fused.entries else [])
        hyp_resc.append(list(nb_resc.entries[0].tokens) if nb_resc.entries else [])
    return SeedOutcome(
        seed=seed,
        baseline_ter=evaluate_error_rate(hyp_base, refs).token_error_rate,
        fused_ter=evaluate_error_rate(hyp_fused, refs).token_error_rate,
        rescored_ter=evaluate_error_rate(hyp_resc, refs).token_error_rate,
    )


def run_trend(spec: TrendSpec) -> TrendResult:
    return TrendResult(tuple(run_seed(spec, s) for s in spec.seeds))
