"""MMI scores: full-utterance posterior, training loss with analytic
gradient, prefix scores for label-synchronous search, and alignment
scores for time-synchronous search.

All quantities are ratios of numerator-graph to denominator-graph
likelihoods. The denominator forward pass depends only on the utterance,
so it is computed once per utterance and shared by every hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .emissions import Emissions
from .errors import UnalignableError
from .forward import (
    FrameScores,
    forward_backward,
    forward_frame_scores,
    forward_trellis,
    frame_scores_from_trellis,
    label_occupancy,
)
from .fsa import Fsa
from .graphs import (
    PrefixSplit,
    TopologyConfig,
    compile_numerator,
    compile_prefix_numerator,
    extend_numerator,
)
from .lexicon import Lexicon
from .semiring import ZERO, logsumexp

DEFAULT_MMI_FLOOR = -30.0


@dataclass(frozen=True)
class DenominatorCache:
    """Per-frame denominator forward totals, reusable across hypotheses."""

    graph: Fsa
    frame_scores: FrameScores

    @property
    def values(self) -> np.ndarray:
        return self.frame_scores.values


def precompute_denominator(e: Emissions, g_den: Fsa) -> DenominatorCache:
    return DenominatorCache(graph=g_den, frame_scores=forward_frame_scores(g_den, e))


def mmi_log_posterior(e: Emissions, g_num: Fsa, den: DenominatorCache) -> float:
    """log of the numerator/denominator likelihood ratio over all T frames."""
    T = e.num_frames
    num_total = float(forward_frame_scores(g_num, e).values[T])
    if num_total == ZERO:
        raise UnalignableError("transcript unalignable within the utterance length")
    return num_total - float(den.values[T])


@dataclass(frozen=True)
class LossBreakdown:
    """Components of the combined training objective.

    ``base_loss`` is the externally supplied non-discriminative term: a
    (1-beta)/beta blend of attention and CTC losses in AED mode, or the
    transducer loss alone in NT mode.
    """

    base_loss: float
    mmi_logpost: float
    alpha: float
    beta: Optional[float] = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("mmi weight must be >= 0")


def aed_loss_parts(
    j_att: float, j_ctc: float, mmi_logpost: float, alpha: float = 0.3, beta: float = 0.3
) -> LossBreakdown:
    base = (1.0 - beta) * j_att + beta * j_ctc
    return LossBreakdown(base_loss=base, mmi_logpost=mmi_logpost, alpha=alpha, beta=beta)


def nt_loss_parts(j_nt: float, mmi_logpost: float, alpha: float = 0.5) -> LossBreakdown:
    return LossBreakdown(base_loss=j_nt, mmi_logpost=mmi_logpost, alpha=alpha)


def combined_objective(parts: LossBreakdown) -> float:
    return parts.base_loss - parts.alpha * parts.mmi_logpost


def lfmmi_loss_and_grad(
    e: Emissions, g_num: Fsa, g_den: Fsa
) -> Tuple[float, np.ndarray]:
    """Negative MMI log-posterior and its gradient w.r.t. per-frame logits.

    The gradient of the loss at (t, v) is the denominator label occupancy
    minus the numerator label occupancy; the normalization Jacobian
    cancels because both occupancy rows sum to one, so each gradient row
    sums to zero exactly.
    """
    num_occ = forward_backward(g_num, e)
    den_occ = forward_backward(g_den, e)
    loss = -(num_occ.total - den_occ.total)
    grad = label_occupancy(g_den, den_occ, e.alphabet_size) - label_occupancy(
        g_num, num_occ, e.alphabet_size
    )
    return loss, grad


@dataclass(frozen=True)
class PrefixScoreCache:
    """Numerator forward state for one partial hypothesis.

    ``trellis`` holds the full forward table of the hypothesis graph so
    one-token extensions only have to fill in the columns of the appended
    states. ``score`` accumulates the per-frame numerator/denominator
    ratio over every possible end frame.
    """

    tokens: Tuple[str, ...]
    graph: Fsa
    trellis: np.ndarray
    frame_finals: np.ndarray
    score: float
    split: Optional[PrefixSplit] = None


def _ratio_score(frame_finals: np.ndarray, den_values: np.ndarray) -> float:
    terms = []
    for t in range(1, len(frame_finals)):
        if frame_finals[t] == ZERO:
            continue
        if den_values[t] == ZERO:
            raise ValueError(f"denominator has no mass at frame {t}")
        terms.append(float(frame_finals[t]) - float(den_values[t]))
    return logsumexp(terms)


def _cache_from_graph(
    tokens: Tuple[str, ...],
    g: Fsa,
    e: Emissions,
    den: DenominatorCache,
    split: Optional[PrefixSplit] = None,
) -> PrefixScoreCache:
    trellis = forward_trellis(g, e)
    frame_finals = frame_scores_from_trellis(g, trellis).values
    return PrefixScoreCache(
        tokens=tokens,
        graph=g,
        trellis=trellis,
        frame_finals=frame_finals,
        score=_ratio_score(frame_finals, den.values),
        split=split,
    )


def mmi_prefix_score(
    e: Emissions,
    tokens: Sequence[str],
    lex: Lexicon,
    topo: TopologyConfig,
    den: DenominatorCache,
    split: Optional[PrefixSplit] = None,
) -> PrefixScoreCache:
    """Score of all hypotheses starting with the given prefix.

    With ``split`` the graph carries one parallel branch per look-ahead
    word; otherwise every token must be a lexicon word. A prefix too long
    to be pronounced within the utterance legally scores ZERO.
    """
    if split is not None:
        g = compile_prefix_numerator(split, lex, topo)
        return _cache_from_graph(split.tokens, g, e, den, split=split)
    tokens = tuple(tokens)
    if not tokens:
        raise ValueError("prefix must contain at least one token")
    g = compile_numerator(tokens, lex, topo)
    return _cache_from_graph(tokens, g, e, den)


def extend_prefix_cache(
    cache: PrefixScoreCache,
    token: str,
    e: Emissions,
    lex: Lexicon,
    topo: TopologyConfig,
    den: DenominatorCache,
) -> PrefixScoreCache:
    """One-token extension recomputing only the appended trellis columns.

    The extended graph reuses the parent graph's states and arcs verbatim
    (numbering is append-only), so parent trellis columns stay valid.
    """
    if cache.split is not None:
        raise ValueError("cannot extend a look-ahead split cache token-wise")
    tokens = cache.tokens + (token,)
    g = extend_numerator(cache.graph, lex.phones_of(token), topo)
    old_states = cache.graph.num_states
    T = e.num_frames
    trellis = np.full((T + 1, g.num_states), ZERO)
    trellis[:, :old_states] = cache.trellis
    new_arcs = [a for a in g.emitting_arcs if a.dst >= old_states]
    if new_arcs:
        src = np.fromiter((a.src for a in new_arcs), dtype=np.int64)
        dst = np.fromiter((a.dst for a in new_arcs), dtype=np.int64)
        lab = np.fromiter((a.label for a in new_arcs), dtype=np.int64)
        wgt = np.fromiter((a.weight for a in new_arcs), dtype=np.float64)
        for t in range(T):
            contrib = trellis[t, src] + wgt + e.logp[t, lab]
            np.logaddexp.at(trellis[t + 1], dst, contrib)
    frame_finals = frame_scores_from_trellis(g, trellis).values
    return PrefixScoreCache(
        tokens=tokens,
        graph=g,
        trellis=trellis,
        frame_finals=frame_finals,
        score=_ratio_score(frame_finals, den.values),
    )


def guarded_score_delta(
    parent_score: float, child_score: float, floor: float = DEFAULT_MMI_FLOOR
) -> float:
    """Difference of two log scores with ZERO guarding.

    An unreachable child is floored rather than -inf so fused beam scores
    stay ordered; two unreachable scores carry no MMI evidence and differ
    by 0.
    """
    if parent_score == ZERO:
        return 0.0 if child_score == ZERO else floor
    if child_score == ZERO:
        return floor
    return child_score - parent_score


def mmi_prefix_delta(
    parent: PrefixScoreCache, child: PrefixScoreCache, floor: float = DEFAULT_MMI_FLOOR
) -> float:
    """First-order difference of the prefix score for a one-token extension."""
    if len(child.tokens) != len(parent.tokens) + 1 or child.tokens[:-1] != parent.tokens:
        raise ValueError(
            f"{child.tokens!r} does not extend {parent.tokens!r} by one token"
        )
    return guarded_score_delta(parent.score, child.score, floor)


def mmi_alignment_score(
    e: Emissions,
    tokens: Sequence[str],
    t: int,
    lex: Lexicon,
    topo: TopologyConfig,
    den: DenominatorCache,
    cache: Optional[PrefixScoreCache] = None,
) -> float:
    """log posterior that the token sequence is completed within t frames.

    The empty hypothesis at t = 0 scores 0 by convention; any (tokens, t)
    pair the numerator graph cannot reach scores ZERO.
    """
    tokens = tuple(tokens)
    if not (0 <= t <= e.num_frames):
        raise ValueError(f"frame index {t} outside [0, {e.num_frames}]")
    if not tokens and t == 0:
        return 0.0
    if cache is not None and cache.tokens == tokens:
        frame_finals = cache.frame_finals
    else:
        g = compile_numerator(tokens, lex, topo)
        frame_finals = frame_scores_from_trellis(g, forward_trellis(g, e)).values
    if frame_finals[t] == ZERO:
        return ZERO
    return float(frame_finals[t]) - float(den.values[t])


def root_prefix_cache(e: Emissions, lex: Lexicon, topo: TopologyConfig, den: DenominatorCache) -> PrefixScoreCache:
    """Cache for the empty hypothesis: blank-only graph, score pinned to 0.

    The summed posterior over the set of all hypotheses is 1, so the
    empty prefix scores log 1 = 0 while still carrying a trellis that
    one-token extensions can build on.
    """
    g = compile_numerator((), lex, topo)
    trellis = forward_trellis(g, e)
    frame_finals = frame_scores_from_trellis(g, trellis).values
    return PrefixScoreCache(
        tokens=(),
        graph=g,
        trellis=trellis,
        frame_finals=frame_finals,
        score=0.0,
    )
