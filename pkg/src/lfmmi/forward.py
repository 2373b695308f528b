"""Frame-synchronous dynamic programs over an acceptor and an emission matrix.

The forward pass computes, for every frame count t, the log mass of all
paths that consume exactly t frames; the combined forward-backward pass
yields per-frame arc occupancy posteriors. Epsilon arcs consume no frame
and are folded in by an epsilon closure after every emission step (the
acceptor constructor guarantees the epsilon subgraph is acyclic, so the
closure is a single topological sweep).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .emissions import Emissions
from .errors import UnalignableError
from .fsa import Fsa
from .semiring import ZERO, logadd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameScores:
    """values[t] = log mass of accepted paths consuming exactly t frames."""

    values: np.ndarray  # shape (T+1,)


@dataclass(frozen=True)
class OccupancyTable:
    """Posterior arc occupancies, linear domain.

    ``gamma[t, i]`` is the probability that the path emitting frame t+1
    traverses arc i at that frame; epsilon-arc columns are zero. ``total``
    is the full-sequence log-likelihood.
    """

    gamma: np.ndarray  # shape (T, num_arcs)
    total: float


def _check_labels(g: Fsa, e: Emissions) -> None:
    if g.max_label >= e.alphabet_size:
        raise ValueError(
            f"graph label {g.max_label} outside emission alphabet of size {e.alphabet_size}"
        )


def _eps_closure_fwd(g: Fsa, alpha: np.ndarray) -> None:
    for a in g.eps_arcs_topo:
        alpha[a.dst] = logadd(float(alpha[a.dst]), float(alpha[a.src]) + a.weight)


def _eps_closure_bwd(g: Fsa, beta: np.ndarray) -> None:
    for a in reversed(g.eps_arcs_topo):
        beta[a.src] = logadd(float(beta[a.src]), float(beta[a.dst]) + a.weight)


def forward_trellis(g: Fsa, e: Emissions) -> np.ndarray:
    """Full forward table, shape (T+1, num_states).

    Row t holds, per state, the log mass of path prefixes from the start
    that consume exactly the first t frames (trailing epsilons included).
    """
    _check_labels(g, e)
    T = e.num_frames
    alpha = np.full((T + 1, g.num_states), ZERO)
    alpha[0, g.start] = 0.0
    _eps_closure_fwd(g, alpha[0])
    src, dst, lab, wgt = g.emit_arrays
    for t in range(T):
        if len(src):
            contrib = alpha[t, src] + wgt + e.logp[t, lab]
            np.logaddexp.at(alpha[t + 1], dst, contrib)
        _eps_closure_fwd(g, alpha[t + 1])
    return alpha


def frame_scores_from_trellis(g: Fsa, trellis: np.ndarray) -> FrameScores:
    values = np.full(trellis.shape[0], ZERO)
    for s, w in g.finals.items():
        values = np.logaddexp(values, trellis[:, s] + w)
    return FrameScores(values)


def forward_frame_scores(g: Fsa, e: Emissions) -> FrameScores:
    """Per-frame accepted-mass scores: values[t] = log P(first t frames | g)."""
    scores = frame_scores_from_trellis(g, forward_trellis(g, e))
    if np.all(scores.values == ZERO):
        logger.warning("no frame count reaches a final state; all frame scores are ZERO")
    return scores


def backward_trellis(g: Fsa, e: Emissions) -> tuple[np.ndarray, np.ndarray]:
    """Backward tables (beta, beta_closed), each shape (T+1, num_states).

    ``beta[t, s]`` is the log mass of suffixes from s consuming frames
    t+1..T and reaching a final state, beginning with an emitting arc (or
    stopping at t = T). ``beta_closed`` additionally allows leading
    epsilon arcs; it is the table that pairs with the post-closure rows of
    :func:`forward_trellis` without double-counting epsilons.
    """
    _check_labels(g, e)
    T = e.num_frames
    beta = np.full((T + 1, g.num_states), ZERO)
    beta_closed = np.full((T + 1, g.num_states), ZERO)
    for s, w in g.finals.items():
        beta[T, s] = w
    beta_closed[T] = beta[T]
    _eps_closure_bwd(g, beta_closed[T])
    src, dst, lab, wgt = g.emit_arrays
    for t in range(T - 1, -1, -1):
        if len(src):
            contrib = beta_closed[t + 1, dst] + wgt + e.logp[t, lab]
            np.logaddexp.at(beta[t], src, contrib)
        beta_closed[t] = beta[t]
        _eps_closure_bwd(g, beta_closed[t])
    return beta, beta_closed


def forward_backward(g: Fsa, e: Emissions) -> OccupancyTable:
    """Arc occupancy posteriors for a fully consumed emission matrix.

    Raises :class:`UnalignableError` when no accepted path consumes all T
    frames (for instance when T is shorter than the graph's minimum
    alignment length).
    """
    T = e.num_frames
    alpha = forward_trellis(g, e)
    total = float(frame_scores_from_trellis(g, alpha).values[T])
    if total == ZERO:
        raise UnalignableError("transcript unalignable: zero total likelihood")
    _, beta_closed = backward_trellis(g, e)
    gamma = np.zeros((T, len(g.arcs)))
    emit_idx = np.fromiter(
        (i for i, a in enumerate(g.arcs) if a.label != 0), dtype=np.int64
    )
    src, dst, lab, wgt = g.emit_arrays
    for t in range(T):
        logpost = alpha[t, src] + wgt + e.logp[t, lab] + beta_closed[t + 1, dst] - total
        gamma[t, emit_idx] = np.exp(logpost)
    return OccupancyTable(gamma=gamma, total=total)


def label_occupancy(g: Fsa, occ: OccupancyTable, alphabet_size: int) -> np.ndarray:
    """Aggregate arc occupancies by emitted label into a (T, V) matrix."""
    T = occ.gamma.shape[0]
    out = np.zeros((T, alphabet_size))
    labels = np.fromiter((a.label for a in g.arcs), dtype=np.int64, count=len(g.arcs))
    for t in range(T):
        np.add.at(out[t], labels, occ.gamma[t])
    return out
