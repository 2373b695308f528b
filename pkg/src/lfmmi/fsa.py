"""Weighted finite-state acceptors over the log semiring.

An :class:`Fsa` is immutable after construction. Arcs carry integer labels
where label 0 is epsilon; weights are natural-log probabilities. Arcs with
weight ZERO contribute nothing to any path sum and are dropped when the
acceptor is built, which also makes the epsilon-acyclicity check (required
for the per-frame epsilon closures to terminate) a constructor guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ParseError
from .semiring import ZERO, logadd

EPSILON = 0


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    label: int
    weight: float


@dataclass(frozen=True)
class Fsa:
    """Immutable weighted acceptor.

    Args:
      num_states: number of states; ids are 0..num_states-1.
      arcs: any iterable of :class:`Arc`; stored sorted by (src, label, dst).
      finals: map state id -> final log-weight.
      start: start state id (0 in the text format).
      num_labels: optional declared label-space size, used to detect
        composition of acceptors over different alphabets.
    """

    num_states: int
    arcs: Tuple[Arc, ...]
    finals: Dict[int, float]
    start: int = 0
    num_labels: Optional[int] = None

    def __post_init__(self):
        if self.num_states < 1:
            raise ValueError("an Fsa needs at least one state")
        if not (0 <= self.start < self.num_states):
            raise ValueError(f"start state {self.start} out of range")
        kept = []
        for a in self.arcs:
            if a.weight == ZERO:
                continue  # dead arc, carries no mass
            if not (0 <= a.src < self.num_states and 0 <= a.dst < self.num_states):
                raise ValueError(f"arc endpoint out of range: {a}")
            if a.label < 0:
                raise ValueError(f"negative label: {a}")
            if self.num_labels is not None and a.label >= self.num_labels:
                raise ValueError(f"label {a.label} outside declared space {self.num_labels}")
            kept.append(a)
        kept.sort(key=lambda a: (a.src, a.label, a.dst, a.weight))
        object.__setattr__(self, "arcs", tuple(kept))
        finals = {s: w for s, w in self.finals.items() if w != ZERO}
        for s in finals:
            if not (0 <= s < self.num_states):
                raise ValueError(f"final state {s} out of range")
        object.__setattr__(self, "finals", finals)
        self._check_epsilon_acyclic()

    def _check_epsilon_acyclic(self):
        """Reject epsilon cycles; they would make path sums divergent."""
        order = _eps_topo_order(self.num_states, self.eps_arcs)
        if order is None:
            raise ValueError("epsilon cycle with non-ZERO weight")

    @cached_property
    def eps_arcs(self) -> Tuple[Arc, ...]:
        return tuple(a for a in self.arcs if a.label == EPSILON)

    @cached_property
    def emitting_arcs(self) -> Tuple[Arc, ...]:
        return tuple(a for a in self.arcs if a.label != EPSILON)

    @cached_property
    def eps_arcs_topo(self) -> Tuple[Arc, ...]:
        """Epsilon arcs ordered so each arc's src precedes any arc it feeds."""
        order = _eps_topo_order(self.num_states, self.eps_arcs)
        assert order is not None
        rank = {s: i for i, s in enumerate(order)}
        return tuple(sorted(self.eps_arcs, key=lambda a: rank[a.src]))

    @cached_property
    def emit_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, label, weight) arrays of emitting arcs for vectorized DP."""
        arcs = self.emitting_arcs
        src = np.fromiter((a.src for a in arcs), dtype=np.int64, count=len(arcs))
        dst = np.fromiter((a.dst for a in arcs), dtype=np.int64, count=len(arcs))
        lab = np.fromiter((a.label for a in arcs), dtype=np.int64, count=len(arcs))
        wgt = np.fromiter((a.weight for a in arcs), dtype=np.float64, count=len(arcs))
        return src, dst, lab, wgt

    @cached_property
    def max_label(self) -> int:
        return max((a.label for a in self.arcs), default=0)

    def arcs_from(self, state: int) -> Tuple[Arc, ...]:
        return self._arcs_by_src.get(state, ())

    @cached_property
    def _arcs_by_src(self) -> Dict[int, Tuple[Arc, ...]]:
        by_src: Dict[int, List[Arc]] = {}
        for a in self.arcs:
            by_src.setdefault(a.src, []).append(a)
        return {s: tuple(v) for s, v in by_src.items()}

    def final_weight(self, state: int) -> float:
        return self.finals.get(state, ZERO)


def _eps_topo_order(num_states: int, eps_arcs: Iterable[Arc]) -> Optional[List[int]]:
    """Topological order of states under epsilon arcs, or None on a cycle."""
    succ: Dict[int, List[int]] = {}
    indeg = [0] * num_states
    n_arcs = 0
    for a in eps_arcs:
        succ.setdefault(a.src, []).append(a.dst)
        indeg[a.dst] += 1
        n_arcs += 1
    if n_arcs == 0:
        return list(range(num_states))
    queue = [s for s in range(num_states) if indeg[s] == 0]
    order = []
    while queue:
        s = queue.pop()
        order.append(s)
        for d in succ.get(s, ()):
            indeg[d] -= 1
            if indeg[d] == 0:
                queue.append(d)
    if len(order) != num_states:
        return None
    return order


def connect(a: Fsa) -> Fsa:
    """Trim states not on a start-to-final path.

    Language and per-string weights are unchanged. If the language is
    empty the result is a start-only acceptor with no arcs or finals.
    """
    fwd = {a.start}
    stack = [a.start]
    while stack:
        s = stack.pop()
        for arc in a.arcs_from(s):
            if arc.dst not in fwd:
                fwd.add(arc.dst)
                stack.append(arc.dst)
    pred: Dict[int, List[int]] = {}
    for arc in a.arcs:
        pred.setdefault(arc.dst, []).append(arc.src)
    bwd = set(a.finals)
    stack = list(bwd)
    while stack:
        s = stack.pop()
        for p in pred.get(s, ()):
            if p not in bwd:
                bwd.add(p)
                stack.append(p)
    alive = fwd & bwd
    if a.start not in alive:
        return Fsa(1, (), {}, start=0, num_labels=a.num_labels)
    old_ids = sorted(alive)
    new_id = {old: new for new, old in enumerate(old_ids)}
    arcs = tuple(
        Arc(new_id[arc.src], new_id[arc.dst], arc.label, arc.weight)
        for arc in a.arcs
        if arc.src in alive and arc.dst in alive
    )
    finals = {new_id[s]: w for s, w in a.finals.items() if s in alive}
    return Fsa(len(old_ids), arcs, finals, start=new_id[a.start], num_labels=a.num_labels)


def compose(a: Fsa, b: Fsa) -> Fsa:
    """Intersect two acceptors over the log semiring.

    The weight of each accepted string is the product (log-domain sum) of
    its weights in ``a`` and ``b``, summed over ambiguity on either side.
    Epsilon arcs are sequenced through a filter (all a-side epsilons taken
    before b-side ones between matches) so no path pair is double-counted.
    The result is trimmed.
    """
    if a.num_labels is not None and b.num_labels is not None and a.num_labels != b.num_labels:
        raise ValueError(
            f"label-space mismatch: {a.num_labels} vs {b.num_labels}"
        )
    # filter flag: 0 = a-side epsilon still allowed, 1 = only b-side
    start = (a.start, b.start, 0)
    state_id = {start: 0}
    worklist = [start]
    arcs: List[Arc] = []
    finals: Dict[int, float] = {}

    def intern(key) -> int:
        sid = state_id.get(key)
        if sid is None:
            sid = len(state_id)
            state_id[key] = sid
            worklist.append(key)
        return sid

    while worklist:
        key = worklist.pop()
        sa, sb, flag = key
        sid = state_id[key]
        wa = a.final_weight(sa)
        wb = b.final_weight(sb)
        if wa != ZERO and wb != ZERO:
            finals[sid] = wa + wb
        b_by_label: Dict[int, List[Arc]] = {}
        for arc in b.arcs_from(sb):
            b_by_label.setdefault(arc.label, []).append(arc)
        for arc in a.arcs_from(sa):
            if arc.label == EPSILON:
                if flag == 0:
                    arcs.append(Arc(sid, intern((arc.dst, sb, 0)), EPSILON, arc.weight))
                continue
            for barc in b_by_label.get(arc.label, ()):
                arcs.append(
                    Arc(sid, intern((arc.dst, barc.dst, 0)), arc.label, arc.weight + barc.weight)
                )
        for barc in b_by_label.get(EPSILON, ()):
            arcs.append(Arc(sid, intern((sa, barc.dst, 1)), EPSILON, barc.weight))

    num_labels = a.num_labels if a.num_labels is not None else b.num_labels
    raw = Fsa(len(state_id), tuple(arcs), finals, start=0, num_labels=num_labels)
    return connect(raw)


def to_text(a: Fsa) -> str:
    """Line-oriented text form: arc lines ``src dst label weight``, final
    lines ``state weight``; state 0 is the start state."""
    if a.start != 0:
        raise ValueError("text format requires start state 0")
    lines = [f"{arc.src} {arc.dst} {arc.label} {arc.weight!r}" for arc in a.arcs]
    lines.extend(f"{s} {w!r}" for s, w in sorted(a.finals.items()))
    return "\n".join(lines) + "\n"


def from_text(text: str, num_labels: Optional[int] = None) -> Fsa:
    arcs: List[Arc] = []
    finals: Dict[int, float] = {}
    max_state = 0
    for ln, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) == 4:
                src, dst, label = int(parts[0]), int(parts[1]), int(parts[2])
                arcs.append(Arc(src, dst, label, float(parts[3])))
                max_state = max(max_state, src, dst)
            elif len(parts) == 2:
                s = int(parts[0])
                finals[s] = logadd(finals.get(s, ZERO), float(parts[1]))
                max_state = max(max_state, s)
            else:
                raise ValueError("expected 2 or 4 fields")
        except ValueError as exc:
            raise ParseError(f"bad fsa line {ln}: {line!r} ({exc})") from None
    return Fsa(max_state + 1, tuple(arcs), finals, start=0, num_labels=num_labels)


def save_fsa(a: Fsa, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_text(a))


def load_fsa(path, num_labels: Optional[int] = None) -> Fsa:
    with open(path) as fh:
        return from_text(fh.read(), num_labels=num_labels)
