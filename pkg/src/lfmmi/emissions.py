"""Per-frame log-probability matrices standing in for an acoustic encoder.

Rows are normalized distributions over an output alphabet in which index 1
is the blank symbol and index 0 is reserved for epsilon and never emitted
(its column is ZERO).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ParseError

ROW_NORM_TOL = 1e-6


def _row_logsumexp(logp: np.ndarray) -> np.ndarray:
    m = np.max(logp, axis=1)
    if not np.all(np.isfinite(m)):
        raise ParseError("emission row with no finite entries")
    return m + np.log(np.exp(logp - m[:, None]).sum(axis=1))


@dataclass(frozen=True)
class Emissions:
    """T x V matrix of natural-log probabilities, one normalized row per frame."""

    logp: np.ndarray
    symbols: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        logp = np.asarray(self.logp, dtype=np.float64)
        object.__setattr__(self, "logp", logp)
        if logp.ndim != 2:
            raise ParseError("emissions must be a 2-D matrix")
        if self.num_frames < 1 or self.alphabet_size < 2:
            raise ParseError("emissions need T >= 1 and V >= 2")
        norms = _row_logsumexp(logp)
        worst = float(np.max(np.abs(norms)))
        if worst >= ROW_NORM_TOL:
            raise ParseError(f"emission rows not normalized (|logsumexp| up to {worst:.3g})")
        if self.symbols is not None and len(self.symbols) != self.alphabet_size:
            raise ParseError("symbol table size does not match alphabet size")
        logp.setflags(write=False)

    @property
    def num_frames(self) -> int:
        return self.logp.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.logp.shape[1]


def save_emissions(e: Emissions, path) -> None:
    """Text form: header line ``T V`` then T whitespace-separated rows."""
    with open(path, "w") as fh:
        fh.write(f"{e.num_frames} {e.alphabet_size}\n")
        for row in e.logp:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_emissions(path, symbols: Optional[Tuple[str, ...]] = None) -> Emissions:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError(f"bad emissions header in {path}")
        try:
            t, v = int(header[0]), int(header[1])
            rows = [[float(x) for x in fh.readline().split()] for _ in range(t)]
        except ValueError as exc:
            raise ParseError(f"bad emissions data in {path}: {exc}") from None
        for row in rows:
            if len(row) != v:
                raise ParseError(f"emissions row width mismatch in {path}")
    return Emissions(np.array(rows, dtype=np.float64), symbols=symbols)
