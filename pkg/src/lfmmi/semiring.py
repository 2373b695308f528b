"""Log-semiring primitives.

Weights are natural-log probabilities stored as plain floats. ``ZERO``
(log 0) is ``-inf``; ``ONE`` (log 1) is ``0.0``. Multiplication is float
addition, which saturates correctly (``x + ZERO == ZERO``), and the
semiring sum is log-sum-exp.
"""

from __future__ import annotations

import math
from typing import Iterable

ZERO = float("-inf")
ONE = 0.0


def logadd(a: float, b: float) -> float:
    """Binary log-sum-exp: log(exp(a) + exp(b)), safe for ZERO operands."""
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def logsumexp(values: Iterable[float]) -> float:
    """log sum of exponentials, max-shifted for stability.

    An empty iterable sums to ZERO.
    """
    vals = [v for v in values if v != ZERO]
    if not vals:
        return ZERO
    m = max(vals)
    if len(vals) == 1:
        return m
    return m + math.log(sum(math.exp(v - m) for v in vals))
