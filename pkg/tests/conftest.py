import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lfmmi.emissions import Emissions
from lfmmi.lexicon import Lexicon, SymbolTable
from lfmmi.lm import estimate_phone_bigram
from lfmmi.graphs import TopologyConfig


def random_emissions(rng: np.random.Generator, T: int, V: int) -> Emissions:
    """Normalized random emissions; column 0 (epsilon) carries no mass."""
    logits = rng.normal(size=(T, V))
    logits[:, 0] = -np.inf
    logp = logits - _row_lse(logits)[:, None]
    return Emissions(logp)


def _row_lse(x):
    m = np.max(x, axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


@pytest.fixture
def topo():
    return TopologyConfig()


@pytest.fixture
def toy_lexicon():
    """Three phones A/B/C; words with shared prefixes to exercise look-ahead."""
    table = SymbolTable.from_phones(("A", "B", "C"))
    entries = {
        "ab": (2, 3),
        "ac": (2, 4),
        "b": (3,),
        "ca": (4, 2),
        "cab": (4, 2, 3),
    }
    return Lexicon(entries, table)


@pytest.fixture
def toy_lm(toy_lexicon):
    corpus = [["ab", "b"], ["ca", "ab"], ["b"], ["cab", "b"]]
    return estimate_phone_bigram(corpus, toy_lexicon, k=0.5)
