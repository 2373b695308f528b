import itertools
import math

import numpy as np
import pytest

from lfmmi.base_scorers import (
    EOS_TOKEN,
    CtcPrefixScorer,
    JointTableScorer,
    TokenNgramScorer,
    joint_table_from_token_emissions,
    load_joint_table,
    save_joint_table,
)
from lfmmi.emissions import Emissions
from lfmmi.errors import ParseError
from lfmmi.semiring import ZERO, logsumexp

from conftest import random_emissions
from oracles import ctc_collapse


def peaked_emissions(frames, V, peak=0.9):
    logp = np.full((len(frames), V), math.log((1 - peak) / (V - 2)))
    logp[:, 0] = -np.inf
    for t, lab in enumerate(frames):
        logp[t, lab] = math.log(peak)
    return Emissions(logp)


class TestCtcPrefixScorer:
    def test_distribution_normalized(self):
        rng = np.random.default_rng(1)
        e = random_emissions(rng, 4, 4)
        scorer = CtcPrefixScorer(e, ("x", "y"))
        for prefix in [(), ("x",), ("x", "y"), ("y", "y")]:
            dist = scorer.score_next(prefix)
            mass = math.fsum(math.exp(v) for v in dist.values() if v != ZERO)
            assert mass == pytest.approx(1.0, abs=1e-9)

    def test_peaked_single_token(self):
        e = peaked_emissions([2, 2, 1], 3)
        scorer = CtcPrefixScorer(e, ("w",))
        dist = scorer.score_next(())
        assert dist["w"] > dist[EOS_TOKEN]
        dist2 = scorer.score_next(("w",))
        assert dist2[EOS_TOKEN] > dist2["w"]

    def test_prefix_mass_matches_enumeration(self):
        rng = np.random.default_rng(5)
        e = random_emissions(rng, 4, 4)
        scorer = CtcPrefixScorer(e, ("x", "y"))
        sym_of = {2: "x", 3: "y"}
        # brute force: mass of all length-4 paths by collapsed-output prefix
        def path_mass(pred):
            terms = [
                sum(float(e.logp[t, lab]) for t, lab in enumerate(s))
                for s in itertools.product([1, 2, 3], repeat=4)
                if pred(tuple(sym_of[l] for l in ctc_collapse(s)))
            ]
            return logsumexp(terms)

        for prefix in [("x",), ("y",), ("x", "x"), ("x", "y")]:
            want = path_mass(lambda out: out[: len(prefix)] == prefix)
            got = scorer._tables(prefix)[2]
            if want == ZERO:
                assert got == ZERO
            else:
                assert got == pytest.approx(want, abs=1e-9)
            eq_want = path_mass(lambda out: out == prefix)
            pb, pnb, _ = scorer._tables(prefix)
            eq_got = np.logaddexp(pb[-1], pnb[-1])
            if eq_want == ZERO:
                assert eq_got == ZERO
            else:
                assert eq_got == pytest.approx(eq_want, abs=1e-9)

    def test_repeat_token_needs_blank(self):
        # two frames cannot produce "w w": repeat requires a separating blank
        e = peaked_emissions([2, 2], 3, peak=0.98)
        scorer = CtcPrefixScorer(e, ("w",))
        assert scorer._tables(("w", "w"))[2] == ZERO


class TestTokenNgramScorer:
    def test_deterministic_corpus_near_zero(self):
        scorer = TokenNgramScorer([["a", "b"]] * 50, order=2, k=1e-6)
        dist = scorer.score_next(("a",))
        assert dist["b"] == pytest.approx(0.0, abs=1e-4)

    def test_uniform_from_empty_corpus(self):
        scorer = TokenNgramScorer([], order=2, k=1.0, vocab=("a", "b", "c"))
        dist = scorer.score_next(())
        assert all(v == pytest.approx(-math.log(4)) for v in dist.values())

    def test_hand_tallied_bigram(self):
        corpus = [["a", "b"], ["b"], ["a", "a"]]
        scorer = TokenNgramScorer(corpus, order=2, k=1.0)
        # context "a": continuations b:1, a:1; events = 2 vocab + eos = 3
        dist = scorer.score_next(("x", "a"))
        assert dist["b"] == pytest.approx(math.log((1 + 1) / (3 + 3)))
        assert dist["a"] == pytest.approx(math.log((1 + 1) / (3 + 3)))
        assert dist[EOS_TOKEN] == pytest.approx(math.log((1 + 1) / (3 + 3)))
        # sentence starts: a:2, b:1
        start = scorer.score_next(())
        assert start["a"] == pytest.approx(math.log((2 + 1) / (3 + 3)))

    def test_normalized(self):
        scorer = TokenNgramScorer([["a", "b", "a"]], order=3, k=0.7)
        for ctx in [(), ("a",), ("a", "b"), ("zzz",)]:
            dist = scorer.score_next(ctx)
            assert math.fsum(math.exp(v) for v in dist.values()) == pytest.approx(1.0, abs=1e-12)


class TestJointTableScorer:
    def test_from_token_emissions(self):
        rng = np.random.default_rng(2)
        e = random_emissions(rng, 3, 4)
        scorer = joint_table_from_token_emissions(e, ("x", "y"))
        assert scorer.num_frames == 3
        row, state = scorer.score_joint(1, 5, None)
        np.testing.assert_array_equal(row, e.logp[1])

    def test_u_dependent_rows(self):
        rng = np.random.default_rng(3)
        table = np.stack([random_emissions(rng, 2, 4).logp for _ in range(3)], axis=1)
        scorer = JointTableScorer(table, ("x", "y"))
        r0, _ = scorer.score_joint(0, 0, None)
        r2, _ = scorer.score_joint(0, 2, None)
        r9, _ = scorer.score_joint(0, 9, None)
        np.testing.assert_array_equal(r2, r9)
        assert not np.array_equal(r0, r2)

    def test_rejects_unnormalized(self):
        with pytest.raises(ParseError, match="not normalized"):
            JointTableScorer(np.zeros((2, 1, 4)), ("x", "y"))

    def test_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        table = np.stack([random_emissions(rng, 3, 5).logp for _ in range(2)], axis=1)
        scorer = JointTableScorer(table, ("x", "y", "z"))
        save_joint_table(scorer, tmp_path / "joint.tbl")
        loaded = load_joint_table(tmp_path / "joint.tbl", ("x", "y", "z"))
        np.testing.assert_array_equal(loaded.table, scorer.table)
