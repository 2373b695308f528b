import math

import numpy as np
import pytest

from lfmmi.emissions import Emissions
from lfmmi.errors import UnalignableError
from lfmmi.graphs import compile_denominator, compile_numerator, make_split
from lfmmi.lexicon import Lexicon, SymbolTable
from lfmmi.lm import estimate_phone_bigram
from lfmmi.scorer import (
    DEFAULT_MMI_FLOOR,
    LossBreakdown,
    aed_loss_parts,
    combined_objective,
    extend_prefix_cache,
    guarded_score_delta,
    lfmmi_loss_and_grad,
    mmi_alignment_score,
    mmi_log_posterior,
    mmi_prefix_delta,
    mmi_prefix_score,
    nt_loss_parts,
    precompute_denominator,
    root_prefix_cache,
)
from lfmmi.semiring import ZERO, logsumexp

from conftest import random_emissions
from oracles import (
    brute_denominator_likelihood,
    brute_denominator_partial,
    brute_numerator_likelihood,
    brute_numerator_partial,
)


@pytest.fixture
def setup(toy_lexicon, toy_lm, topo):
    rng = np.random.default_rng(100)
    e = random_emissions(rng, 6, len(toy_lexicon.phone_table))
    g_den = compile_denominator(toy_lm, topo, toy_lexicon.phone_table)
    den = precompute_denominator(e, g_den)
    return toy_lexicon, toy_lm, topo, e, g_den, den


def normalized(logits: np.ndarray) -> Emissions:
    m = np.max(logits, axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return Emissions(logits - lse[:, None])


class TestPosterior:
    def test_same_graph_posterior_zero(self, setup):
        lex, lm, topo, e, g_den, den = setup
        assert mmi_log_posterior(e, g_den, den) == pytest.approx(0.0, abs=1e-12)

    def test_matches_bruteforce(self, setup):
        lex, lm, topo, e, g_den, den = setup
        alphabet = range(1, len(lex.phone_table))
        for tokens in [["b"], ["ab"], ["b", "b"]]:
            g_num = compile_numerator(tokens, lex, topo)
            got = mmi_log_posterior(e, g_num, den)
            want = brute_numerator_likelihood(
                lex.phones_of_tokens(tokens), e.logp, alphabet
            ) - brute_denominator_likelihood(lm, lex.phone_table.symbol_of, e.logp, alphabet)
            assert got == pytest.approx(want, abs=1e-9)

    def test_degenerate_single_word_posterior_near_zero(self, topo):
        # one-word vocabulary with an LM pinned on it: numerator and
        # denominator coincide up to end-probability weighting
        table = SymbolTable.from_phones(("A",))
        lex = Lexicon({"a": (2,)}, table)
        lm = estimate_phone_bigram([["a"]] * 50, lex, k=1e-9)
        rng = np.random.default_rng(2)
        from conftest import random_emissions

        e = random_emissions(rng, 3, len(table))
        den = precompute_denominator(e, compile_denominator(lm, topo, table))
        post = mmi_log_posterior(e, compile_numerator(["a"], lex, topo), den)
        assert post == pytest.approx(0.0, abs=1e-5)

    def test_peaked_emissions_prefer_spoken_word(self, toy_lexicon, toy_lm, topo):
        lex = toy_lexicon
        # frames spelling out word "ab" = phones A B with trailing blank
        peak = np.full((3, len(lex.phone_table)), math.log(0.02))
        peak[:, 0] = -np.inf
        for t, lab in enumerate([2, 3, 1]):
            peak[t, lab] = math.log(0.9)
        e = normalized(peak)
        g_den = compile_denominator(toy_lm, topo, lex.phone_table)
        den = precompute_denominator(e, g_den)
        p_ab = mmi_log_posterior(e, compile_numerator(["ab"], lex, topo), den)
        p_b = mmi_log_posterior(e, compile_numerator(["b"], lex, topo), den)
        assert p_ab > p_b

    def test_unalignable_raises(self, setup):
        lex, lm, topo, _, g_den, _ = setup
        short = Emissions(normalized(np.zeros((1, len(lex.phone_table)))).logp)
        den = precompute_denominator(short, g_den)
        g_num = compile_numerator(["ab"], lex, topo)  # needs 2 frames
        with pytest.raises(UnalignableError):
            mmi_log_posterior(short, g_num, den)


class TestDenominatorCache:
    def test_last_value_is_full_likelihood(self, setup):
        lex, lm, topo, e, g_den, den = setup
        from lfmmi.forward import forward_frame_scores

        assert den.values[-1] == forward_frame_scores(g_den, e).values[-1]

    def test_reuse_bit_identical(self, setup):
        lex, lm, topo, e, g_den, den = setup
        g_num = compile_numerator(["ab"], lex, topo)
        once = mmi_log_posterior(e, g_num, den)
        for _ in range(100):
            assert mmi_log_posterior(e, g_num, den) == once
        fresh = precompute_denominator(e, g_den)
        assert np.array_equal(fresh.values, den.values)

    def test_matches_enumeration_per_frame(self, toy_lexicon, toy_lm, topo):
        rng = np.random.default_rng(17)
        e = random_emissions(rng, 3, len(toy_lexicon.phone_table))
        g_den = compile_denominator(toy_lm, topo, toy_lexicon.phone_table)
        den = precompute_denominator(e, g_den)
        alphabet = range(1, len(toy_lexicon.phone_table))
        for t in range(4):
            want = brute_denominator_partial(
                toy_lm, toy_lexicon.phone_table.symbol_of, e.logp, alphabet, t
            )
            assert float(den.values[t]) == pytest.approx(want, abs=1e-10)


class TestLossAndGrad:
    def test_identical_graphs_zero_loss_zero_grad(self, setup):
        lex, lm, topo, e, g_den, _ = setup
        loss, grad = lfmmi_loss_and_grad(e, g_den, g_den)
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_rows_sum_to_zero(self, setup):
        lex, lm, topo, e, g_den, _ = setup
        g_num = compile_numerator(["ca", "b"], lex, topo)
        _, grad = lfmmi_loss_and_grad(e, g_num, g_den)
        assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_finite_difference_agreement(self, toy_lexicon, toy_lm, topo, seed):
        rng = np.random.default_rng(seed)
        lex = toy_lexicon
        e = random_emissions(rng, 4, len(lex.phone_table))
        g_num = compile_numerator(["b"], lex, topo)
        g_den = compile_denominator(toy_lm, topo, lex.phone_table)
        loss, grad = lfmmi_loss_and_grad(e, g_num, g_den)
        h = 1e-5
        for t in range(e.num_frames):
            for v in range(1, e.alphabet_size):
                up, down = e.logp.copy(), e.logp.copy()
                up[t, v] += h
                down[t, v] -= h
                lu = lfmmi_loss_and_grad(normalized(up), g_num, g_den)[0]
                ld = lfmmi_loss_and_grad(normalized(down), g_num, g_den)[0]
                fd = (lu - ld) / (2 * h)
                scale = max(abs(fd), abs(grad[t, v]), 1e-8)
                assert abs(fd - grad[t, v]) / scale < 1e-4


class TestCombinedObjective:
    def test_zero_weight_is_base(self):
        parts = nt_loss_parts(j_nt=2.5, mmi_logpost=-3.0, alpha=0.0)
        assert combined_objective(parts) == 2.5

    def test_arithmetic(self):
        parts = LossBreakdown(base_loss=0.0, mmi_logpost=-2.0, alpha=0.5)
        assert combined_objective(parts) == pytest.approx(1.0)

    def test_aed_blend(self):
        parts = aed_loss_parts(j_att=1.0, j_ctc=2.0, mmi_logpost=0.0, beta=0.3)
        assert parts.base_loss == pytest.approx(1.3)
        assert parts.alpha == 0.3

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            LossBreakdown(base_loss=0.0, mmi_logpost=0.0, alpha=-0.1)


class TestPrefixScore:
    def test_matches_bruteforce_sum_over_t(self, setup):
        lex, lm, topo, e, g_den, den = setup
        alphabet = range(1, len(lex.phone_table))
        for tokens in [("b",), ("ab",), ("b", "ca")]:
            cache = mmi_prefix_score(e, tokens, lex, topo, den)
            terms = []
            for t in range(1, e.num_frames + 1):
                num = brute_numerator_partial(
                    lex.phones_of_tokens(tokens), e.logp, alphabet, t
                )
                if num == ZERO:
                    continue
                dent = brute_denominator_partial(
                    lm, lex.phone_table.symbol_of, e.logp, alphabet, t
                )
                terms.append(num - dent)
            assert cache.score == pytest.approx(logsumexp(terms), abs=1e-9)

    def test_prefix_longer_than_utterance_scores_zero(self, setup):
        lex, lm, topo, e, g_den, den = setup
        tokens = ("cab", "cab", "cab")  # 9 phones > 6 frames
        cache = mmi_prefix_score(e, tokens, lex, topo, den)
        assert cache.score == ZERO

    def test_split_score_is_wordwise_logsumexp(self, setup):
        lex, lm, topo, e, g_den, den = setup
        split = make_split(("b",), "ca", lex)
        got = mmi_prefix_score(e, (), lex, topo, den, split=split).score
        per_word = [
            mmi_prefix_score(e, ("b", w), lex, topo, den).score for w in split.expansion
        ]
        assert got == pytest.approx(logsumexp(per_word), abs=1e-9)

    def test_full_transcript_score_dominated_by_boundary_frame(self, topo):
        # 2-word transcript, T=4, emissions peaked on its exact alignment
        table = SymbolTable.from_phones(("A", "B", "C"))
        lex = Lexicon({"u": (2, 3), "v": (4,)}, table)
        lm = estimate_phone_bigram([["u", "v"], ["v"]], lex, k=1.0)
        peak = np.full((4, len(table)), math.log(0.02))
        peak[:, 0] = -np.inf
        for t, lab in enumerate([2, 3, 4, 1]):  # u=A B, v=C, trailing blank
            peak[t, lab] = math.log(0.9)
        e = normalized(peak)
        den = precompute_denominator(e, compile_denominator(lm, topo, table))
        cache = mmi_prefix_score(e, ("u", "v"), lex, topo, den)
        per_t = [
            float(cache.frame_finals[t]) - float(den.values[t]) if cache.frame_finals[t] != ZERO else ZERO
            for t in range(1, 5)
        ]
        # pronunciation completes at frame 3; that term carries the mass
        assert int(np.argmax(per_t)) + 1 == 3
        assert cache.score == pytest.approx(logsumexp(per_t), abs=1e-12)

    def test_emission_symmetric_phones_score_equal(self, topo):
        table = SymbolTable.from_phones(("A", "B"))
        lex = Lexicon({"a": (2,), "b": (3,)}, table)
        lm = estimate_phone_bigram([], lex, k=1.0)  # uniform
        logp = np.full((3, 4), -np.inf)
        logp[:, 1:] = -math.log(3)  # symmetric under A<->B swap
        e = Emissions(logp)
        den = precompute_denominator(e, compile_denominator(lm, topo, table))
        sa = mmi_prefix_score(e, ("a",), lex, topo, den).score
        sb = mmi_prefix_score(e, ("b",), lex, topo, den).score
        assert sa == pytest.approx(sb, abs=1e-12)


class TestPrefixDelta:
    def test_telescoping(self, setup):
        lex, lm, topo, e, g_den, den = setup
        chain = [("b",), ("b", "ab"), ("b", "ab", "b")]
        caches = [mmi_prefix_score(e, t, lex, topo, den) for t in chain]
        total = sum(mmi_prefix_delta(p, c) for p, c in zip(caches, caches[1:]))
        assert caches[0].score + total == pytest.approx(caches[-1].score, abs=1e-12)

    def test_exact_consistency(self, setup):
        lex, lm, topo, e, g_den, den = setup
        parent = mmi_prefix_score(e, ("b",), lex, topo, den)
        child = mmi_prefix_score(e, ("b", "ca"), lex, topo, den)
        delta = mmi_prefix_delta(parent, child)
        assert parent.score + delta == child.score

    def test_non_extension_rejected(self, setup):
        lex, lm, topo, e, g_den, den = setup
        a = mmi_prefix_score(e, ("b",), lex, topo, den)
        b = mmi_prefix_score(e, ("ab", "ca"), lex, topo, den)
        with pytest.raises(ValueError):
            mmi_prefix_delta(a, b)

    def test_zero_guards(self):
        assert guarded_score_delta(ZERO, ZERO) == 0.0
        assert guarded_score_delta(ZERO, -1.0) == DEFAULT_MMI_FLOOR
        assert guarded_score_delta(-1.0, ZERO) == DEFAULT_MMI_FLOOR
        assert guarded_score_delta(-1.0, ZERO, floor=-7.5) == -7.5

    def test_delta_ranks_supported_token_higher(self, toy_lexicon, toy_lm, topo):
        lex = toy_lexicon
        # peaked on phones of "b ca": B C A
        peak = np.full((4, len(lex.phone_table)), math.log(0.01))
        peak[:, 0] = -np.inf
        for t, lab in enumerate([3, 4, 2, 1]):
            peak[t, lab] = math.log(0.9)
        e = normalized(peak)
        den = precompute_denominator(e, compile_denominator(toy_lm, topo, lex.phone_table))
        parent = mmi_prefix_score(e, ("b",), lex, topo, den)
        good = mmi_prefix_score(e, ("b", "ca"), lex, topo, den)
        bad = mmi_prefix_score(e, ("b", "ab"), lex, topo, den)
        assert mmi_prefix_delta(parent, good) > mmi_prefix_delta(parent, bad)


class TestAlignmentScore:
    def test_full_frame_equals_posterior(self, setup):
        lex, lm, topo, e, g_den, den = setup
        tokens = ("b", "ab")
        g_num = compile_numerator(tokens, lex, topo)
        want = mmi_log_posterior(e, g_num, den)
        got = mmi_alignment_score(e, tokens, e.num_frames, lex, topo, den)
        assert got == pytest.approx(want, abs=1e-12)

    def test_too_many_phones_scores_zero(self, setup):
        lex, lm, topo, e, g_den, den = setup
        assert mmi_alignment_score(e, ("cab",), 2, lex, topo, den) == ZERO

    def test_empty_at_zero_is_zero(self, setup):
        lex, lm, topo, e, g_den, den = setup
        assert mmi_alignment_score(e, (), 0, lex, topo, den) == 0.0

    def test_matches_enumeration_per_frame(self, toy_lexicon, toy_lm, topo):
        rng = np.random.default_rng(23)
        lex = toy_lexicon
        e = random_emissions(rng, 3, len(lex.phone_table))
        den = precompute_denominator(e, compile_denominator(toy_lm, topo, lex.phone_table))
        alphabet = range(1, len(lex.phone_table))
        tokens = ("b",)
        for t in range(1, 4):
            got = mmi_alignment_score(e, tokens, t, lex, topo, den)
            num = brute_numerator_partial(lex.phones_of_tokens(tokens), e.logp, alphabet, t)
            if num == ZERO:
                assert got == ZERO
            else:
                dent = brute_denominator_partial(
                    toy_lm, lex.phone_table.symbol_of, e.logp, alphabet, t
                )
                assert got == pytest.approx(num - dent, abs=1e-10)

    def test_cache_reuse_identical(self, setup):
        lex, lm, topo, e, g_den, den = setup
        tokens = ("b", "ca")
        cache = mmi_prefix_score(e, tokens, lex, topo, den)
        for t in range(e.num_frames + 1):
            with_cache = mmi_alignment_score(e, tokens, t, lex, topo, den, cache=cache)
            fresh = mmi_alignment_score(e, tokens, t, lex, topo, den)
            assert with_cache == fresh


class TestTrellisExtension:
    def test_extension_matches_scratch(self, setup):
        lex, lm, topo, e, g_den, den = setup
        root = root_prefix_cache(e, lex, topo, den)
        cache = root
        for token in ["b", "ab", "ca"]:
            cache = extend_prefix_cache(cache, token, e, lex, topo, den)
            scratch = mmi_prefix_score(e, cache.tokens, lex, topo, den)
            np.testing.assert_allclose(cache.trellis, scratch.trellis, atol=1e-9)
            np.testing.assert_allclose(cache.frame_finals, scratch.frame_finals, atol=1e-9)
            if cache.score == ZERO:
                assert scratch.score == ZERO
            else:
                assert cache.score == pytest.approx(scratch.score, abs=1e-9)

    def test_old_columns_untouched(self, setup):
        lex, lm, topo, e, g_den, den = setup
        parent = mmi_prefix_score(e, ("b",), lex, topo, den)
        child = extend_prefix_cache(parent, "ab", e, lex, topo, den)
        np.testing.assert_array_equal(
            child.trellis[:, : parent.graph.num_states], parent.trellis
        )

    def test_split_cache_not_extendable(self, setup):
        lex, lm, topo, e, g_den, den = setup
        split = make_split((), "a", lex)
        cache = mmi_prefix_score(e, (), lex, topo, den, split=split)
        with pytest.raises(ValueError):
            extend_prefix_cache(cache, "b", e, lex, topo, den)


def test_root_cache_score_pinned_to_zero(setup):
    lex, lm, topo, e, g_den, den = setup
    root = root_prefix_cache(e, lex, topo, den)
    assert root.score == 0.0
    assert root.tokens == ()
