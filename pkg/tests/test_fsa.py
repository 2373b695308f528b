import math

import pytest
from hypothesis import given, settings, strategies as st

from lfmmi.errors import ParseError
from lfmmi.fsa import Arc, Fsa, compose, connect, from_text, to_text
from lfmmi.semiring import ZERO

from oracles import enumerate_strings


def linear_fsa(labels, weight_per_arc=0.0, final_weight=0.0):
    arcs = tuple(Arc(i, i + 1, lab, weight_per_arc) for i, lab in enumerate(labels))
    return Fsa(len(labels) + 1, arcs, {len(labels): final_weight})


def test_validation_rejects_bad_endpoints():
    with pytest.raises(ValueError):
        Fsa(2, (Arc(0, 5, 1, 0.0),), {1: 0.0})
    with pytest.raises(ValueError):
        Fsa(2, (), {1: 0.0}, start=3)


def test_arcs_sorted_and_dead_arcs_dropped():
    arcs = (Arc(1, 0, 2, -1.0), Arc(0, 1, 3, -0.5), Arc(0, 1, 1, -0.2), Arc(0, 1, 2, ZERO))
    f = Fsa(2, arcs, {1: 0.0})
    assert [a.label for a in f.arcs if a.src == 0] == [1, 3]
    assert all(a.weight != ZERO for a in f.arcs)


def test_epsilon_cycle_rejected():
    with pytest.raises(ValueError, match="epsilon cycle"):
        Fsa(2, (Arc(0, 1, 0, -0.1), Arc(1, 0, 0, -0.1)), {1: 0.0})
    with pytest.raises(ValueError, match="epsilon cycle"):
        Fsa(1, (Arc(0, 0, 0, -0.1),), {0: 0.0})


def test_zero_weight_epsilon_self_loop_is_inert():
    plain = linear_fsa([2, 3])
    looped = Fsa(
        3,
        plain.arcs + (Arc(1, 1, 0, ZERO),),
        dict(plain.finals),
    )
    assert enumerate_strings(looped, 3) == enumerate_strings(plain, 3)


class TestCompose:
    def test_language_intersection(self):
        a = linear_fsa([2, 3])
        b_arcs = (
            Arc(0, 1, 2, 0.0), Arc(1, 2, 3, 0.0),
            Arc(0, 3, 3, 0.0), Arc(3, 4, 2, 0.0),
        )
        b = Fsa(5, b_arcs, {2: 0.0, 4: 0.0})
        c = compose(a, b)
        assert set(enumerate_strings(c, 4)) == {(2, 3)}

    def test_weights_multiply(self):
        a = linear_fsa([2, 3], weight_per_arc=math.log(0.5))
        b = linear_fsa([2, 3], weight_per_arc=math.log(0.25), final_weight=math.log(0.9))
        c = compose(a, b)
        got = enumerate_strings(c, 2)[(2, 3)]
        assert got == pytest.approx(2 * math.log(0.5) + 2 * math.log(0.25) + math.log(0.9), rel=1e-12)

    def test_epsilon_forward_arc_counted_once(self):
        # a: 2 (eps) 3 with a weighted epsilon bridge; b: 2 3
        a = Fsa(
            4,
            (Arc(0, 1, 2, math.log(0.5)), Arc(1, 2, 0, math.log(0.3)), Arc(2, 3, 3, 0.0)),
            {3: 0.0},
        )
        b = Fsa(
            4,
            (Arc(0, 1, 2, 0.0), Arc(1, 2, 0, math.log(0.7)), Arc(2, 3, 3, 0.0)),
            {3: 0.0},
        )
        c = compose(a, b)
        strings = enumerate_strings(c, 3)
        assert set(strings) == {(2, 3)}
        assert strings[(2, 3)] == pytest.approx(math.log(0.5 * 0.3 * 0.7), rel=1e-12)

    def test_label_space_mismatch_reported(self):
        a = Fsa(2, (Arc(0, 1, 1, 0.0),), {1: 0.0}, num_labels=3)
        b = Fsa(2, (Arc(0, 1, 1, 0.0),), {1: 0.0}, num_labels=4)
        with pytest.raises(ValueError, match="label-space mismatch"):
            compose(a, b)

    def test_result_is_trimmed(self):
        a = linear_fsa([2])
        b = Fsa(3, (Arc(0, 1, 2, 0.0), Arc(0, 2, 3, 0.0)), {1: 0.0, 2: 0.0})
        c = compose(a, b)
        # the (3)-branch pair state dies; every state lies on an accepting path
        reachable = {c.start}
        for arc in c.arcs:
            reachable.add(arc.dst)
        assert reachable == set(range(c.num_states))
        assert set(enumerate_strings(c, 2)) == {(2,)}


class TestConnect:
    def test_dead_end_removed(self):
        arcs = (Arc(0, 1, 2, 0.0), Arc(0, 2, 3, 0.0))
        f = Fsa(3, arcs, {1: 0.0})
        g = connect(f)
        assert g.num_states == 2
        assert enumerate_strings(g, 2) == enumerate_strings(f, 2)

    def test_idempotent_on_trimmed(self):
        f = linear_fsa([2, 3])
        g = connect(f)
        assert g.num_states == f.num_states
        assert g.arcs == f.arcs
        assert g.finals == f.finals

    def test_empty_language_becomes_start_only(self):
        f = Fsa(3, (Arc(0, 1, 2, 0.0),), {2: 0.0})
        g = connect(f)
        assert g.num_states == 1
        assert not g.arcs and not g.finals

    @given(st.data())
    @settings(max_examples=30, deadline=None)
    def test_random_fsa_weights_preserved(self, data):
        n = data.draw(st.integers(2, 10))
        n_arcs = data.draw(st.integers(1, 20))
        arcs = []
        for _ in range(n_arcs):
            arcs.append(
                Arc(
                    data.draw(st.integers(0, n - 1)),
                    data.draw(st.integers(0, n - 1)),
                    data.draw(st.integers(1, 3)),
                    data.draw(st.floats(min_value=-3.0, max_value=0.0)),
                )
            )
        finals = {
            s: data.draw(st.floats(min_value=-2.0, max_value=0.0))
            for s in data.draw(st.lists(st.integers(0, n - 1), max_size=3))
        }
        f = Fsa(n, tuple(arcs), finals)
        g = connect(f)
        before = enumerate_strings(f, 4)
        after = enumerate_strings(g, 4)
        assert set(before) == set(after)
        for s, w in before.items():
            assert after[s] == pytest.approx(w, rel=1e-9, abs=1e-12)


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_compose_language_matches_set_intersection(data):
    def rand_fsa():
        n = data.draw(st.integers(1, 5))
        arcs = tuple(
            Arc(
                data.draw(st.integers(0, n - 1)),
                data.draw(st.integers(0, n - 1)),
                data.draw(st.integers(1, 3)),
                data.draw(st.floats(min_value=-2.0, max_value=0.0)),
            )
            for _ in range(data.draw(st.integers(0, 8)))
        )
        finals = {
            s: 0.0 for s in data.draw(st.lists(st.integers(0, n - 1), max_size=2))
        }
        return Fsa(n, arcs, finals)

    a, b = rand_fsa(), rand_fsa()
    c = compose(a, b)
    sa = enumerate_strings(a, 4)
    sb = enumerate_strings(b, 4)
    sc = enumerate_strings(c, 4)
    assert set(sc) == set(sa) & set(sb)
    for s in sc:
        assert sc[s] == pytest.approx(sa[s] + sb[s], rel=1e-9, abs=1e-12)


@given(st.data())
@settings(max_examples=20, deadline=None)
def test_forward_on_composition_matches_string_enumeration(data):
    """Frame scores of compose(a, b) over flat emissions equal the
    enumerated per-length string-weight sums."""
    import numpy as np
    from lfmmi.emissions import Emissions
    from lfmmi.forward import forward_frame_scores
    from lfmmi.semiring import logsumexp

    def rand_fsa():
        n = data.draw(st.integers(1, 4))
        arcs = tuple(
            Arc(
                data.draw(st.integers(0, n - 1)),
                data.draw(st.integers(0, n - 1)),
                data.draw(st.integers(1, 3)),
                data.draw(st.floats(min_value=-2.0, max_value=0.0)),
            )
            for _ in range(data.draw(st.integers(0, 6)))
        )
        finals = {s: 0.0 for s in data.draw(st.lists(st.integers(0, n - 1), max_size=2))}
        return Fsa(n, arcs, finals)

    c = compose(rand_fsa(), rand_fsa())
    T, V = 4, 4
    logp = np.full((T, V), -np.inf)
    logp[:, 1:] = -math.log(V - 1)
    values = forward_frame_scores(c, Emissions(logp)).values
    strings = enumerate_strings(c, T)
    for t in range(T + 1):
        want = logsumexp(
            w + t * -math.log(V - 1) for s, w in strings.items() if len(s) == t
        )
        if want == ZERO:
            assert values[t] == ZERO
        else:
            assert values[t] == pytest.approx(want, abs=1e-9)


class TestTextFormat:
    def test_roundtrip(self):
        f = Fsa(
            3,
            (Arc(0, 1, 2, -0.5), Arc(1, 2, 3, -1.25), Arc(1, 1, 1, -0.1)),
            {2: -0.75, 1: 0.0},
        )
        g = from_text(to_text(f))
        assert g.arcs == f.arcs
        assert g.finals == f.finals
        assert g.num_states == f.num_states

    def test_parse_error_reported(self):
        with pytest.raises(ParseError, match="line 1"):
            from_text("0 1 2\n")

    def test_final_only_lines(self):
        g = from_text("0 -0.5\n")
        assert g.finals == {0: -0.5}
        assert g.num_states == 1
