"""Tests for constructions module."""

import time

import numpy as np
import pytest

from algebra import build_group, get_group, prefix_products, sample_word
from constructions import (
    Dfa,
    TransitionMonoidElement,
    WordSample,
    dfa_to_ids4,
    dfa_to_rnn_ssm,
    final_state,
    group_to_dfa,
    ids4_step_table,
    ids4_trajectory,
    parity_dfa,
    rnn_ssm_trajectory,
    run_dfa,
    transition_element,
    verify_construction,
    word_element,
)


def _seen_one_dfa() -> Dfa:
    """Reset automaton: state 1 once any 1 has been read. Not a group."""
    return Dfa(alphabet=("0", "1"), transitions=[[0, 1], [1, 1]], start=0, accepting=frozenset({1}))


def _mod3_counter_dfa() -> Dfa:
    """Counts symbol 'a' mod 3, resets to 0 on 'r', ignores 'b'."""
    return Dfa(
        alphabet=("a", "b", "r"),
        transitions=[[1, 0, 0], [2, 1, 0], [0, 2, 0]],
        start=0,
        accepting=frozenset({0}),
    )


class TestDfa:
    """Test cases for Dfa."""

    def test_run_and_accept(self):
        """Test trajectories and acceptance on the parity automaton."""
        dfa = parity_dfa()

        assert run_dfa(dfa, [1, 0, 1, 1]) == [1, 1, 0, 1]
        assert final_state(dfa, []) == dfa.start
        assert dfa.accepts([1, 1])
        assert not dfa.accepts([1])

    def test_group_dfa_tracks_prefix_products(self):
        """Test the right-multiplication automaton visits the prefix products."""
        g = get_group("A5")
        word = sample_word(g, 15, seed=2)

        assert run_dfa(group_to_dfa(g), word) == prefix_products(g, word)

    def test_invalid_tables(self):
        """Test malformed automata are rejected."""
        with pytest.raises(ValueError):
            Dfa(alphabet=("a",), transitions=[[0, 1]], start=0)

        with pytest.raises(ValueError):
            Dfa(alphabet=("a",), transitions=[[2]], start=0)

        with pytest.raises(ValueError):
            Dfa(alphabet=("a",), transitions=[[0]], start=1)

    def test_unknown_symbol(self):
        """Test out-of-alphabet symbols raise IndexError."""
        with pytest.raises(IndexError):
            run_dfa(parity_dfa(), [0, 2])


class TestTransitionMonoid:
    """Test cases for TransitionMonoidElement."""

    def test_word_element_composes_in_reading_order(self):
        """Test the element of a word maps the start state to the final state."""
        dfa = _mod3_counter_dfa()
        word = [0, 0, 2, 0, 1, 0]

        element = word_element(dfa, word)

        assert element.apply(dfa.start) == final_state(dfa, word)
        for q in range(3):
            assert element.apply(q) == run_dfa(Dfa(dfa.alphabet, dfa.transitions, start=q), word)[-1]

    def test_transition_element_is_a_table_column(self):
        """Test a single symbol maps each state through the transition table."""
        dfa = _mod3_counter_dfa()

        assert transition_element(dfa, 0).as_function() == (1, 2, 0)
        assert transition_element(dfa, 2).as_function() == (0, 0, 0)

    def test_identity_for_empty_word(self):
        """Test the empty word gives the identity element."""
        assert word_element(parity_dfa(), []) == TransitionMonoidElement.identity(2)

    def test_from_function(self):
        """Test the matrix form of a state map round-trips to the function."""
        element = TransitionMonoidElement.from_function([2, 2, 0])

        assert element.as_function() == (2, 2, 0)

    def test_rejects_non_functions(self):
        """Test columns must contain exactly one 1."""
        with pytest.raises(ValueError):
            TransitionMonoidElement(np.ones((2, 2)))


class TestIds4Construction:
    """Test cases for dfa_to_ids4."""

    def test_dimensions(self):
        """Test the layer has one state per DFA state and one input per symbol plus $."""
        spec = dfa_to_ids4(group_to_dfa(get_group("A5")))

        assert spec.variant == "input-dependent-full"
        assert spec.state_dim == 60
        assert spec.input_dim == 61

    @pytest.mark.parametrize("group_id", ["A5", "S5", "A4xZ5", "Z60"])
    def test_tracks_registered_groups(self, group_id):
        """Test the compiled layer matches the automaton on 1000 random words within 10 seconds."""
        g = get_group(group_id)
        sample = WordSample("random", max_length=64, count=1000, seed=1)

        start = time.perf_counter()
        report = verify_construction("ids4", group_to_dfa(g), sample, label=group_id)
        elapsed = time.perf_counter() - start

        assert report.words_tested == 1000
        assert report.passed
        assert elapsed < 10.0

    def test_step_table_matches_recurrent_form(self):
        """Test the per-token step table decodes the same states as recurrent_forward."""
        g = get_group("A4xZ5")
        dfa = group_to_dfa(g)
        spec = dfa_to_ids4(dfa)
        table = ids4_step_table(spec, dfa)

        assert table.transitions.shape == (61, 60, 60)
        for seed in range(10):
            word = sample_word(g, 20, seed)
            assert ids4_trajectory(spec, dfa, word, table) == ids4_trajectory(spec, dfa, word)


    def test_non_group_automaton(self):
        """Test the construction works for automata with non-invertible symbols."""
        sample = WordSample("exhaustive", max_length=6)

        assert verify_construction("ids4", _mod3_counter_dfa(), sample).passed
        assert verify_construction("ids4", _seen_one_dfa(), sample).passed

    def test_trajectory_drops_bos_step(self):
        """Test one decoded state per word symbol."""
        dfa = parity_dfa()

        assert ids4_trajectory(dfa_to_ids4(dfa), dfa, [1, 1, 0]) == [1, 0, 0]
        assert ids4_trajectory(dfa_to_ids4(dfa), dfa, []) == []


class TestRnnSsmConstruction:
    """Test cases for dfa_to_rnn_ssm."""

    def test_pair_units(self):
        """Test the hidden size is states times symbols plus one."""
        weights = dfa_to_rnn_ssm(_mod3_counter_dfa())

        assert weights.A.shape == (12, 12)
        assert weights.B.shape == (12, 3)
        assert weights.initial_state.sum() == 1.0

    def test_parity_exhaustive(self):
        """Test every binary word up to length 10."""
        report = verify_construction("rnn-ssm", parity_dfa(), WordSample("exhaustive", max_length=10))

        assert report.words_tested == 2**11 - 1
        assert report.passed

    def test_small_groups_and_monoids(self):
        """Test random words on A4 and on non-group automata."""
        sample = WordSample("random", max_length=32, count=50, seed=3)

        assert verify_construction("rnn-ssm", group_to_dfa(build_group("A4")), sample).passed
        assert verify_construction("rnn-ssm", _mod3_counter_dfa(), sample).passed
        assert verify_construction("rnn-ssm", _seen_one_dfa(), sample).passed

    @pytest.mark.slow
    def test_tracks_a5(self):
        """Test 200 random A5 words of length up to 32 against the automaton."""
        sample = WordSample("random", max_length=32, count=200, seed=4)

        report = verify_construction("rnn-ssm", group_to_dfa(get_group("A5")), sample, label="A5")

        assert report.words_tested == 200
        assert report.passed

    def test_empty_word(self):
        """Test the empty word has an empty trajectory."""
        dfa = parity_dfa()

        assert rnn_ssm_trajectory(dfa_to_rnn_ssm(dfa), dfa, []) == []


class TestVerification:
    """Test cases for verify_construction and WordSample."""

    def test_exhaustive_word_count(self):
        """Test exhaustive sampling includes the empty word."""
        words = list(WordSample("exhaustive", max_length=3).words(2))

        assert len(words) == 15
        assert words[0] == ()

    def test_random_words_are_deterministic(self):
        """Test equal seeds give equal samples with lengths in 1..max_length."""
        first = list(WordSample("random", max_length=5, count=20, seed=9).words(4))
        second = list(WordSample("random", max_length=5, count=20, seed=9).words(4))

        assert first == second
        assert all(1 <= len(w) <= 5 for w in first)

    def test_reports_mismatches(self):
        """Test a model compiled from another automaton is caught."""
        wrong = dfa_to_ids4(_seen_one_dfa())

        report = verify_construction("ids4", parity_dfa(), WordSample("exhaustive", max_length=3), model=wrong)

        assert not report.passed
        assert report.mismatches[0].word == (1, 1)
        assert report.mismatches[0].expected == (1, 0)

    def test_invalid_arguments(self):
        """Test unknown kinds and sample modes are rejected."""
        with pytest.raises(ValueError):
            verify_construction("lstm", parity_dfa(), WordSample())

        with pytest.raises(ValueError):
            WordSample("grid")

        with pytest.raises(ValueError):
            WordSample(max_length=0)
