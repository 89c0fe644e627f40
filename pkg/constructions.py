"""Exact compilations of finite automata into one-layer IDS4 and RNN-SSM weights."""

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np
from loguru import logger

from algebra import FiniteGroup, build_group
from ssm import (
    AffineMap,
    FixedInput,
    FixedOutput,
    InputDependentFullTransition,
    SsmLayerSpec,
    materialize_step,
    recurrent_forward,
    rnn_ssm_forward,
)

ConstructionKind = Literal["ids4", "rnn-ssm"]

# pre-activation offset of a pair unit; one active predecessor plus a matching token gives 0.5
RNN_SSM_THRESHOLD = 1.5


@dataclass(frozen=True, eq=False)
class Dfa:
    """
    Deterministic finite automaton over dense state and symbol indices.

    ``transitions[q, s]`` is the state reached from ``q`` on symbol ``s``.
    """

    alphabet: tuple[str, ...]
    transitions: np.ndarray
    start: int
    accepting: frozenset[int] = frozenset()
    state_names: tuple[str, ...] = ()

    def __post_init__(self):
        table = np.array(self.transitions, dtype=int)
        if table.ndim != 2 or table.shape[1] != len(self.alphabet):
            raise ValueError(f"Transition table {table.shape} does not match alphabet of {len(self.alphabet)}")
        if table.size and (table.min() < 0 or table.max() >= table.shape[0]):
            raise ValueError("Transition table points outside the state set")
        if not 0 <= self.start < table.shape[0]:
            raise ValueError(f"Start state {self.start} out of range")
        if any(not 0 <= q < table.shape[0] for q in self.accepting):
            raise ValueError("Accepting set contains an unknown state")
        table.setflags(write=False)
        object.__setattr__(self, "transitions", table)

    @property
    def num_states(self) -> int:
        return int(self.transitions.shape[0])

    @property
    def num_symbols(self) -> int:
        return len(self.alphabet)

    @property
    def bos_index(self) -> int:
        """Input index of the ``$`` symbol in IDS4 inputs (one past the alphabet)."""
        return self.num_symbols

    def _check_symbol(self, symbol: int) -> None:
        if not 0 <= symbol < self.num_symbols:
            raise IndexError(f"Symbol {symbol} out of range for alphabet of {self.num_symbols}")

    def step(self, state: int, symbol: int) -> int:
        self._check_symbol(symbol)
        return int(self.transitions[state, symbol])

    def accepts(self, word: Sequence[int]) -> bool:
        trajectory = run_dfa(self, word)
        return (trajectory[-1] if trajectory else self.start) in self.accepting


def run_dfa(dfa: Dfa, word: Sequence[int]) -> list[int]:
    """States after reading each symbol of ``word`` from the start state."""
    states = []
    state = dfa.start
    for symbol in word:
        state = dfa.step(state, int(symbol))
        states.append(state)
    return states


def final_state(dfa: Dfa, word: Sequence[int]) -> int:
    trajectory = run_dfa(dfa, word)
    return trajectory[-1] if trajectory else dfa.start


@dataclass(frozen=True, eq=False)
class TransitionMonoidElement:
    """
    A state-to-state function as a boolean matrix with ``matrix[next, prev] = 1``.

    ``later @ earlier`` is the element for reading ``earlier`` then ``later``.
    """

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.int64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Monoid element must be square, got {matrix.shape}")
        if not (np.isin(matrix, (0, 1)).all() and np.all(matrix.sum(axis=0) == 1)):
            raise ValueError("Every column of a monoid element needs exactly one 1")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls, num_states: int) -> "TransitionMonoidElement":
        return cls(np.eye(num_states, dtype=np.int64))

    @classmethod
    def from_function(cls, mapping: Sequence[int]) -> "TransitionMonoidElement":
        n = len(mapping)
        matrix = np.zeros((n, n), dtype=np.int64)
        matrix[np.asarray(mapping), np.arange(n)] = 1
        return cls(matrix)

    def __matmul__(self, other: "TransitionMonoidElement") -> "TransitionMonoidElement":
        return TransitionMonoidElement(self.matrix @ other.matrix)

    def __eq__(self, other) -> bool:
        return isinstance(other, TransitionMonoidElement) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())

    def as_function(self) -> tuple[int, ...]:
        return tuple(int(q) for q in self.matrix.argmax(axis=0))

    def apply(self, state: int) -> int:
        return int(self.matrix[:, state].argmax())


def transition_element(dfa: Dfa, symbol: int) -> TransitionMonoidElement:
    dfa._check_symbol(symbol)
    return TransitionMonoidElement.from_function(dfa.transitions[:, symbol])


def word_element(dfa: Dfa, word: Sequence[int]) -> TransitionMonoidElement:
    """Monoid element of a word; the identity for the empty word."""
    element = TransitionMonoidElement.identity(dfa.num_states)
    for symbol in word:
        element = transition_element(dfa, int(symbol)) @ element
    return element


def group_to_dfa(g: FiniteGroup) -> Dfa:
    """
    Right-multiplication automaton of a group.

    States and symbols are group elements, ``δ(q, σ) = q · σ`` and the start
    state is the identity, so the end state on a word is its product.
    """
    return Dfa(
        alphabet=g.names,
        transitions=np.asarray(g.cayley),
        start=g.identity,
        accepting=frozenset({g.identity}),
        state_names=g.names,
    )


def parity_dfa() -> Dfa:
    """Two-state automaton tracking the parity of the number of 1s."""
    return group_to_dfa(build_group("Z2"))


# IDS4


def dfa_to_ids4(dfa: Dfa) -> SsmLayerSpec:
    """
    One-layer IDS4 whose state is the one-hot DFA state.

    Inputs are one-hot over ``Σ ∪ {$}`` with ``$`` at index ``|Σ|`` and always
    first. ``π_A`` maps each symbol to its boolean transition matrix and ``$``
    to the identity; ``B̄`` writes ``e_{q0}`` on ``$`` and nothing on other
    symbols. Output and passthrough maps are zero.

    Args:
        dfa: The automaton

    Returns:
        Layer spec with k = |Σ| + 1 and d = |Q|
    """
    d, k = dfa.num_states, dfa.num_symbols + 1

    weight = np.zeros((d, d, k))
    for symbol in range(dfa.num_symbols):
        weight[:, :, symbol] = transition_element(dfa, symbol).matrix
    weight[:, :, dfa.bos_index] = np.eye(d)

    B = np.zeros((d, k))
    B[dfa.start, dfa.bos_index] = 1.0

    spec = SsmLayerSpec(
        input_dim=k,
        state_dim=d,
        transition=InputDependentFullTransition(AffineMap(weight, np.zeros((d, d)))),
        input_map=FixedInput(B),
        output_map=FixedOutput(np.zeros((k, d))),
        passthrough=np.zeros((k, k)),
    )
    logger.debug(f"Compiled IDS4 layer with d={d}, k={k}")
    return spec


def ids4_inputs(dfa: Dfa, word: Sequence[int]) -> np.ndarray:
    """One-hot inputs ``$ w_1 ... w_n`` of shape (n + 1, |Σ| + 1)."""
    tokens = [dfa.bos_index] + [int(s) for s in word]
    for symbol in tokens[1:]:
        dfa._check_symbol(symbol)
    return np.eye(dfa.num_symbols + 1)[tokens]


@dataclass(frozen=True, eq=False)
class Ids4StepTable:
    """Materialized ``Ā`` and drive ``B̄ x`` for ``$`` and every symbol, indexed by token."""

    transitions: np.ndarray
    drives: np.ndarray


def ids4_step_table(spec: SsmLayerSpec, dfa: Dfa) -> Ids4StepTable:
    """Materialize one step per token; IDS4 inputs are one-hot, so these are all the steps there are."""
    steps = []
    for x in np.eye(dfa.num_symbols + 1):
        step = materialize_step(spec, x)
        steps.append((step.A, step.B @ x))
    return Ids4StepTable(np.stack([A for A, _ in steps]), np.stack([drive for _, drive in steps]))


def ids4_trajectory(
    spec: SsmLayerSpec, dfa: Dfa, word: Sequence[int], table: Optional[Ids4StepTable] = None
) -> list[int]:
    """
    Decoded states after each word symbol (the ``$`` step is dropped).

    Without a table the layer runs through ``recurrent_forward``; with one,
    every step reuses its token's materialized matrices.
    """
    if table is None:
        states = recurrent_forward(spec, ids4_inputs(dfa, word)).states
        return [int(q) for q in states[1:].argmax(axis=1)]

    h = table.drives[dfa.bos_index]
    trajectory = []
    for symbol in word:
        dfa._check_symbol(int(symbol))
        h = table.transitions[symbol] @ h + table.drives[symbol]
        trajectory.append(int(h.argmax()))
    return trajectory



# RNN-SSM


@dataclass(frozen=True, eq=False)
class RnnSsmWeights:
    """
    Weights of a one-layer RNN-SSM over pair units.

    Unit ``q * (|Σ| + 1) + s`` means "in state q having just read symbol s - 1";
    ``s = 0`` is the dummy column used only by the initial state.
    """

    A: np.ndarray
    B: np.ndarray
    initial_state: np.ndarray
    num_states: int
    num_symbols: int
    activation: str = "step"

    @property
    def slots(self) -> int:
        return self.num_symbols + 1

    def decode(self, states: np.ndarray) -> np.ndarray:
        """Map hidden states (n, d) to DFA states by summing over symbol slots."""
        states = np.atleast_2d(states)
        per_state = states.reshape(states.shape[0], self.num_states, self.slots).sum(axis=2)
        return per_state.argmax(axis=1)


def _pair_unit(state: int, slot: int, slots: int) -> int:
    return state * slots + slot


def dfa_to_rnn_ssm(dfa: Dfa) -> RnnSsmWeights:
    """
    One-layer RNN-SSM with step activation that tracks ``(state, last symbol)`` pairs.

    The pre-activation of unit ``(q, σ)`` is
    ``Σ_{(p, τ): δ(p, σ) = q} h[(p, τ)] + x[σ] − 1.5``. The constant ``−1.5`` is
    carried by Ā: exactly one unit is active at every step, so subtracting 1.5
    from every entry of Ā subtracts 1.5 from every pre-activation.

    Args:
        dfa: The automaton

    Returns:
        RnnSsmWeights with d = |Q| · (|Σ| + 1) and k = |Σ|
    """
    Q, S = dfa.num_states, dfa.num_symbols
    slots = S + 1
    d = Q * slots

    A = np.full((d, d), -RNN_SSM_THRESHOLD)
    B = np.zeros((d, S))

    for symbol in range(S):
        for p in range(Q):
            q = int(dfa.transitions[p, symbol])
            target = _pair_unit(q, symbol + 1, slots)
            A[target, p * slots:(p + 1) * slots] += 1.0

        for q in range(Q):
            B[_pair_unit(q, symbol + 1, slots), symbol] = 1.0

    initial_state = np.zeros(d)
    initial_state[_pair_unit(dfa.start, 0, slots)] = 1.0

    logger.debug(f"Compiled RNN-SSM with {d} pair units for {Q} states and {S} symbols")
    return RnnSsmWeights(A=A, B=B, initial_state=initial_state, num_states=Q, num_symbols=S)


def rnn_ssm_inputs(dfa: Dfa, word: Sequence[int]) -> np.ndarray:
    tokens = [int(s) for s in word]
    for symbol in tokens:
        dfa._check_symbol(symbol)
    return np.eye(dfa.num_symbols)[tokens].reshape(len(tokens), dfa.num_symbols)


def rnn_ssm_trajectory(weights: RnnSsmWeights, dfa: Dfa, word: Sequence[int]) -> list[int]:
    """Decoded states after each word symbol."""
    if len(word) == 0:
        return []
    states = rnn_ssm_forward(
        weights.A,
        weights.B,
        rnn_ssm_inputs(dfa, word),
        activation=weights.activation,
        initial_state=weights.initial_state,
    )
    return [int(q) for q in weights.decode(states)]


# Verification


@dataclass(frozen=True)
class WordSample:
    """
    Which words to verify on.

    ``exhaustive`` enumerates every word of length 0..max_length; ``random``
    draws ``count`` words with lengths uniform in 1..max_length.
    """

    mode: Literal["exhaustive", "random"] = "random"
    max_length: int = 16
    count: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exhaustive", "random"):
            raise ValueError(f"Unknown word sample mode: {self.mode!r}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be >= 1, got {self.max_length}")

    def words(self, num_symbols: int) -> Iterator[tuple[int, ...]]:
        if self.mode == "exhaustive":
            for length in range(self.max_length + 1):
                yield from itertools.product(range(num_symbols), repeat=length)
            return

        rng = np.random.default_rng(self.seed)
        for _ in range(self.count):
            length = int(rng.integers(1, self.max_length + 1))
            yield tuple(int(s) for s in rng.integers(0, num_symbols, size=length))


@dataclass(frozen=True)
class Mismatch:
    word: tuple[int, ...]
    expected: tuple[int, ...]
    actual: tuple[int, ...]


@dataclass
class VerificationReport:
    kind: ConstructionKind
    label: str
    words_tested: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def verify_construction(
    kind: ConstructionKind,
    dfa: Dfa,
    sample: WordSample,
    model: Optional[SsmLayerSpec | RnnSsmWeights] = None,
    label: str = "",
) -> VerificationReport:
    """
    Run a compiled model and the DFA side by side and compare state trajectories.

    Args:
        kind: ``ids4`` or ``rnn-ssm``
        dfa: The reference automaton
        sample: Words to test
        model: Pre-built model (compiled from ``dfa`` when omitted)
        label: Name shown in reports, e.g. the group id

    Returns:
        VerificationReport listing every mismatching word
    """
    if kind == "ids4":
        model = model if model is not None else dfa_to_ids4(dfa)
        table = ids4_step_table(model, dfa)
        trajectory = lambda word: ids4_trajectory(model, dfa, word, table)
    elif kind == "rnn-ssm":
        model = model if model is not None else dfa_to_rnn_ssm(dfa)
        trajectory = lambda word: rnn_ssm_trajectory(model, dfa, word)
    else:
        raise ValueError(f"Unknown construction kind: {kind!r}")

    report = VerificationReport(kind=kind, label=label)
    for word in sample.words(dfa.num_symbols):
        expected = tuple(run_dfa(dfa, word))
        actual = tuple(trajectory(word))
        report.words_tested += 1
        if actual != expected:
            report.mismatches.append(Mismatch(word=tuple(word), expected=expected, actual=actual))
            logger.debug(f"{kind} mismatch on {label or 'dfa'} word {word}")

    logger.info(
        f"Verified {kind} on {label or 'dfa'}: {report.words_tested} words, "
        f"{len(report.mismatches)} mismatches"
    )
    return report
