"""Sequence-tagging model families built on the autodiff engine."""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
from loguru import logger

import autodiff as ad
from algebra import FiniteGroup
from autodiff import Tensor
from config import ExperimentConfig
from constructions import (
    dfa_to_ids4,
    dfa_to_rnn_ssm,
    group_to_dfa,
    ids4_step_table,
    ids4_trajectory,
    rnn_ssm_trajectory,
)


def _normal(rng: np.random.Generator, shape, std: float, name: str) -> Tensor:
    return ad.tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)


def _zeros(shape, name: str) -> Tensor:
    return ad.tensor(np.zeros(shape), requires_grad=True, name=name)


class Mixer(ABC):
    """Sequence mixer mapping (batch, n, d_model) to (batch, n, output_dim)."""

    output_dim: int

    @abstractmethod
    def parameters(self) -> list[Tensor]: ...

    @abstractmethod
    def __call__(self, x: Tensor) -> Tensor: ...


class RnnMixer(Mixer):
    """``s_t = tanh(W_in x_t + W_h s_{t-1} + b)``."""

    def __init__(self, d_model: int, d_state: int, rng: np.random.Generator):
        self.w_in = _normal(rng, (d_model, d_state), 1.0 / np.sqrt(d_model), "rnn.w_in")
        self.w_h = _normal(rng, (d_state, d_state), 1.0 / np.sqrt(d_state), "rnn.w_h")
        self.bias = _zeros(d_state, "rnn.bias")
        self.output_dim = d_state

    def parameters(self) -> list[Tensor]:
        return [self.w_in, self.w_h, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        driven = ad.matmul(x, self.w_in) + self.bias
        state = ad.tensor(np.zeros((x.shape[0], self.output_dim)))
        outputs = []
        for t in range(x.shape[1]):
            state = ad.tanh(ad.select(driven, t, axis=1) + ad.matmul(state, self.w_h))
            outputs.append(state)
        return ad.stack(outputs, axis=1)


class ConstantSsmMixer(Mixer):
    """Linear recurrence with one input-independent transition ``h_t = A h_{t-1} + B x_t``."""

    def __init__(self, d_model: int, d_state: int, rng: np.random.Generator):
        init = 0.9 * np.eye(d_state) + rng.normal(0.0, 0.01, size=(d_state, d_state))
        self.transition = ad.tensor(init, requires_grad=True, name="s4.A")
        self.w_in = _normal(rng, (d_model, d_state), 1.0 / np.sqrt(d_model), "s4.B")
        self.output_dim = d_state

    def parameters(self) -> list[Tensor]:
        return [self.transition, self.w_in]

    def __call__(self, x: Tensor) -> Tensor:
        driven = ad.matmul(x, self.w_in)
        state = ad.tensor(np.zeros((x.shape[0], self.output_dim)))
        transition_t = ad.transpose(self.transition)
        outputs = []
        for t in range(x.shape[1]):
            state = ad.matmul(state, transition_t) + ad.select(driven, t, axis=1)
            outputs.append(state)
        return ad.stack(outputs, axis=1)


class SelectiveSsmMixer(Mixer):
    """
    Diagonal selective recurrence with a per-channel state of N entries.

    ``δ_t = softplus(W_δ x_t + b_δ)``; ``Ā_t = exp(δ_t A)`` elementwise with
    ``A = −exp(A_log)``; input enters as ``δ_t · B_t · x_t``; the output is
    ``C_t · h_t + D ⊙ x_t`` per channel.
    """

    def __init__(self, d_model: int, state_dim: int, rng: np.random.Generator):
        self.state_dim = state_dim
        a_init = np.log(np.tile(np.arange(1, state_dim + 1, dtype=float), (d_model, 1)))
        self.a_log = ad.tensor(a_init, requires_grad=True, name="mamba.a_log")
        self.w_delta = _normal(rng, (d_model, d_model), 1.0 / np.sqrt(d_model), "mamba.w_delta")
        self.delta_bias = ad.tensor(
            np.log(np.expm1(rng.uniform(0.001, 0.1, size=d_model))), requires_grad=True, name="mamba.delta_bias"
        )
        self.w_b = _normal(rng, (d_model, state_dim), 1.0 / np.sqrt(d_model), "mamba.w_b")
        self.w_c = _normal(rng, (d_model, state_dim), 1.0 / np.sqrt(d_model), "mamba.w_c")
        self.skip = ad.tensor(np.ones(d_model), requires_grad=True, name="mamba.D")
        self.output_dim = d_model

    def parameters(self) -> list[Tensor]:
        return [self.a_log, self.w_delta, self.delta_bias, self.w_b, self.w_c, self.skip]

    def __call__(self, x: Tensor) -> Tensor:
        batch, n, d = x.shape
        N = self.state_dim

        delta = ad.softplus(ad.matmul(x, self.w_delta) + self.delta_bias)
        b_all = ad.matmul(x, self.w_b)
        c_all = ad.matmul(x, self.w_c)
        a = -ad.exp(self.a_log)

        state = ad.tensor(np.zeros((batch, d, N)))
        outputs = []
        for t in range(n):
            delta_t = ad.select(delta, t, axis=1)
            x_t = ad.select(x, t, axis=1)
            decay = ad.exp(ad.reshape(delta_t, (batch, d, 1)) * a)
            drive = ad.reshape(delta_t * x_t, (batch, d, 1)) * ad.reshape(ad.select(b_all, t, axis=1), (batch, 1, N))
            state = decay * state + drive
            readout = ad.sum(state * ad.reshape(ad.select(c_all, t, axis=1), (batch, 1, N)), axis=-1)
            outputs.append(readout + x_t * self.skip)
        return ad.stack(outputs, axis=1)


class Ids4Mixer(Mixer):
    """
    Input-dependent full transition ``h_t = π_A(x_t) h_{t-1} + B x_t``.

    ``π_A`` is affine with bias ``I`` and weights drawn so that for
    unit-variance inputs ``π_A(x)`` is ``I + N(0, σ²)`` entrywise.
    """

    def __init__(self, d_model: int, d_state: int, sigma: float, rng: np.random.Generator):
        self.d_state = d_state
        self.w_a = _normal(rng, (d_model, d_state * d_state), sigma / np.sqrt(d_model), "ids4.w_a")
        self.bias_a = ad.tensor(np.eye(d_state).ravel(), requires_grad=True, name="ids4.bias_a")
        self.w_in = _normal(rng, (d_model, d_state), 1.0 / np.sqrt(d_model), "ids4.B")
        self.output_dim = d_state

    def parameters(self) -> list[Tensor]:
        return [self.w_a, self.bias_a, self.w_in]

    def __call__(self, x: Tensor) -> Tensor:
        batch, n, _ = x.shape
        d = self.d_state

        transitions = ad.matmul(x, self.w_a) + self.bias_a
        driven = ad.matmul(x, self.w_in)

        state = ad.tensor(np.zeros((batch, d, 1)))
        outputs = []
        for t in range(n):
            a_t = ad.reshape(ad.select(transitions, t, axis=1), (batch, d, d))
            state = ad.matmul(a_t, state) + ad.reshape(ad.select(driven, t, axis=1), (batch, d, 1))
            outputs.append(ad.reshape(state, (batch, d)))
        return ad.stack(outputs, axis=1)


class AttentionMixer(Mixer):
    def __init__(self, d_model: int, rng: np.random.Generator):
        std = 1.0 / np.sqrt(d_model)
        self.w_query = _normal(rng, (d_model, d_model), std, "attn.q")
        self.w_key = _normal(rng, (d_model, d_model), std, "attn.k")
        self.w_value = _normal(rng, (d_model, d_model), std, "attn.v")
        self.output_dim = d_model

    def parameters(self) -> list[Tensor]:
        return [self.w_query, self.w_key, self.w_value]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.causal_single_head_attention(x, self.w_query, self.w_key, self.w_value)


class Block:
    """``out = x + act(W · mixer(norm(x)) + b)``, with the norm and residual configurable."""

    def __init__(
        self,
        mixer: Mixer,
        d_model: int,
        nonlinearity: str,
        norm_placement: str,
        residual: bool,
        rng: np.random.Generator,
    ):
        self.mixer = mixer
        self.projection = _normal(rng, (mixer.output_dim, d_model), 1.0 / np.sqrt(mixer.output_dim), "block.proj")
        self.bias = _zeros(d_model, "block.bias")
        self.activation = ad.ACTIVATIONS[nonlinearity]
        self.norm_placement = norm_placement
        self.residual = residual

    def parameters(self) -> list[Tensor]:
        return self.mixer.parameters() + [self.projection, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        z = ad.layer_norm(x) if self.norm_placement == "pre" else x
        z = self.activation(ad.matmul(self.mixer(z), self.projection) + self.bias)
        out = x + z if self.residual else z
        return ad.layer_norm(out) if self.norm_placement == "post" else out


class Tagger(ABC):
    """Maps token batches (batch, n) to per-position label predictions."""

    family: str

    @abstractmethod
    def predict(self, tokens: np.ndarray) -> np.ndarray: ...

    def parameters(self) -> list[Tensor]:
        return []


class SequenceTagger(Tagger):
    """Embedding, a stack of blocks and a linear head over group elements."""

    def __init__(
        self,
        family: str,
        blocks: list[Block],
        vocab_size: int,
        num_labels: int,
        d_model: int,
        norm_placement: str,
        rng: np.random.Generator,
        max_len: Optional[int] = None,
    ):
        self.family = family
        self.blocks = blocks
        self.norm_placement = norm_placement
        self.embedding = _normal(rng, (vocab_size, d_model), 1.0, "embedding")
        self.positional = _normal(rng, (max_len, d_model), 0.1, "positional") if max_len else None
        self.head = _normal(rng, (d_model, num_labels), 1.0 / np.sqrt(d_model), "head")
        self.head_bias = _zeros(num_labels, "head.bias")

    def parameters(self) -> list[Tensor]:
        params = [self.embedding, self.head, self.head_bias]
        if self.positional is not None:
            params.append(self.positional)
        for block in self.blocks:
            params.extend(block.parameters())
        return params

    def forward(self, tokens: np.ndarray) -> Tensor:
        """Logits of shape (batch, n, num_labels)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        h = ad.embedding_lookup(self.embedding, tokens)

        if self.positional is not None:
            n = tokens.shape[1]
            if n > self.positional.shape[0]:
                raise ValueError(f"Sequence of {n} exceeds {self.positional.shape[0]} learned positions")
            h = h + ad.embedding_lookup(self.positional, np.arange(n))

        for block in self.blocks:
            h = block(h)
        if self.norm_placement == "pre":
            h = ad.layer_norm(h)

        return ad.matmul(h, self.head) + self.head_bias

    def predict(self, tokens: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.forward(tokens).data.argmax(axis=-1)


class ExactTagger(Tagger):
    """
    Compiled automaton for a group; predictions are exact prefix products.

    ``ids4-exact`` expects each row to start with the BOS token (predicted as
    the identity); ``rnn-ssm-exact`` reads raw words.
    """

    def __init__(self, family: str, group: FiniteGroup, bos_token: Optional[int] = None):
        self.family = family
        self.group = group
        self.bos_token = bos_token
        self.dfa = group_to_dfa(group)

        if family == "ids4-exact":
            if bos_token is None:
                raise ValueError("ids4-exact needs a BOS token")
            self.model = dfa_to_ids4(self.dfa)
            self.table = ids4_step_table(self.model, self.dfa)
        elif family == "rnn-ssm-exact":
            self.model = dfa_to_rnn_ssm(self.dfa)
        else:
            raise ValueError(f"Not an exact family: {family!r}")

    def _trajectory(self, word: list[int]) -> list[int]:
        if self.family == "ids4-exact":
            return ids4_trajectory(self.model, self.dfa, word, self.table)
        return rnn_ssm_trajectory(self.model, self.dfa, word)

    def predict(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.int64)
        predictions = np.empty_like(tokens)
        for row, word in enumerate(tokens):
            word = [int(t) for t in word]
            prefix = []
            if self.family == "ids4-exact":
                if word[0] != self.bos_token:
                    raise ValueError("ids4-exact rows must start with the BOS token")
                prefix, word = [self.group.identity], word[1:]

            # right padding uses tokens outside the group; those positions predict the identity
            valid = next((i for i, t in enumerate(word) if t >= self.group.order), len(word))
            padding = [self.group.identity] * (len(word) - valid)
            predictions[row] = prefix + self._trajectory(word[:valid]) + padding
        return predictions


def build_model(
    family: str,
    depth: int,
    group: Optional[FiniteGroup],
    config: ExperimentConfig,
    seed: int,
    max_len: int,
    bos_token: Optional[int] = None,
    vocab_size: Optional[int] = None,
    num_labels: Optional[int] = None,
) -> Tagger:
    """
    Construct a tagger of the given family.

    Args:
        family: A model family name
        depth: Number of blocks
        group: Group whose elements are the tokens and labels; None for the indexing tasks
        config: Widths, init scale and block layout
        seed: Initialization seed
        max_len: Longest input row (learned positions for the transformer)
        bos_token: Token id of ``$`` when inputs carry one
        vocab_size: Input tokens, including ``$`` (default: group order + 1)
        num_labels: Output classes (default: group order)

    Returns:
        The model
    """
    if family in ("ids4-exact", "rnn-ssm-exact"):
        if group is None:
            raise ValueError(f"{family} compiles a group automaton and needs a group")
        return ExactTagger(family, group, bos_token)

    if group is None and (vocab_size is None or num_labels is None):
        raise ValueError("Without a group, vocab_size and num_labels are required")
    vocab_size = vocab_size if vocab_size is not None else group.order + 1
    num_labels = num_labels if num_labels is not None else group.order

    rng = np.random.default_rng(seed)
    d_model = config.d_model

    def make_mixer() -> Mixer:
        match family:
            case "rnn":
                return RnnMixer(d_model, config.d_state, rng)
            case "s4-const":
                return ConstantSsmMixer(d_model, config.d_state, rng)
            case "mamba-diag":
                return SelectiveSsmMixer(d_model, config.mamba_state_dim, rng)
            case "ids4":
                return Ids4Mixer(d_model, config.d_state, config.ids4_sigma, rng)
            case "transformer":
                return AttentionMixer(d_model, rng)
        raise ValueError(f"Unknown model family: {family!r}")

    blocks = [
        Block(make_mixer(), d_model, config.nonlinearity, config.norm_placement, config.residual, rng)
        for _ in range(depth)
    ]
    model = SequenceTagger(
        family=family,
        blocks=blocks,
        vocab_size=vocab_size,
        num_labels=num_labels,
        d_model=d_model,
        norm_placement=config.norm_placement,
        rng=rng,
        max_len=max_len if family == "transformer" else None,
    )

    count = sum(p.size for p in model.parameters())
    logger.debug(f"Built {family} with depth {depth}: {count} parameters")
    return model
