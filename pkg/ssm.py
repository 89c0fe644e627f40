"""
Generalized linear SSM layers.

A layer maps inputs ``x_1..x_n`` (each of dimension k) to states ``h_i`` (dimension
d) and outputs ``y_i`` via

    h_i = Ā_i h_{i-1} + B̄_i x_i,    y_i = C_i h_i + D_i x_i,    h_0 = 0

where each matrix may depend on the current input. Three evaluation forms are
provided: recurrent, convolutional (unrolled sum of cumulative transition
products) and associative scan.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from loguru import logger

from scan import ScanMode, inclusive_scan

DIAGONALIZABLE_TOLERANCE = 1e-10
LAYER_NORM_EPS = 1e-5

Activation = Literal["step", "sign"]
Nonlinearity = Literal["identity", "relu", "tanh", "sigmoid"]
NormPlacement = Literal["pre", "post", "none"]
EvaluationForm = Literal["recurrent", "convolutional", "scan"]


def _frozen(value, name: str) -> np.ndarray:
    array = np.array(value, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


def _check_shape(name: str, actual: tuple, expected: tuple) -> None:
    if tuple(actual) != tuple(expected):
        raise ValueError(f"{name} has shape {tuple(actual)}, expected {tuple(expected)}")


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class AffineMap:
    """``x ↦ weight · x + bias``; ``weight`` has shape ``(*out_shape, k)``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weight = _frozen(self.weight, "affine weight")
        bias = _frozen(self.bias, "affine bias")
        if weight.ndim < 2 or weight.shape[:-1] != bias.shape:
            raise ValueError(f"Affine weight {weight.shape} does not match bias {bias.shape}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def input_dim(self) -> int:
        return int(self.weight.shape[-1])

    @property
    def out_shape(self) -> tuple[int, ...]:
        return tuple(self.bias.shape)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        active = np.flatnonzero(x)
        # sparse inputs (one-hot tokens) only touch their own weight slices
        if 2 * active.size < x.size:
            return self.weight[..., active] @ x[active] + self.bias
        return self.weight @ x + self.bias

    @classmethod
    def constant(cls, value, input_dim: int) -> "AffineMap":
        """A map ignoring its input."""
        value = np.asarray(value, dtype=float)
        return cls(np.zeros(value.shape + (input_dim,)), value)

    @classmethod
    def linear(cls, weight) -> "AffineMap":
        weight = np.asarray(weight, dtype=float)
        return cls(weight, np.zeros(weight.shape[:-1]))


# Transition variants


@dataclass(frozen=True)
class ConstantTransition:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, "transition matrix"))


@dataclass(frozen=True)
class DiagonalSelectiveTransition:
    """S6 transition ``ā_i = exp(δ_i ⊙ a)`` with ``δ_i = softplus(δ_bias + π_δ(x_i))``."""

    a_diag: np.ndarray
    delta_bias: np.ndarray
    pi_delta: AffineMap

    def __post_init__(self):
        object.__setattr__(self, "a_diag", _frozen(self.a_diag, "a_diag"))
        object.__setattr__(self, "delta_bias", _frozen(self.delta_bias, "delta_bias"))
        if np.any(self.a_diag == 0):
            raise ValueError("S6 discretization needs every a_diag entry nonzero")


@dataclass(frozen=True)
class DiagonalizableTransition:
    """``Ā_i = W diag(π_a(x_i)) W⁻¹`` for a fixed eigenbasis ``W``."""

    W: np.ndarray
    W_inv: np.ndarray
    pi_a: AffineMap

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W, "W"))
        object.__setattr__(self, "W_inv", _frozen(self.W_inv, "W_inv"))
        _check_inverse_pair(self.W, self.W_inv)


@dataclass(frozen=True)
class InputDependentFullTransition:
    """IDS4 transition ``Ā_i = π_A(x_i)``, a full d×d matrix."""

    pi_A: AffineMap


@dataclass(frozen=True)
class DiagonalizableS6Transition:
    """``Ā_i = W diag(exp(δ_i ⊙ a)) W⁻¹`` with the S6 step size."""

    W: np.ndarray
    W_inv: np.ndarray
    a_diag: np.ndarray
    delta_bias: np.ndarray
    pi_delta: AffineMap

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W, "W"))
        object.__setattr__(self, "W_inv", _frozen(self.W_inv, "W_inv"))
        object.__setattr__(self, "a_diag", _frozen(self.a_diag, "a_diag"))
        object.__setattr__(self, "delta_bias", _frozen(self.delta_bias, "delta_bias"))
        _check_inverse_pair(self.W, self.W_inv)
        if np.any(self.a_diag == 0):
            raise ValueError("S6 discretization needs every a_diag entry nonzero")


Transition = Union[
    ConstantTransition,
    DiagonalSelectiveTransition,
    DiagonalizableTransition,
    InputDependentFullTransition,
    DiagonalizableS6Transition,
]


def _check_inverse_pair(W: np.ndarray, W_inv: np.ndarray) -> None:
    if W.ndim != 2 or W.shape != W_inv.shape or W.shape[0] != W.shape[1]:
        raise ValueError(f"W {W.shape} and W_inv {W_inv.shape} must be square and equal-shaped")
    error = np.max(np.abs(W @ W_inv - np.eye(W.shape[0])))
    if error > DIAGONALIZABLE_TOLERANCE:
        raise ValueError(f"W · W_inv deviates from identity by {error:.3e}")


# Input, output and passthrough maps


@dataclass(frozen=True)
class FixedInput:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, "input matrix"))


@dataclass(frozen=True)
class AffineInput:
    pi_B: AffineMap


@dataclass(frozen=True)
class S6Input:
    """``B̄_i`` from ``B_i = π_B(x_i)`` by zero-order-hold discretization."""

    pi_B: AffineMap


InputMap = Union[FixedInput, AffineInput, S6Input]


@dataclass(frozen=True)
class FixedOutput:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, "output matrix"))


@dataclass(frozen=True)
class AffineOutput:
    pi_C: AffineMap


OutputMap = Union[FixedOutput, AffineOutput]

IDENTITY = "identity"


@dataclass(frozen=True)
class SsmLayerSpec:
    """
    Parameters of one generalized linear SSM layer.

    ``passthrough`` is either the string ``"identity"`` or a constant k×k matrix.
    """

    input_dim: int
    state_dim: int
    transition: Transition
    input_map: InputMap
    output_map: OutputMap
    passthrough: Union[str, np.ndarray] = IDENTITY

    def __post_init__(self):
        k, d = self.input_dim, self.state_dim
        if k < 1 or d < 1:
            raise ValueError(f"Layer dims must be positive, got k={k}, d={d}")

        self._validate_transition(k, d)

        match self.input_map:
            case FixedInput(matrix=B):
                _check_shape("B̄", B.shape, (d, k))
            case AffineInput(pi_B=pi) | S6Input(pi_B=pi):
                _check_shape("π_B output", pi.out_shape, (d, k))
                _check_shape("π_B input", (pi.input_dim,), (k,))
            case _:
                raise ValueError(f"Unsupported input map: {type(self.input_map).__name__}")

        if isinstance(self.input_map, S6Input) and not isinstance(
            self.transition, (DiagonalSelectiveTransition, DiagonalizableS6Transition)
        ):
            raise ValueError("S6 input discretization needs an S6 transition")

        match self.output_map:
            case FixedOutput(matrix=C):
                _check_shape("C", C.shape, (k, d))
            case AffineOutput(pi_C=pi):
                _check_shape("π_C output", pi.out_shape, (k, d))
                _check_shape("π_C input", (pi.input_dim,), (k,))
            case _:
                raise ValueError(f"Unsupported output map: {type(self.output_map).__name__}")

        if isinstance(self.passthrough, str):
            if self.passthrough != IDENTITY:
                raise ValueError(f"Unknown passthrough: {self.passthrough!r}")
        else:
            D = _frozen(self.passthrough, "D")
            _check_shape("D", D.shape, (k, k))
            object.__setattr__(self, "passthrough", D)

    def _validate_transition(self, k: int, d: int) -> None:
        t = self.transition
        match t:
            case ConstantTransition():
                _check_shape("Ā", t.matrix.shape, (d, d))
            case DiagonalSelectiveTransition():
                _check_shape("a_diag", t.a_diag.shape, (d,))
                _check_shape("delta_bias", t.delta_bias.shape, (d,))
                _check_shape("π_δ output", t.pi_delta.out_shape, (d,))
                _check_shape("π_δ input", (t.pi_delta.input_dim,), (k,))
            case DiagonalizableTransition():
                _check_shape("W", t.W.shape, (d, d))
                _check_shape("π_a output", t.pi_a.out_shape, (d,))
                _check_shape("π_a input", (t.pi_a.input_dim,), (k,))
            case InputDependentFullTransition():
                _check_shape("π_A output", t.pi_A.out_shape, (d, d))
                _check_shape("π_A input", (t.pi_A.input_dim,), (k,))
            case DiagonalizableS6Transition():
                _check_shape("W", t.W.shape, (d, d))
                _check_shape("a_diag", t.a_diag.shape, (d,))
                _check_shape("delta_bias", t.delta_bias.shape, (d,))
                _check_shape("π_δ output", t.pi_delta.out_shape, (d,))
                _check_shape("π_δ input", (t.pi_delta.input_dim,), (k,))
            case _:
                raise ValueError(f"Unsupported transition: {type(t).__name__}")

    @property
    def variant(self) -> str:
        return TRANSITION_VARIANTS[type(self.transition)]


TRANSITION_VARIANTS = {
    ConstantTransition: "constant",
    DiagonalSelectiveTransition: "diagonal-selective",
    DiagonalizableTransition: "diagonalizable",
    InputDependentFullTransition: "input-dependent-full",
    DiagonalizableS6Transition: "diagonalizable-s6",
}


@dataclass(frozen=True)
class S6Params:
    """Mamba-style selective parameters; ``D`` is the identity."""

    a_diag: np.ndarray
    delta_bias: np.ndarray
    pi_delta: AffineMap
    pi_B: AffineMap
    pi_C: AffineMap

    def __post_init__(self):
        object.__setattr__(self, "a_diag", _frozen(self.a_diag, "a_diag"))
        object.__setattr__(self, "delta_bias", _frozen(self.delta_bias, "delta_bias"))
        if np.any(self.a_diag == 0):
            raise ValueError("S6 discretization needs every a_diag entry nonzero")

    def to_layer_spec(self) -> SsmLayerSpec:
        d = self.a_diag.shape[0]
        return SsmLayerSpec(
            input_dim=self.pi_B.input_dim,
            state_dim=d,
            transition=DiagonalSelectiveTransition(self.a_diag, self.delta_bias, self.pi_delta),
            input_map=S6Input(self.pi_B),
            output_map=AffineOutput(self.pi_C),
        )


@dataclass(frozen=True)
class StepMatrices:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class LayerTrace:
    """States ``(n, d)`` and outputs ``(n, k)`` of one layer."""

    states: np.ndarray
    outputs: np.ndarray

    def __len__(self) -> int:
        return int(self.states.shape[0])


# Per-step materialization


def _s6_step(a_diag: np.ndarray, delta_bias: np.ndarray, pi_delta: AffineMap, x: np.ndarray):
    """Return ``(ā_i, c_i)`` where ``c_i = (δ_i a)⁻¹ (ā_i − 1) δ_i = expm1(δ_i a) / a``."""
    delta = softplus(delta_bias + pi_delta(x))
    scaled = delta * a_diag
    return np.exp(scaled), np.expm1(scaled) / a_diag


def _eigenvalues(spec: SsmLayerSpec, x: np.ndarray) -> Optional[np.ndarray]:
    """Diagonal factor of Ā_i for diagonal and diagonalizable variants."""
    t = spec.transition
    match t:
        case DiagonalSelectiveTransition() | DiagonalizableS6Transition():
            return _s6_step(t.a_diag, t.delta_bias, t.pi_delta, x)[0]
        case DiagonalizableTransition():
            return t.pi_a(x)
    return None


def _eigenbasis(spec: SsmLayerSpec) -> Optional[tuple[np.ndarray, np.ndarray]]:
    t = spec.transition
    if isinstance(t, (DiagonalizableTransition, DiagonalizableS6Transition)):
        return t.W, t.W_inv
    return None


def _transition_step(spec: SsmLayerSpec, x: np.ndarray) -> np.ndarray:
    """Ā_i, as a d-vector for the diagonal-selective variant and a d×d matrix otherwise."""
    t = spec.transition
    match t:
        case ConstantTransition():
            return t.matrix
        case InputDependentFullTransition():
            return t.pi_A(x)
        case DiagonalSelectiveTransition():
            return _eigenvalues(spec, x)

    W, W_inv = _eigenbasis(spec)
    return (W * _eigenvalues(spec, x)) @ W_inv


def _input_step(spec: SsmLayerSpec, x: np.ndarray) -> np.ndarray:
    m = spec.input_map
    match m:
        case FixedInput():
            return m.matrix
        case AffineInput():
            return m.pi_B(x)

    t = spec.transition
    B = m.pi_B(x)
    _, coefficient = _s6_step(t.a_diag, t.delta_bias, t.pi_delta, x)
    if isinstance(t, DiagonalSelectiveTransition):
        return coefficient[:, None] * B
    return (t.W * coefficient) @ t.W_inv @ B


def _output_step(spec: SsmLayerSpec, x: np.ndarray) -> np.ndarray:
    m = spec.output_map
    if isinstance(m, FixedOutput):
        return m.matrix
    return m.pi_C(x)


def _passthrough(spec: SsmLayerSpec) -> np.ndarray:
    if isinstance(spec.passthrough, str):
        return np.eye(spec.input_dim)
    return spec.passthrough


def _as_vector(spec: SsmLayerSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_shape("input vector", x.shape, (spec.input_dim,))
    return x


def _as_inputs(spec: SsmLayerSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"Inputs must have shape (n, {spec.input_dim}), got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("Input sequence is empty")
    return x


def materialize_step(spec: SsmLayerSpec, x) -> StepMatrices:
    """
    Concrete ``(Ā_i, B̄_i, C_i, D_i)`` for one input vector.

    Args:
        spec: Layer specification
        x: Input vector of dimension k

    Returns:
        StepMatrices with a dense d×d transition
    """
    x = _as_vector(spec, x)
    A = _transition_step(spec, x)
    if A.ndim == 1:
        A = np.diag(A)
    return StepMatrices(A=A, B=_input_step(spec, x), C=_output_step(spec, x), D=_passthrough(spec))


def discretize_s6(params: S6Params, x) -> tuple[np.ndarray, np.ndarray]:
    """
    Zero-order-hold discretization of an S6 step.

    ``Ā_i = exp(δ_i A)`` and ``B̄_i = (δ_i A)⁻¹ (Ā_i − I) δ_i B_i`` with diagonal
    ``A`` and per-channel ``δ_i = softplus(δ_bias + π_δ(x_i))``.

    Returns:
        ``(Ā_i, B̄_i)`` with Ā_i as a diagonal d×d matrix
    """
    x = np.asarray(x, dtype=float)
    _check_shape("input vector", x.shape, (params.pi_B.input_dim,))

    a_bar, coefficient = _s6_step(params.a_diag, params.delta_bias, params.pi_delta, x)
    return np.diag(a_bar), coefficient[:, None] * params.pi_B(x)


def _readout(spec: SsmLayerSpec, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = _output_step(spec, x) @ h
    if isinstance(spec.passthrough, str):
        return y + x
    return y + spec.passthrough @ x


def _readout_all(spec: SsmLayerSpec, states: np.ndarray, x: np.ndarray) -> LayerTrace:
    outputs = np.stack([_readout(spec, h, xi) for h, xi in zip(states, x)])
    return LayerTrace(states=states, outputs=outputs)


# Evaluation forms


def recurrent_forward(spec: SsmLayerSpec, inputs) -> LayerTrace:
    """
    Evaluate ``h_i = Ā_i h_{i-1} + B̄_i x_i`` left to right from ``h_0 = 0``.

    Args:
        spec: Layer specification
        inputs: Array of shape (n, k)

    Returns:
        LayerTrace with n states and n outputs
    """
    x = _as_inputs(spec, inputs)
    h = np.zeros(spec.state_dim)
    states = np.empty((x.shape[0], spec.state_dim))

    for i, xi in enumerate(x):
        A = _transition_step(spec, xi)
        h = (A * h if A.ndim == 1 else A @ h) + _input_step(spec, xi) @ xi
        states[i] = h

    return _readout_all(spec, states, x)


def matrix_power_by_squaring(A, z: int) -> np.ndarray:
    """``A^z`` for z >= 0 by repeated squaring."""
    A = np.asarray(A, dtype=float)
    if z < 0:
        raise ValueError(f"Matrix power exponent must be >= 0, got {z}")

    result = np.eye(A.shape[0])
    base = A
    while z:
        if z & 1:
            result = result @ base
        base = base @ base
        z >>= 1
    return result


def transition_product(spec: SsmLayerSpec, inputs, j: int, i: int) -> np.ndarray:
    """
    Cumulative transition ``Ā_i Ā_{i-1} ... Ā_{j+1}`` (1-based, greatest index leftmost).

    The empty product (``j == i``) is the identity.
    """
    x = _as_inputs(spec, inputs)
    if not 0 <= j <= i <= x.shape[0]:
        raise ValueError(f"Need 0 <= j <= i <= {x.shape[0]}, got j={j}, i={i}")

    product = np.eye(spec.state_dim)
    for step in range(j, i):
        A = _transition_step(spec, x[step])
        product = (A[:, None] * product) if A.ndim == 1 else A @ product
    return product


def convolutional_forward(spec: SsmLayerSpec, inputs, factored: bool = True) -> LayerTrace:
    """
    Evaluate the unrolled sum ``h_i = Σ_j (∏_{k=j+1}^{i} Ā_k) B̄_j x_j``.

    Constant transitions use matrix powers ``Ā^(i−j)``. Diagonal and diagonalizable
    transitions use elementwise cumulative products of the diagonal factors,
    conjugated by ``W`` when present, unless ``factored`` is False.
    """
    x = _as_inputs(spec, inputs)
    n, d = x.shape[0], spec.state_dim
    drive = np.stack([_input_step(spec, xi) @ xi for xi in x])
    states = np.zeros((n, d))

    if isinstance(spec.transition, ConstantTransition):
        A = spec.transition.matrix
        powers = [matrix_power_by_squaring(A, z) for z in range(n)]
        for i in range(n):
            states[i] = sum(powers[i - j] @ drive[j] for j in range(i + 1))
        return _readout_all(spec, states, x)

    eigenvalues = [_eigenvalues(spec, xi) for xi in x]
    if factored and eigenvalues[0] is not None:
        basis = _eigenbasis(spec)
        projected = drive if basis is None else drive @ basis[1].T
        for i in range(n):
            running = np.ones(d)
            acc = np.zeros(d)
            for j in range(i, -1, -1):
                acc += running * projected[j]
                running = running * eigenvalues[j]
            states[i] = acc if basis is None else basis[0] @ acc
        return _readout_all(spec, states, x)

    transitions = [_transition_step(spec, xi) for xi in x]
    transitions = [np.diag(A) if A.ndim == 1 else A for A in transitions]
    for i in range(n):
        running = np.eye(d)
        acc = np.zeros(d)
        for j in range(i, -1, -1):
            acc += running @ drive[j]
            running = running @ transitions[j]
        states[i] = acc
    return _readout_all(spec, states, x)


def scan_forward(
    spec: SsmLayerSpec,
    inputs,
    mode: ScanMode = "tree",
    max_workers: Optional[int] = None,
) -> LayerTrace:
    """
    Evaluate every state by an inclusive prefix scan over ``(Ā_i, B̄_i x_i)``.

    Args:
        spec: Layer specification
        inputs: Array of shape (n, k)
        mode: ``tree`` or ``sequential``
        max_workers: Thread pool size for tree levels

    Returns:
        LayerTrace equal to recurrent_forward up to rounding
    """
    x = _as_inputs(spec, inputs)
    elements = [(_transition_step(spec, xi), _input_step(spec, xi) @ xi) for xi in x]
    prefixes = inclusive_scan(elements, mode=mode, max_workers=max_workers)
    states = np.stack([offset for _, offset in prefixes])
    return _readout_all(spec, states, x)


FORMS = {
    "recurrent": recurrent_forward,
    "convolutional": convolutional_forward,
    "scan": scan_forward,
}


def evaluate(spec: SsmLayerSpec, inputs, form: EvaluationForm = "recurrent") -> LayerTrace:
    if form not in FORMS:
        raise ValueError(f"Unknown evaluation form: {form!r}")
    return FORMS[form](spec, inputs)


# RNN-SSM


def apply_activation(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == "step":
        return (z > 0).astype(float)
    if activation == "sign":
        return np.sign(z)
    raise ValueError(f"Unknown RNN-SSM activation: {activation!r}")


def rnn_ssm_forward(
    A,
    B,
    inputs,
    activation: Activation = "step",
    initial_state=None,
) -> np.ndarray:
    """
    Nonlinear recurrence ``h_i = act(Ā h_{i-1} + B̄ x_i)``.

    ``step`` maps to {0, 1} (1 iff z > 0); ``sign`` maps to {−1, 0, 1}.

    Args:
        A: d×d transition
        B: d×k input matrix
        inputs: Array of shape (n, k)
        activation: ``step`` or ``sign``
        initial_state: h_0, zero when omitted

    Returns:
        States of shape (n, d)
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    x = np.asarray(inputs, dtype=float)

    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Ā must be square, got {A.shape}")
    d = A.shape[0]
    if B.ndim != 2 or B.shape[0] != d:
        raise ValueError(f"B̄ must have shape ({d}, k), got {B.shape}")
    if x.ndim != 2 or x.shape[1] != B.shape[1]:
        raise ValueError(f"Inputs must have shape (n, {B.shape[1]}), got {x.shape}")

    h = np.zeros(d) if initial_state is None else np.asarray(initial_state, dtype=float)
    _check_shape("initial state", h.shape, (d,))

    states = np.empty((x.shape[0], d))
    for i, xi in enumerate(x):
        active = np.flatnonzero(h)
        h = apply_activation(A[:, active] @ h[active] + B @ xi, activation)
        states[i] = h
    return states


# Stacks


def layer_norm(x: np.ndarray, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Normalize each row to zero mean and unit variance."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


NONLINEARITIES = {
    "identity": lambda z: z,
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
}


@dataclass(frozen=True)
class StackLayer:
    """One SSM layer followed by an affine projection and a pointwise nonlinearity."""

    spec: SsmLayerSpec
    projection: np.ndarray
    projection_bias: Optional[np.ndarray] = None
    nonlinearity: Nonlinearity = "relu"

    def __post_init__(self):
        projection = _frozen(self.projection, "projection")
        if projection.ndim != 2 or projection.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"Projection must have shape (k_out, {self.spec.input_dim}), got {projection.shape}"
            )
        object.__setattr__(self, "projection", projection)

        if self.projection_bias is not None:
            bias = _frozen(self.projection_bias, "projection bias")
            _check_shape("projection bias", bias.shape, (projection.shape[0],))
            object.__setattr__(self, "projection_bias", bias)

        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"Unknown nonlinearity: {self.nonlinearity!r}")

    @property
    def output_dim(self) -> int:
        return int(self.projection.shape[0])

    def project(self, y: np.ndarray) -> np.ndarray:
        z = y @ self.projection.T
        if self.projection_bias is not None:
            z = z + self.projection_bias
        return NONLINEARITIES[self.nonlinearity](z)


@dataclass(frozen=True)
class SsmStack:
    layers: tuple[StackLayer, ...]
    norm_placement: NormPlacement = "pre"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("A stack needs at least one layer")
        if self.norm_placement not in ("pre", "post", "none"):
            raise ValueError(f"Unknown norm placement: {self.norm_placement!r}")
        for depth, (lower, upper) in enumerate(zip(self.layers, self.layers[1:]), start=1):
            if lower.output_dim != upper.spec.input_dim:
                raise ValueError(
                    f"Layer {depth} emits {lower.output_dim} features but layer "
                    f"{depth + 1} expects {upper.spec.input_dim}"
                )


def stack_forward(model: SsmStack, inputs, form: EvaluationForm = "recurrent") -> np.ndarray:
    """
    Run inputs through every layer of a stack.

    Args:
        model: The stack
        inputs: Array of shape (n, k_0)
        form: Evaluation form used for each layer

    Returns:
        Final features of shape (n, k_final)
    """
    h = np.asarray(inputs, dtype=float)
    for layer in model.layers:
        if model.norm_placement == "pre":
            h = layer.project(evaluate(layer.spec, layer_norm(h), form).outputs)
        elif model.norm_placement == "post":
            h = layer_norm(layer.project(evaluate(layer.spec, h, form).outputs))
        else:
            h = layer.project(evaluate(layer.spec, h, form).outputs)

    logger.debug(f"Stack of {len(model.layers)} layers produced features {h.shape}")
    return h


# Random specs


def _contractive(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    M = rng.normal(size=(d, d))
    return M * (radius / np.linalg.norm(M, 2))


def random_layer_spec(
    variant: str,
    input_dim: int,
    state_dim: int,
    rng: np.random.Generator,
) -> SsmLayerSpec:
    """
    A random, well-conditioned layer of the named variant.

    Transitions stay close to contractive for inputs in [-1, 1] so that long
    sequences do not overflow.
    """
    k, d = input_dim, state_dim
    output_map = AffineOutput(AffineMap(0.2 * rng.normal(size=(k, d, k)), rng.normal(size=(k, d))))
    input_map: InputMap = AffineInput(
        AffineMap(0.2 * rng.normal(size=(d, k, k)), rng.normal(size=(d, k)))
    )

    def s6_pieces():
        a = -rng.uniform(0.1, 1.0, size=d)
        bias = rng.normal(size=d)
        pi_delta = AffineMap(0.3 * rng.normal(size=(d, k)), np.zeros(d))
        return a, bias, pi_delta

    def basis():
        W = np.eye(d) + 0.3 * rng.normal(size=(d, d)) / np.sqrt(d)
        return W, np.linalg.inv(W)

    match variant:
        case "constant":
            transition = ConstantTransition(_contractive(rng, d, 0.95))
            input_map = FixedInput(rng.normal(size=(d, k)))
        case "diagonal-selective":
            transition = DiagonalSelectiveTransition(*s6_pieces())
            input_map = S6Input(AffineMap(0.2 * rng.normal(size=(d, k, k)), rng.normal(size=(d, k))))
        case "diagonalizable":
            W, W_inv = basis()
            pi_a = AffineMap(0.1 * rng.normal(size=(d, k)) / k, rng.uniform(-0.8, 0.8, size=d))
            transition = DiagonalizableTransition(W, W_inv, pi_a)
        case "input-dependent-full":
            pi_A = AffineMap(
                np.stack([_contractive(rng, d, 0.3 / k) for _ in range(k)], axis=-1),
                _contractive(rng, d, 0.6),
            )
            transition = InputDependentFullTransition(pi_A)
        case "diagonalizable-s6":
            W, W_inv = basis()
            transition = DiagonalizableS6Transition(W, W_inv, *s6_pieces())
            input_map = S6Input(AffineMap(0.2 * rng.normal(size=(d, k, k)), rng.normal(size=(d, k))))
        case _:
            raise ValueError(f"Unknown transition variant: {variant!r}")

    return SsmLayerSpec(k, d, transition, input_map, output_map, passthrough=rng.normal(size=(k, k)))
