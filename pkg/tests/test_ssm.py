"""Tests for ssm module."""

from unittest.mock import patch

import numpy as np
import pytest

from ssm import (
    FORMS,
    TRANSITION_VARIANTS,
    AffineInput,
    AffineMap,
    ConstantTransition,
    DiagonalizableTransition,
    FixedInput,
    FixedOutput,
    InputDependentFullTransition,
    S6Input,
    S6Params,
    SsmLayerSpec,
    SsmStack,
    StackLayer,
    convolutional_forward,
    discretize_s6,
    evaluate,
    materialize_step,
    matrix_power_by_squaring,
    random_layer_spec,
    recurrent_forward,
    rnn_ssm_forward,
    scan_forward,
    stack_forward,
    transition_product,
)

VARIANTS = sorted(TRANSITION_VARIANTS.values())


def _random_case(rng, variant):
    k = int(rng.integers(1, 5))
    d = int(rng.integers(1, 9))
    n = int(rng.integers(1, 129))
    spec = random_layer_spec(variant, k, d, rng)
    return spec, rng.uniform(-1.0, 1.0, size=(n, k))


class TestAffineMap:
    """Test cases for AffineMap."""

    def test_sparse_path_matches_dense(self):
        """Test one-hot inputs give the same result as a dense product."""
        rng = np.random.default_rng(0)
        pi = AffineMap(rng.normal(size=(3, 4, 10)), rng.normal(size=(3, 4)))
        x = np.zeros(10)
        x[7] = 1.0

        np.testing.assert_allclose(pi(x), pi.weight @ x + pi.bias)

    def test_shape_mismatch(self):
        """Test weight and bias shapes must agree."""
        with pytest.raises(ValueError):
            AffineMap(np.zeros((3, 2)), np.zeros(4))

    def test_constant(self):
        """Test constant maps ignore their input."""
        pi = AffineMap.constant(np.eye(2), input_dim=3)

        np.testing.assert_array_equal(pi(np.array([5.0, -1.0, 2.0])), np.eye(2))


class TestLayerSpec:
    """Test cases for SsmLayerSpec validation."""

    def test_variant_names(self):
        """Test random specs report their variant."""
        rng = np.random.default_rng(0)

        for variant in VARIANTS:
            assert random_layer_spec(variant, 2, 3, rng).variant == variant

    def test_wrong_transition_shape(self):
        """Test a transition of the wrong size is rejected."""
        with pytest.raises(ValueError):
            SsmLayerSpec(2, 3, ConstantTransition(np.eye(2)), FixedInput(np.zeros((3, 2))), FixedOutput(np.zeros((2, 3))))

    def test_s6_input_needs_s6_transition(self):
        """Test ZOH input discretization requires a step size."""
        pi_B = AffineMap(np.zeros((3, 2, 2)), np.zeros((3, 2)))

        with pytest.raises(ValueError):
            SsmLayerSpec(2, 3, ConstantTransition(np.eye(3)), S6Input(pi_B), FixedOutput(np.zeros((2, 3))))

    def test_bad_eigenbasis(self):
        """Test W_inv must invert W."""
        pi_a = AffineMap(np.zeros((2, 1)), np.ones(2))

        with pytest.raises(ValueError):
            DiagonalizableTransition(np.eye(2), 2 * np.eye(2), pi_a)

    def test_unknown_passthrough(self):
        """Test passthrough strings other than identity are rejected."""
        with pytest.raises(ValueError):
            SsmLayerSpec(
                1, 1, ConstantTransition(np.eye(1)), FixedInput(np.ones((1, 1))), FixedOutput(np.ones((1, 1))), "zero"
            )

    def test_non_finite_parameters(self):
        """Test NaN parameters are rejected."""
        with pytest.raises(ValueError):
            ConstantTransition(np.array([[np.nan]]))

    def test_empty_input_sequence(self):
        """Test a zero-length input is rejected."""
        spec = random_layer_spec("constant", 2, 2, np.random.default_rng(0))

        with pytest.raises(ValueError):
            recurrent_forward(spec, np.zeros((0, 2)))

    def test_unknown_form(self):
        """Test unknown evaluation forms are rejected."""
        spec = random_layer_spec("constant", 2, 2, np.random.default_rng(0))

        with pytest.raises(ValueError):
            evaluate(spec, np.zeros((3, 2)), "fourier")


class TestRecurrentForm:
    """Test cases for the recurrent form."""

    def test_scalar_recurrence(self):
        """Test h_i = 0.5 h_{i-1} + x_i and y_i = h_i + x_i."""
        spec = SsmLayerSpec(
            1, 1, ConstantTransition([[0.5]]), FixedInput([[1.0]]), FixedOutput([[1.0]])
        )

        trace = recurrent_forward(spec, [[1.0], [0.0], [2.0]])

        np.testing.assert_allclose(trace.states[:, 0], [1.0, 0.5, 2.25])
        np.testing.assert_allclose(trace.outputs[:, 0], [2.0, 0.5, 4.25])
        assert len(trace) == 3

    def test_input_dependent_transition(self):
        """Test π_A selects a different matrix per input."""
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        weight = np.stack([swap, np.eye(2)], axis=-1)
        spec = SsmLayerSpec(
            2,
            2,
            InputDependentFullTransition(AffineMap(weight, np.zeros((2, 2)))),
            AffineInput(AffineMap.constant(np.array([[1.0, 0.0], [0.0, 0.0]]), 2)),
            FixedOutput(np.zeros((2, 2))),
        )

        trace = recurrent_forward(spec, [[0.0, 1.0], [1.0, 0.0]])

        # step 1: identity, drive 0; step 2: swap, drive e1
        np.testing.assert_allclose(trace.states[0], [0.0, 0.0])
        np.testing.assert_allclose(trace.states[1], [1.0, 0.0])


class TestFormEquivalence:
    """Test cases for agreement between evaluation forms."""

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_forms_agree(self, variant):
        """Test recurrent, convolutional and scan outputs agree on random specs."""
        rng = np.random.default_rng(VARIANTS.index(variant))

        for _ in range(100):
            spec, inputs = _random_case(rng, variant)
            reference = recurrent_forward(spec, inputs).outputs

            for form in ("convolutional", "scan"):
                np.testing.assert_allclose(
                    FORMS[form](spec, inputs).outputs, reference, rtol=1e-5, atol=1e-8
                )

    @pytest.mark.parametrize("variant", ["diagonal-selective", "diagonalizable", "diagonalizable-s6"])
    def test_unfactored_convolution(self, variant):
        """Test the dense cumulative-product path matches the factored one."""
        rng = np.random.default_rng(3)
        spec, inputs = _random_case(rng, variant)

        factored = convolutional_forward(spec, inputs)
        dense = convolutional_forward(spec, inputs, factored=False)

        np.testing.assert_allclose(dense.states, factored.states, rtol=1e-6, atol=1e-9)

    def test_constant_convolution_uses_squaring(self):
        """Test the constant convolution takes its powers from matrix_power_by_squaring."""
        rng = np.random.default_rng(5)
        spec = random_layer_spec("constant", 2, 3, rng)
        inputs = rng.uniform(-1, 1, size=(12, 2))

        with patch('ssm.matrix_power_by_squaring', wraps=matrix_power_by_squaring) as mock_power:
            trace = convolutional_forward(spec, inputs)

        assert [c.args[1] for c in mock_power.call_args_list] == list(range(12))
        np.testing.assert_allclose(trace.states, recurrent_forward(spec, inputs).states, rtol=1e-10, atol=1e-12)

    def test_sequential_scan(self):
        """Test the sequential scan mode gives the same states."""
        rng = np.random.default_rng(4)
        spec, inputs = _random_case(rng, "input-dependent-full")

        np.testing.assert_allclose(
            scan_forward(spec, inputs, mode="sequential").states,
            scan_forward(spec, inputs, mode="tree", max_workers=2).states,
            rtol=1e-10,
            atol=1e-12,
        )


class TestTransitionProducts:
    """Test cases for cumulative transition products."""

    def test_matrix_power_by_squaring(self):
        """Test repeated squaring against repeated multiplication."""
        rng = np.random.default_rng(0)
        A = rng.normal(size=(4, 4)) / 4

        expected = np.eye(4)
        for z in range(20):
            np.testing.assert_allclose(matrix_power_by_squaring(A, z), expected, rtol=1e-10, atol=1e-12)
            expected = A @ expected

    def test_negative_power(self):
        """Test negative exponents are rejected."""
        with pytest.raises(ValueError):
            matrix_power_by_squaring(np.eye(2), -1)

    def test_constant_products_are_powers(self):
        """Test ∏ Ā over a window of a constant spec equals Ā^(i−j)."""
        rng = np.random.default_rng(1)
        spec = random_layer_spec("constant", 2, 5, rng)
        inputs = rng.uniform(-1, 1, size=(40, 2))
        A = spec.transition.matrix

        for j, i in [(0, 0), (0, 40), (7, 19), (30, 31)]:
            np.testing.assert_allclose(
                transition_product(spec, inputs, j, i), matrix_power_by_squaring(A, i - j), rtol=1e-10, atol=1e-12
            )

    def test_diagonalizable_product_factorizes(self):
        """Test ∏ Ā_k = W · diag(∏ λ_k) · W_inv on random diagonalizable specs."""
        rng = np.random.default_rng(2)

        for trial in range(50):
            variant = "diagonalizable" if trial % 2 == 0 else "diagonalizable-s6"
            spec, inputs = _random_case(rng, variant)
            n = inputs.shape[0]
            j = int(rng.integers(0, n + 1))
            i = int(rng.integers(j, n + 1))

            diagonal = np.ones(spec.state_dim)
            for x in inputs[j:i]:
                step = materialize_step(spec, x).A
                diagonal *= np.diag(spec.transition.W_inv @ step @ spec.transition.W)
            t = spec.transition
            factored = (t.W * diagonal) @ t.W_inv

            np.testing.assert_allclose(transition_product(spec, inputs, j, i), factored, rtol=1e-6, atol=1e-9)

    def test_window_bounds(self):
        """Test out-of-range windows are rejected."""
        spec, inputs = _random_case(np.random.default_rng(0), "constant")

        with pytest.raises(ValueError):
            transition_product(spec, inputs, 2, 1)


class TestS6Discretization:
    """Test cases for zero-order-hold discretization."""

    def _params(self, rng, k=3, d=4):
        return S6Params(
            a_diag=-rng.uniform(0.5, 2.0, size=d),
            delta_bias=rng.normal(size=d),
            pi_delta=AffineMap(rng.normal(size=(d, k)), np.zeros(d)),
            pi_B=AffineMap(rng.normal(size=(d, k, k)), rng.normal(size=(d, k))),
            pi_C=AffineMap(rng.normal(size=(k, d, k)), rng.normal(size=(k, d))),
        )

    def test_matches_matrix_formula(self):
        """Test B̄ = (δA)⁻¹ (Ā − I) δ B with explicit matrices."""
        rng = np.random.default_rng(0)
        params = self._params(rng)
        x = rng.normal(size=3)

        A_bar, B_bar = discretize_s6(params, x)

        delta = np.logaddexp(0.0, params.delta_bias + params.pi_delta(x))
        A = np.diag(params.a_diag)
        dA = np.diag(delta) @ A
        expected_A = np.diag(np.exp(np.diag(dA)))
        expected_B = np.linalg.inv(dA) @ (expected_A - np.eye(4)) @ np.diag(delta) @ params.pi_B(x)

        np.testing.assert_allclose(A_bar, expected_A, rtol=1e-12)
        np.testing.assert_allclose(B_bar, expected_B, rtol=1e-9, atol=1e-12)

    def test_layer_spec_uses_same_step(self):
        """Test the S6 layer materializes the discretized matrices."""
        rng = np.random.default_rng(1)
        params = self._params(rng)
        x = rng.normal(size=3)

        step = materialize_step(params.to_layer_spec(), x)
        A_bar, B_bar = discretize_s6(params, x)

        np.testing.assert_allclose(step.A, A_bar)
        np.testing.assert_allclose(step.B, B_bar)
        np.testing.assert_allclose(step.D, np.eye(3))

    def test_zero_a_rejected(self):
        """Test a zero diagonal entry cannot be discretized."""
        rng = np.random.default_rng(2)
        p = self._params(rng)

        with pytest.raises(ValueError):
            S6Params(np.zeros(4), p.delta_bias, p.pi_delta, p.pi_B, p.pi_C)


class TestRnnSsm:
    """Test cases for rnn_ssm_forward."""

    def test_step_activation(self):
        """Test a two-unit flip-flop under the step activation."""
        A = np.array([[-1.0, 0.0], [0.0, 0.0]])
        B = np.array([[1.0], [1.0]])

        states = rnn_ssm_forward(A, B, [[1.0], [1.0], [0.0]], activation="step")

        np.testing.assert_array_equal(states, [[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])

    def test_sign_activation_and_initial_state(self):
        """Test sign keeps negative values and the initial state is used."""
        states = rnn_ssm_forward(-np.eye(2), np.zeros((2, 1)), [[0.0], [0.0]], "sign", initial_state=[1.0, -1.0])

        np.testing.assert_array_equal(states, [[-1.0, 1.0], [1.0, -1.0]])

    def test_unknown_activation(self):
        """Test unknown activations are rejected."""
        with pytest.raises(ValueError):
            rnn_ssm_forward(np.eye(1), np.eye(1), [[1.0]], activation="relu")

    def test_shape_checks(self):
        """Test non-square transitions are rejected."""
        with pytest.raises(ValueError):
            rnn_ssm_forward(np.zeros((2, 3)), np.zeros((2, 1)), [[1.0]])


class TestStack:
    """Test cases for SsmStack and stack_forward."""

    def test_single_layer_without_norm(self):
        """Test a one-layer stack is the projected layer output."""
        rng = np.random.default_rng(0)
        spec = random_layer_spec("constant", 3, 4, rng)
        projection = rng.normal(size=(3, 3))
        stack = SsmStack((StackLayer(spec, projection, nonlinearity="identity"),), norm_placement="none")
        inputs = rng.uniform(-1, 1, size=(10, 3))

        expected = recurrent_forward(spec, inputs).outputs @ projection.T

        np.testing.assert_allclose(stack_forward(stack, inputs), expected)

    def test_forms_agree_through_stack(self):
        """Test a three-layer stack gives the same features in every form."""
        rng = np.random.default_rng(1)
        layers = tuple(
            StackLayer(random_layer_spec(v, 2, 3, rng), rng.normal(size=(2, 2)) / 2, np.zeros(2), "tanh")
            for v in ("diagonal-selective", "input-dependent-full", "constant")
        )
        stack = SsmStack(layers, norm_placement="pre")
        inputs = rng.uniform(-1, 1, size=(24, 2))

        reference = stack_forward(stack, inputs, "recurrent")
        for form in ("convolutional", "scan"):
            np.testing.assert_allclose(stack_forward(stack, inputs, form), reference, rtol=1e-5, atol=1e-8)

    def test_no_residual_between_layers(self):
        """Test a zero projection zeroes the stack output instead of passing the input through."""
        rng = np.random.default_rng(3)
        spec = random_layer_spec("constant", 3, 4, rng)
        stack = SsmStack((StackLayer(spec, np.zeros((3, 3)), nonlinearity="identity"),), norm_placement="none")
        inputs = rng.uniform(-1, 1, size=(6, 3))

        np.testing.assert_array_equal(stack_forward(stack, inputs), np.zeros((6, 3)))

    def test_chain_mismatch(self):
        """Test adjacent layers must agree on feature width."""
        rng = np.random.default_rng(2)
        first = StackLayer(random_layer_spec("constant", 2, 2, rng), np.zeros((5, 2)))
        second = StackLayer(random_layer_spec("constant", 3, 2, rng), np.zeros((3, 3)))

        with pytest.raises(ValueError):
            SsmStack((first, second))

    def test_empty_stack(self):
        """Test a stack needs at least one layer."""
        with pytest.raises(ValueError):
            SsmStack(())
